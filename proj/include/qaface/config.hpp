#pragma once

#include <set>
#include <string>

#include "qaface/experiments.hpp"

namespace qaface {

// Resolved run configuration plus provenance of every key.
struct RunConfig {
  ExperimentConfig exp;
  uint64_t seed = 1;
  std::set<std::string> explicit_keys;
};

RunConfig default_run_config();

// Line-oriented "section.key = value" text; '#' starts a comment. Unknown
// keys are rejected. Every absent key keeps its documented default.
RunConfig parse_config(const std::string& text);

// Sets the root seed and re-derives the per-component sub-seeds.
void apply_seed(RunConfig& config, uint64_t seed);

// Full key = value listing in registry order, canonical formatting; the
// basis of the config hash.
std::string canonical_config(const RunConfig& config);

uint64_t config_hash(const RunConfig& config);

// Canonical listing annotated with the provenance of each value.
std::string run_log(const RunConfig& config);

}  // namespace qaface
