#pragma once

#include <cstdint>
#include <string>

#include "qaface/trainer.hpp"

namespace qaface {

inline constexpr uint32_t kCheckpointVersion = 1;

// Text header (magic, version, config hash, counters, blob size), then a
// little-endian binary section with the full trainer state, then an 8-byte
// FNV-1a checksum of everything before it. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const TrainerState& state, uint64_t config_hash);

// Verifies magic/version, checksum, and the config hash (hard error on
// mismatch, nothing partially loaded).
TrainerState load_checkpoint(const std::string& path, uint64_t expected_config_hash);

}  // namespace qaface
