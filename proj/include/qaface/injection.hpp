#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qaface/losses.hpp"
#include "qaface/numerics.hpp"
#include "qaface/quality.hpp"

namespace qaface {

inline constexpr int64_t kNeverWritten = -1;

// Per-class injected-feature memory. Each row stores the already-weighted
// vector (quality weight or lambda baked in at write time); last_write tracks
// the iteration of the most recent write for the staleness gate.
struct FeatureMemory {
  Matrix entries;                   // C x d
  std::vector<int64_t> last_write;  // kNeverWritten until first write
  int64_t delta_t_max = 1000;

  FeatureMemory() = default;
  FeatureMemory(int64_t num_classes, int64_t dim, int64_t delta_t)
      : entries(num_classes, dim),
        last_write(static_cast<size_t>(num_classes), kNeverWritten),
        delta_t_max(delta_t) {}

  int64_t num_classes() const { return entries.rows; }
};

enum class InjectionMode { off, vpl_uniform, quality_aware };

struct InjectionParams {
  double tau = 2.0;         // forwarded to the quality weight
  double lambda = 0.1;      // uniform weight in vpl_uniform mode
  InjectionMode mode = InjectionMode::off;
  int64_t start_epoch = 4;  // memory writes are a no-op before this epoch
  // Literal in-place center mutation instead of the per-iteration additive
  // view. Off by default; kept for comparison experiments.
  bool in_place = false;

  void validate() const;
};

// Slowly updated copy of the backbone parameters; produces the features that
// are memorized and injected.
struct MomentumEncoder {
  std::vector<double> parameters;
  double gamma = 0.99;
};

// Stores weight * normalize(feature) into the class slot and stamps the
// iteration. In quality_aware mode a zero weight leaves the slot and its
// stamp untouched (the sample is ignored, not recorded). Returns whether a
// write happened.
bool memory_write(FeatureMemory& memory, int64_t class_id, std::span<const double> feature,
                  double x_hat, int64_t iteration, const InjectionParams& params);

// True iff the slot was ever written and its age is at most delta_t_max
// (inclusive boundary).
bool memory_fresh(const FeatureMemory& memory, int64_t class_id, int64_t current_iteration);

// Per-iteration additive view: row j = W_j + M_j for every fresh class,
// unchanged otherwise. The stored raw W is never mutated here. mode == off
// (or in_place, where W was already mutated at write time) returns the
// centers as they are.
ClassCenters effective_centers(const ClassCenters& centers, const FeatureMemory& memory,
                               int64_t current_iteration, const InjectionParams& params);

// theta_m := gamma * theta_m + (1 - gamma) * theta_main, elementwise.
void momentum_update(MomentumEncoder& encoder, std::span<const double> main_parameters);

}  // namespace qaface
