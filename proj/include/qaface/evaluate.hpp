#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "qaface/dataset.hpp"
#include "qaface/trainer.hpp"

namespace qaface {

struct VerificationPair {
  Sample a;
  Sample b;
  bool same = false;
};

// count genuine plus count impostor pairs, drawn deterministically.
std::vector<VerificationPair> make_verification_pairs(const SyntheticDataset& data, int64_t count,
                                                      SeededRng& rng);

struct EvalReport {
  double verification_accuracy = 0.0;
  double best_threshold = 0.0;
  std::vector<std::pair<double, double>> tar_at_far;  // (far, tar)
  std::array<double, kNumTiers> mean_magnitude_per_tier = {0.0, 0.0, 0.0};
  std::array<int64_t, kNumTiers> tier_counts = {0, 0, 0};
  // Angle between each raw center and the mean direction of that class's
  // clean-tier features among the evaluated samples; NaN when absent.
  std::vector<double> center_angular_error_rad;
};

// Cosine similarity on unit-normalized main-backbone features; accuracy at
// the best global threshold; TAR by sweeping thresholds over impostor scores.
EvalReport evaluate_verification(const TrainerState& state,
                                 std::span<const VerificationPair> pairs,
                                 std::span<const double> far_grid);

}  // namespace qaface
