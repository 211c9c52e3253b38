#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "qaface/numerics.hpp"

namespace qaface {

enum class Tier : int { clean = 0, hard = 1, unrecognizable = 2 };
inline constexpr int kNumTiers = 3;

// Per-tier corruption of the planted identity direction: angular noise around
// it (a tier with std >= pi draws its direction uniformly on the sphere) and
// a multiplicative magnitude attenuation.
struct TierNoise {
  double angular_std = 0.0;   // radians
  double attenuation = 0.0;   // in [0, 1); magnitude factor is 1 - attenuation
};

enum class DistractorMode { uniform, planted_cluster };

struct SyntheticDatasetSpec {
  int64_t num_classes = 32;
  int64_t samples_per_class = 200;
  int64_t input_dim = 24;
  int64_t embedding_dim = 16;
  std::array<double, kNumTiers> mix = {0.60, 0.25, 0.15};  // clean, hard, unrecognizable
  std::array<TierNoise, kNumTiers> tiers = {TierNoise{0.12, 0.0}, TierNoise{0.55, 0.42},
                                            TierNoise{4.0, 0.87}};
  // uniform: unrecognizable directions carry no structure; planted_cluster:
  // they cluster around one planted distractor direction (the drift setup).
  DistractorMode distractor = DistractorMode::uniform;
  double distractor_angular_std = 0.25;
  // Two-class option: plant the second identity direction exactly opposite
  // the first (the binary drift geometry).
  bool antipodal_directions = false;
  uint64_t seed = 1;

  void validate() const;
};

struct Sample {
  Vector input;
  int label = 0;
  Tier tier = Tier::clean;  // ground-truth metadata; hidden from the training path
};

struct SyntheticDataset {
  std::vector<Sample> samples;
  Matrix identity_directions;   // C x input_dim unit rows
  Vector distractor_direction;  // empty unless planted_cluster
};

// Deterministic per spec.seed; identical spec => bitwise-identical dataset.
SyntheticDataset generate_dataset(const SyntheticDatasetSpec& spec);

// Blends the input direction toward isotropic noise proportionally to level
// and attenuates the magnitude by (1 - 0.9 * level). Level 0 returns the
// input unchanged; level 1 output direction is independent of the input.
Vector degrade_sample(const Vector& input, double level, SeededRng& rng);

// Tier-free view handed to the training loop; tier is physically absent.
struct TrainView {
  Matrix inputs;            // N x input_dim
  std::vector<int> labels;  // N
};

TrainView make_train_view(const SyntheticDataset& data);

}  // namespace qaface
