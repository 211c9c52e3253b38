#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "qaface/evaluate.hpp"
#include "qaface/trainer.hpp"

namespace qaface {

// One self-contained run: training setup, dataset recipe, evaluation knobs.
struct ExperimentConfig {
  TrainConfig train;
  SyntheticDatasetSpec dataset;
  int64_t eval_pairs = 1000;
  std::vector<double> far_grid = {1e-1, 1e-2, 1e-3};
};

// p_{y_i} (and its numerical slope) as a function of cos(theta_{y_i}) on a
// uniform grid, one column per scale value.
struct CurveTable {
  Vector grid;
  std::vector<double> s_values;
  Matrix p;      // points x s
  Matrix slope;  // central differences on the grid, one-sided at the ends
};

// Single-negative sweep: C-1 negative classes pinned at one shared cosine.
CurveTable curve_p_vs_cos(std::span<const double> s_values, int64_t num_classes,
                          double negative_cos, int64_t points = 401);

// Four-class toy: three fixed negative cosines, true-class cosine swept.
CurveTable curve_multiclass(std::span<const double> s_values,
                            const std::array<double, 3>& negative_cosines = {-0.2, 0.0, 0.2},
                            int64_t points = 401);

// Two-class center-drift study: same data and same seed per variant, only the
// injection mode differs.
struct DriftConfig {
  int64_t num_seeds = 20;
  uint64_t base_seed = 1;
  double unrecognizable_fraction = 0.2;
  double hard_fraction = 0.3;
  int64_t num_classes = 2;
  int64_t dim = 8;  // pass-through backbone: input == embedding space
  int64_t samples_per_class = 150;
  int64_t epochs = 40;
  int64_t batch_size = 50;
  // Tier calibration for this experiment: hard samples sit near the
  // magnitude mean so quality weights stay O(1), unrecognizable ones fall
  // below -tau.
  std::array<TierNoise, kNumTiers> tiers = {TierNoise{0.12, 0.0}, TierNoise{0.55, 0.25},
                                            TierNoise{2.5, 0.87}};
  double vpl_lambda = 1.0;
  // Below the global default on purpose: with 20% unrecognizable mass the
  // normalized magnitude of that tier bottoms out near -2, so a threshold of
  // 2 would not separate it.
  double tau = 1.5;
  int64_t start_epoch = 2;
  int64_t delta_t = 1000;
  // Gentle margin point for the drift geometry; the desk default s = 64
  // saturates a two-class problem within an epoch and freezes the centers.
  MarginParams margin{1.0, 1.0, 0.3, 0.0};
};

struct DriftVariantResult {
  InjectionMode mode = InjectionMode::off;
  // Per class, learned raw center vs planted direction. This is the
  // persistent (inference-time) direction and the basis of the comparison.
  std::vector<double> angular_error_rad;
  // Same angle for the last iteration's injected view W + M.
  std::vector<double> effective_error_rad;
  std::vector<int64_t> writes_per_class;
  Matrix displacement;  // per class, unit direction the center moved, zero row if unmoved
  double mean_angular_error_rad = 0.0;
};

struct DriftRun {
  uint64_t seed = 0;
  std::array<DriftVariantResult, 3> variants;  // off, vpl_uniform, quality_aware
};

struct DriftResult {
  std::vector<DriftRun> runs;
  // Fraction of seeds where quality_aware beats vpl_uniform on mean error.
  double quality_win_fraction = 0.0;
  std::array<double, 3> mean_error_rad = {0.0, 0.0, 0.0};
};

DriftResult center_drift_experiment(const DriftConfig& config);

// Magnitude distributions of original and degraded copies, raw and after
// magnitude normalization. Bin ranges are shared across levels.
struct HistogramTable {
  std::vector<double> levels;  // level 0 = originals
  int64_t bins = 0;
  double raw_lo = 0.0, raw_hi = 0.0;
  double norm_lo = 0.0, norm_hi = 0.0;
  Matrix raw_counts;   // levels x bins
  Matrix norm_counts;  // levels x bins
  Vector raw_means;
  Vector norm_means;
  int64_t samples_per_level = 0;
};

HistogramTable magnitude_histogram(const TrainerState& state, const SyntheticDataset& data,
                                   std::span<const double> levels, int64_t bins,
                                   int64_t max_samples, SeededRng& rng);

enum class AblationParam { delta_t, tau, augment_probability };

struct AblationRow {
  double value = 0.0;
  double verification_accuracy = 0.0;
  std::vector<double> tar_at_far;
  double final_epoch_loss = 0.0;
  double mean_ignored_fraction = 0.0;
};

// Train + evaluate once per value, all from the shared seed in the base
// config; only the swept parameter changes between rows.
std::vector<AblationRow> ablation_harness(AblationParam param, std::span<const double> values,
                                          const ExperimentConfig& base);

// Randomized finite-difference audit of every analytic gradient path.
struct GradCheckReport {
  double features_plain = 0.0;
  double centers_plain = 0.0;
  double features_injected = 0.0;
  double margin_backward = 0.0;
  int64_t cases = 0;

  double worst() const;
};

GradCheckReport gradcheck(int64_t cases, uint64_t seed);

}  // namespace qaface
