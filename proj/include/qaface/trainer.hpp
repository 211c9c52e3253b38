#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "qaface/backbone.hpp"
#include "qaface/dataset.hpp"
#include "qaface/injection.hpp"
#include "qaface/losses.hpp"
#include "qaface/quality.hpp"

namespace qaface {

struct LrSchedule {
  double initial = 0.1;
  double decay_factor = 0.1;
  std::vector<int64_t> decay_epochs = {15, 22, 27};

  double at_epoch(int64_t epoch) const;
  void validate() const;
};

// Which backbone's feature magnitudes feed the EMA statistics.
enum class StatsSource { momentum, main };

// On-the-fly degradation applied per sample per epoch.
struct AugmentParams {
  double probability = 0.0;
  double level_min = 0.25;
  double level_max = 0.95;
};

struct TrainConfig {
  int64_t epochs = 30;
  int64_t batch_size = 128;
  LrSchedule lr;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  bool train_backbone = true;
  int64_t hidden_dim = 32;  // 0 selects the pass-through backbone
  // Train the bias terms. Off by default: a bias-free non-saturating net is
  // scale-equivariant in the input magnitude, which keeps the magnitude
  // signal intact however large the weights drift (the role batch norm plays
  // at full scale). Biases stay exactly zero when off.
  bool backbone_bias = false;
  MarginParams margin;
  InjectionParams injection;
  int64_t delta_t = 1000;
  double ema_alpha = 0.99;
  EmaOrientation ema_orientation = EmaOrientation::batch_weighted;
  StatsSource stats_source = StatsSource::momentum;
  double encoder_gamma = 0.99;
  AugmentParams augment;
  uint64_t seed = 1;

  void validate() const;
};

struct StepMetrics {
  int64_t iteration = 0;
  int64_t epoch = 0;
  double loss = 0.0;
  double mean_p_target = 0.0;
  double ignored_fraction = 0.0;  // fraction of the batch with x_hat < -tau
  double lr = 0.0;
  int64_t memory_writes = 0;
};

struct TrainerState {
  ToyBackbone backbone;
  MomentumEncoder encoder;
  ToyBackbone momentum_net;  // materialization of encoder.parameters
  ClassCenters centers;
  FeatureMemory memory;
  QualityStats stats;
  Vector vel_backbone;  // SGD velocity, flat backbone layout
  Matrix vel_centers;
  SeededRng rng;  // shuffle + augmentation stream
  int64_t epoch = 0;
  int64_t iteration = 0;
  std::vector<uint32_t> epoch_order;  // shuffled sample order of the current epoch
  uint64_t epoch_pos = 0;             // next index into epoch_order
  std::vector<int64_t> class_write_counts;
};

// Fresh state from the config seed: "init" sub-seed drives backbone and
// center draws, "train" seeds the shuffle/augmentation stream.
TrainerState init_trainer(const TrainConfig& config, const SyntheticDatasetSpec& spec);

// One iteration: main forward, momentum forward, EMA stats update, memory
// writes (mode- and epoch-gated), effective centers, margin loss backward,
// SGD on backbone and raw centers, momentum encoder update.
StepMetrics train_step(TrainerState& state, const TrainConfig& config,
                       const Matrix& batch_inputs, const std::vector<int>& batch_labels);

struct TrainOptions {
  int64_t stop_after_iterations = -1;  // global iteration count; -1 runs to completion
  std::function<void(const StepMetrics&)> on_step;
  // Read-only look at the state after each completed step.
  std::function<void(const TrainerState&, const StepMetrics&)> inspect;
};

struct TrainResult {
  std::vector<StepMetrics> history;
};

// Epoch loop with per-epoch shuffling and on-the-fly augmentation. Resumes
// from whatever (epoch, epoch_pos, epoch_order) the state carries. The last
// partial batch of an epoch is dropped.
TrainResult train(TrainerState& state, const TrainConfig& config, const TrainView& view,
                  const TrainOptions& options = {});

// Classical momentum step: v = momentum*v + (g + weight_decay*theta);
// theta -= lr*v.
void sgd_update(std::span<double> params, std::span<double> velocity,
                std::span<const double> grads, double lr, double momentum, double weight_decay);

std::string format_metrics_line(const StepMetrics& m);

}  // namespace qaface
