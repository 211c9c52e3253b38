#include "qaface/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace qaface {

double LrSchedule::at_epoch(int64_t epoch) const {
  double lr = initial;
  for (int64_t boundary : decay_epochs)
    if (epoch >= boundary) lr *= decay_factor;
  return lr;
}

void LrSchedule::validate() const {
  if (!(initial > 0.0)) throw InvalidValueError("train.lr_initial", "must be > 0");
  if (!(decay_factor > 0.0)) throw InvalidValueError("train.lr_decay_factor", "must be > 0");
  for (size_t k = 1; k < decay_epochs.size(); ++k)
    if (decay_epochs[k] <= decay_epochs[k - 1])
      throw InvalidValueError("train.lr_decay_epochs", "must be strictly increasing");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidValueError("train.epochs", "must be >= 0");
  if (batch_size < 2) throw InvalidValueError("train.batch_size", "must be >= 2");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0))
    throw InvalidValueError("train.sgd_momentum", "must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidValueError("train.weight_decay", "must be >= 0");
  if (hidden_dim < 0) throw InvalidValueError("backbone.hidden_dim", "must be >= 0");
  if (delta_t < 0) throw InvalidValueError("injection.delta_t", "must be >= 0");
  if (!(ema_alpha >= 0.0 && ema_alpha <= 1.0))
    throw InvalidValueError("quality.alpha", "must be in [0, 1]");
  if (!(encoder_gamma >= 0.0 && encoder_gamma <= 1.0))
    throw InvalidValueError("encoder.gamma", "must be in [0, 1]");
  if (!(augment.probability >= 0.0 && augment.probability <= 1.0))
    throw InvalidValueError("augment.probability", "must be in [0, 1]");
  if (!(augment.level_min >= 0.0 && augment.level_min <= augment.level_max &&
        augment.level_max <= 1.0))
    throw InvalidValueError("augment.level_min", "need 0 <= level_min <= level_max <= 1");
  lr.validate();
  margin.validate();
  injection.validate();
}

void sgd_update(std::span<double> params, std::span<double> velocity,
                std::span<const double> grads, double lr, double momentum, double weight_decay) {
  if (params.size() != velocity.size() || params.size() != grads.size())
    throw DimensionMismatchError("sgd buffer sizes");
  for (size_t k = 0; k < params.size(); ++k) {
    velocity[k] = momentum * velocity[k] + (grads[k] + weight_decay * params[k]);
    params[k] -= lr * velocity[k];
  }
}

TrainerState init_trainer(const TrainConfig& config, const SyntheticDatasetSpec& spec) {
  config.validate();
  spec.validate();
  TrainerState state;
  SeededRng init_rng(derive_seed(config.seed, "init"));
  state.backbone = config.hidden_dim == 0
                       ? ToyBackbone::passthrough(spec.input_dim)
                       : ToyBackbone::random_init(spec.input_dim, config.hidden_dim,
                                                  spec.embedding_dim, init_rng);
  if (state.backbone.output_dim != spec.embedding_dim)
    throw DimensionMismatchError("pass-through backbone needs input_dim == embedding_dim");
  state.centers.raw = Matrix(spec.num_classes, spec.embedding_dim);
  for (int64_t c = 0; c < spec.num_classes; ++c)
    state.centers.raw.set_row(c, init_rng.unit_vector(spec.embedding_dim));
  state.encoder.parameters = state.backbone.parameters();
  state.encoder.gamma = config.encoder_gamma;
  state.momentum_net = state.backbone;
  state.memory = FeatureMemory(spec.num_classes, spec.embedding_dim, config.delta_t);
  state.stats.alpha = config.ema_alpha;
  state.stats.orientation = config.ema_orientation;
  state.vel_backbone.assign(static_cast<size_t>(state.backbone.parameter_count()), 0.0);
  state.vel_centers = Matrix(spec.num_classes, spec.embedding_dim);
  state.rng = SeededRng(derive_seed(config.seed, "train"));
  state.class_write_counts.assign(static_cast<size_t>(spec.num_classes), 0);
  return state;
}

StepMetrics train_step(TrainerState& state, const TrainConfig& config,
                       const Matrix& batch_inputs, const std::vector<int>& batch_labels) {
  const int64_t n = batch_inputs.rows;
  if (n < 2) throw BatchTooSmallError();
  if (static_cast<int64_t>(batch_labels.size()) != n)
    throw DimensionMismatchError("batch labels vs inputs");

  // (1) main forward
  std::vector<ForwardCache> caches;
  caches.reserve(static_cast<size_t>(n));
  Matrix features(n, state.backbone.output_dim);
  for (int64_t i = 0; i < n; ++i) {
    caches.push_back(backbone_forward_cached(state.backbone, batch_inputs.row(i)));
    features.set_row(i, caches.back().output);
  }

  // (2) momentum forward: the features that get memorized and injected
  Matrix momentum_features(n, state.momentum_net.output_dim);
  for (int64_t i = 0; i < n; ++i)
    momentum_features.set_row(i, backbone_forward(state.momentum_net, batch_inputs.row(i)));

  // (3) EMA stats over this batch's magnitudes
  Vector magnitudes(static_cast<size_t>(n));
  const Matrix& stat_features =
      config.stats_source == StatsSource::momentum ? momentum_features : features;
  for (int64_t i = 0; i < n; ++i)
    magnitudes[static_cast<size_t>(i)] = l2_norm(stat_features.row(i));
  auto [batch_mean, batch_std] = batch_magnitude_stats(magnitudes);
  state.stats = ema_update(state.stats, batch_mean, batch_std);

  // (4) memory writes, gated on mode and start epoch
  int64_t writes = 0;
  int64_t ignored = 0;
  Vector x_hats(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    x_hats[static_cast<size_t>(i)] =
        normalize_magnitude(state.stats, magnitudes[static_cast<size_t>(i)]);
    if (x_hats[static_cast<size_t>(i)] < -config.injection.tau) ++ignored;
  }
  if (config.injection.mode != InjectionMode::off && state.epoch >= config.injection.start_epoch) {
    for (int64_t i = 0; i < n; ++i) {
      auto feature = momentum_features.row(i);
      if (l2_norm(feature) <= kNormEps) continue;  // degenerate; never injected
      int64_t label = batch_labels[static_cast<size_t>(i)];
      bool wrote = memory_write(state.memory, label, feature, x_hats[static_cast<size_t>(i)],
                                state.iteration, config.injection);
      if (wrote) {
        ++writes;
        ++state.class_write_counts[static_cast<size_t>(label)];
        if (config.injection.in_place) {
          auto dst = state.centers.raw.row(label);
          auto src = state.memory.entries.row(label);
          for (size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
      }
    }
  }

  // (5) per-iteration injected view
  ClassCenters effective =
      effective_centers(state.centers, state.memory, state.iteration, config.injection);

  // (6) margin loss and gradients through the effective centers; the view is
  // additive in W, so d_centers applies to the raw centers directly
  EmbeddingBatch batch{features, batch_labels};
  MarginBackward back = grad_margin_backward(batch, effective, config.margin, batch_labels);

  // (7) SGD on backbone and raw centers
  double lr = config.lr.at_epoch(state.epoch);
  if (config.train_backbone && !state.backbone.is_passthrough()) {
    Vector param_grads(static_cast<size_t>(state.backbone.parameter_count()), 0.0);
    for (int64_t i = 0; i < n; ++i)
      backbone_backward_accumulate(state.backbone, caches[static_cast<size_t>(i)],
                                   back.d_features.row(i), param_grads);
    if (!config.backbone_bias) {
      // Flat layout is w1 | b1 | w2 | b2; zero the bias gradients.
      size_t b1_off = state.backbone.w1.size();
      size_t w2_off = b1_off + state.backbone.b1.size();
      size_t b2_off = w2_off + state.backbone.w2.size();
      std::fill(param_grads.begin() + b1_off, param_grads.begin() + w2_off, 0.0);
      std::fill(param_grads.begin() + b2_off, param_grads.end(), 0.0);
    }
    Vector params = state.backbone.parameters();
    sgd_update(params, state.vel_backbone, param_grads, lr, config.sgd_momentum,
               config.weight_decay);
    state.backbone.set_parameters(params);
  }
  sgd_update(state.centers.raw.values, state.vel_centers.values, back.d_centers.values, lr,
             config.sgd_momentum, config.weight_decay);

  // (8) momentum encoder trails the updated backbone
  momentum_update(state.encoder, state.backbone.parameters());
  state.momentum_net.set_parameters(state.encoder.parameters);

  StepMetrics metrics;
  metrics.iteration = state.iteration;
  metrics.epoch = state.epoch;
  metrics.loss = back.output.loss;
  double p_sum = 0.0;
  for (int64_t i = 0; i < n; ++i)
    p_sum += back.output.probabilities.at(i, batch_labels[static_cast<size_t>(i)]);
  metrics.mean_p_target = p_sum / static_cast<double>(n);
  metrics.ignored_fraction = static_cast<double>(ignored) / static_cast<double>(n);
  metrics.lr = lr;
  metrics.memory_writes = writes;
  ++state.iteration;
  return metrics;
}

TrainResult train(TrainerState& state, const TrainConfig& config, const TrainView& view,
                  const TrainOptions& options) {
  config.validate();
  const int64_t n_data = view.inputs.rows;
  if (n_data < config.batch_size)
    throw InvalidValueError("train.batch_size", "exceeds dataset size");
  const int64_t batches_per_epoch = n_data / config.batch_size;
  const uint64_t usable = static_cast<uint64_t>(batches_per_epoch * config.batch_size);

  TrainResult result;
  Matrix batch_inputs(config.batch_size, view.inputs.cols);
  std::vector<int> batch_labels(static_cast<size_t>(config.batch_size));

  while (state.epoch < config.epochs) {
    if (state.epoch_pos == 0) {
      state.epoch_order.resize(static_cast<size_t>(n_data));
      std::iota(state.epoch_order.begin(), state.epoch_order.end(), 0u);
      for (int64_t i = n_data - 1; i > 0; --i) {
        uint64_t j = state.rng.uniform_int(static_cast<uint64_t>(i) + 1);
        std::swap(state.epoch_order[static_cast<size_t>(i)], state.epoch_order[j]);
      }
    }
    while (state.epoch_pos + static_cast<uint64_t>(config.batch_size) <= usable) {
      for (int64_t b = 0; b < config.batch_size; ++b) {
        uint32_t idx = state.epoch_order[state.epoch_pos + static_cast<uint64_t>(b)];
        auto row = view.inputs.row(idx);
        batch_labels[static_cast<size_t>(b)] = view.labels[idx];
        if (config.augment.probability > 0.0 &&
            state.rng.uniform() < config.augment.probability) {
          double level = config.augment.level_min +
                         (config.augment.level_max - config.augment.level_min) *
                             state.rng.uniform();
          Vector degraded = degrade_sample(Vector(row.begin(), row.end()), level, state.rng);
          batch_inputs.set_row(b, degraded);
        } else {
          batch_inputs.set_row(b, row);
        }
      }
      StepMetrics metrics = train_step(state, config, batch_inputs, batch_labels);
      state.epoch_pos += static_cast<uint64_t>(config.batch_size);
      result.history.push_back(metrics);
      if (options.on_step) options.on_step(metrics);
      if (options.inspect) options.inspect(state, metrics);
      if (options.stop_after_iterations >= 0 && state.iteration >= options.stop_after_iterations) {
        if (state.epoch_pos >= usable) {
          ++state.epoch;
          state.epoch_pos = 0;
          state.epoch_order.clear();
        }
        return result;
      }
    }
    ++state.epoch;
    state.epoch_pos = 0;
    state.epoch_order.clear();
  }
  return result;
}

std::string format_metrics_line(const StepMetrics& m) {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "iter=%lld epoch=%lld loss=%.17g mean_p_target=%.17g ignored_frac=%.17g "
                "lr=%.17g writes=%lld",
                static_cast<long long>(m.iteration), static_cast<long long>(m.epoch), m.loss,
                m.mean_p_target, m.ignored_fraction, m.lr, static_cast<long long>(m.memory_writes));
  return std::string(buf);
}

}  // namespace qaface
