#include "qaface/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace qaface {

namespace {

Vector uniform_grid(int64_t points) {
  Vector grid(static_cast<size_t>(points));
  for (int64_t g = 0; g < points; ++g)
    grid[static_cast<size_t>(g)] = -1.0 + 2.0 * static_cast<double>(g) / static_cast<double>(points - 1);
  return grid;
}

// p of the true class against fixed negative cosines, stable in s up to 64.
double true_class_probability(double s, double cos_true, std::span<const double> neg_cosines) {
  double z_true = s * cos_true;
  double m = z_true;
  for (double c : neg_cosines) m = std::max(m, s * c);
  double num = std::exp(z_true - m);
  double den = num;
  for (double c : neg_cosines) den += std::exp(s * c - m);
  return num / den;
}

void fill_slopes(CurveTable& table) {
  const int64_t points = static_cast<int64_t>(table.grid.size());
  table.slope = Matrix(points, static_cast<int64_t>(table.s_values.size()));
  for (size_t si = 0; si < table.s_values.size(); ++si) {
    for (int64_t g = 0; g < points; ++g) {
      int64_t lo = std::max<int64_t>(g - 1, 0);
      int64_t hi = std::min<int64_t>(g + 1, points - 1);
      double dy = table.p.at(hi, static_cast<int64_t>(si)) - table.p.at(lo, static_cast<int64_t>(si));
      double dx = table.grid[static_cast<size_t>(hi)] - table.grid[static_cast<size_t>(lo)];
      table.slope.at(g, static_cast<int64_t>(si)) = dy / dx;
    }
  }
}

}  // namespace

CurveTable curve_p_vs_cos(std::span<const double> s_values, int64_t num_classes,
                          double negative_cos, int64_t points) {
  if (points < 2) throw InvalidValueError("curves.points", "must be >= 2");
  if (num_classes < 2) throw InvalidValueError("curves.classes", "must be >= 2");
  CurveTable table;
  table.grid = uniform_grid(points);
  table.s_values.assign(s_values.begin(), s_values.end());
  table.p = Matrix(points, static_cast<int64_t>(s_values.size()));
  Vector negatives(static_cast<size_t>(num_classes - 1), negative_cos);
  for (size_t si = 0; si < table.s_values.size(); ++si)
    for (int64_t g = 0; g < points; ++g)
      table.p.at(g, static_cast<int64_t>(si)) =
          true_class_probability(table.s_values[si], table.grid[static_cast<size_t>(g)], negatives);
  fill_slopes(table);
  return table;
}

CurveTable curve_multiclass(std::span<const double> s_values,
                            const std::array<double, 3>& negative_cosines, int64_t points) {
  if (points < 2) throw InvalidValueError("curves.points", "must be >= 2");
  CurveTable table;
  table.grid = uniform_grid(points);
  table.s_values.assign(s_values.begin(), s_values.end());
  table.p = Matrix(points, static_cast<int64_t>(s_values.size()));
  for (size_t si = 0; si < table.s_values.size(); ++si)
    for (int64_t g = 0; g < points; ++g)
      table.p.at(g, static_cast<int64_t>(si)) = true_class_probability(
          table.s_values[si], table.grid[static_cast<size_t>(g)], negative_cosines);
  fill_slopes(table);
  return table;
}

namespace {

TrainConfig drift_train_config(const DriftConfig& config, uint64_t root_seed,
                               const InjectionParams& injection) {
  TrainConfig train;
  train.epochs = config.epochs;
  train.batch_size = config.batch_size;
  // Unsaturated recipe: at the drift scale (s around 1) the loss keeps
  // rotating the centers all the way to the sample mean, while momentum or a
  // weak decay would let the center norms inflate and freeze the rotation.
  train.lr.initial = 0.5;
  train.lr.decay_factor = 0.1;
  train.lr.decay_epochs = {config.epochs / 2, (3 * config.epochs) / 4};
  train.sgd_momentum = 0.0;
  train.weight_decay = 1e-2;
  train.hidden_dim = 0;  // operate directly in feature space
  train.train_backbone = false;
  train.margin = config.margin;
  train.injection = injection;
  train.delta_t = config.delta_t;
  train.seed = root_seed;
  return train;
}

DriftVariantResult run_drift_variant(const DriftConfig& config, uint64_t root_seed,
                                     const SyntheticDataset& data,
                                     const SyntheticDatasetSpec& spec,
                                     const InjectionParams& injection) {
  TrainConfig train_cfg = drift_train_config(config, root_seed, injection);
  TrainerState state = init_trainer(train_cfg, spec);

  Matrix initial_directions(state.centers.count(), state.centers.dim());
  for (int64_t j = 0; j < state.centers.count(); ++j)
    initial_directions.set_row(j, normalize(state.centers.raw.row(j)));

  TrainView view = make_train_view(data);
  train(state, train_cfg, view);

  ClassCenters effective =
      effective_centers(state.centers, state.memory, state.iteration, injection);

  DriftVariantResult result;
  result.mode = injection.mode;
  result.displacement = Matrix(state.centers.count(), state.centers.dim());
  result.writes_per_class = state.class_write_counts;
  for (int64_t j = 0; j < state.centers.count(); ++j) {
    Vector direction = normalize(state.centers.raw.row(j));
    double c = cosine_similarity(direction, data.identity_directions.row(j));
    result.angular_error_rad.push_back(std::acos(std::clamp(c, -1.0, 1.0)));
    double ce = cosine_similarity(effective.raw.row(j), data.identity_directions.row(j));
    result.effective_error_rad.push_back(std::acos(std::clamp(ce, -1.0, 1.0)));
    Vector moved(direction.size());
    for (size_t k = 0; k < moved.size(); ++k)
      moved[k] = direction[k] - initial_directions.at(j, static_cast<int64_t>(k));
    if (l2_norm(moved) > kNormEps) result.displacement.set_row(j, normalize(moved));
  }
  result.mean_angular_error_rad =
      std::accumulate(result.angular_error_rad.begin(), result.angular_error_rad.end(), 0.0) /
      static_cast<double>(result.angular_error_rad.size());
  return result;
}

}  // namespace

DriftResult center_drift_experiment(const DriftConfig& config) {
  if (config.num_seeds < 1) throw InvalidValueError("drift.seeds", "must be >= 1");
  if (config.unrecognizable_fraction < 0.0 || config.unrecognizable_fraction > 0.9)
    throw InvalidValueError("drift.unrecognizable_fraction", "must be in [0, 0.9]");

  DriftResult result;
  int64_t quality_wins = 0;
  std::array<double, 3> error_sums = {0.0, 0.0, 0.0};

  for (int64_t run_idx = 0; run_idx < config.num_seeds; ++run_idx) {
    uint64_t root = config.base_seed + static_cast<uint64_t>(run_idx);

    SyntheticDatasetSpec spec;
    spec.num_classes = config.num_classes;
    spec.samples_per_class = config.samples_per_class;
    spec.input_dim = config.dim;
    spec.embedding_dim = config.dim;
    double unrec = config.unrecognizable_fraction;
    double hard = std::min(config.hard_fraction, 1.0 - unrec);
    spec.mix = {1.0 - hard - unrec, hard, unrec};
    spec.tiers = config.tiers;
    spec.distractor = DistractorMode::planted_cluster;
    spec.antipodal_directions = config.num_classes == 2;
    spec.seed = derive_seed(root, "dataset");
    SyntheticDataset data = generate_dataset(spec);

    DriftRun run;
    run.seed = root;
    InjectionParams off;
    off.mode = InjectionMode::off;
    InjectionParams vpl;
    vpl.mode = InjectionMode::vpl_uniform;
    vpl.lambda = config.vpl_lambda;
    vpl.start_epoch = config.start_epoch;
    InjectionParams quality;
    quality.mode = InjectionMode::quality_aware;
    quality.tau = config.tau;
    quality.start_epoch = config.start_epoch;

    run.variants[0] = run_drift_variant(config, root, data, spec, off);
    run.variants[1] = run_drift_variant(config, root, data, spec, vpl);
    run.variants[2] = run_drift_variant(config, root, data, spec, quality);
    if (run.variants[2].mean_angular_error_rad < run.variants[1].mean_angular_error_rad)
      ++quality_wins;
    for (int v = 0; v < 3; ++v)
      error_sums[static_cast<size_t>(v)] += run.variants[static_cast<size_t>(v)].mean_angular_error_rad;
    result.runs.push_back(std::move(run));
  }

  result.quality_win_fraction =
      static_cast<double>(quality_wins) / static_cast<double>(config.num_seeds);
  for (int v = 0; v < 3; ++v)
    result.mean_error_rad[static_cast<size_t>(v)] =
        error_sums[static_cast<size_t>(v)] / static_cast<double>(config.num_seeds);
  return result;
}

HistogramTable magnitude_histogram(const TrainerState& state, const SyntheticDataset& data,
                                   std::span<const double> levels, int64_t bins,
                                   int64_t max_samples, SeededRng& rng) {
  if (bins < 1) throw InvalidValueError("histogram.bins", "must be >= 1");
  if (data.samples.empty()) throw Error("empty dataset");

  HistogramTable table;
  table.levels.push_back(0.0);  // originals always included
  for (double level : levels)
    if (level != 0.0) table.levels.push_back(level);
  table.bins = bins;

  // Random subset without replacement, fixed draw order.
  std::vector<uint32_t> indices(data.samples.size());
  std::iota(indices.begin(), indices.end(), 0u);
  int64_t take = std::min<int64_t>(max_samples, static_cast<int64_t>(indices.size()));
  for (int64_t i = 0; i < take; ++i) {
    uint64_t j = static_cast<uint64_t>(i) + rng.uniform_int(indices.size() - static_cast<size_t>(i));
    std::swap(indices[static_cast<size_t>(i)], indices[j]);
  }
  indices.resize(static_cast<size_t>(take));
  table.samples_per_level = take;

  // Magnitudes per level; degraded copies consume rng in fixed order.
  const int64_t num_levels = static_cast<int64_t>(table.levels.size());
  Matrix magnitudes(num_levels, take);
  for (int64_t li = 0; li < num_levels; ++li) {
    double level = table.levels[static_cast<size_t>(li)];
    for (int64_t si = 0; si < take; ++si) {
      const Vector& input = data.samples[indices[static_cast<size_t>(si)]].input;
      Vector probe = level == 0.0 ? input : degrade_sample(input, level, rng);
      magnitudes.at(li, si) = l2_norm(backbone_forward(state.backbone, probe));
    }
  }

  // Normalization uses the trainer's running stats; an uncalibrated state
  // (e.g. an untrained backbone) is calibrated from the originals.
  QualityStats stats = state.stats;
  if (!stats.initialized) {
    auto [mean, stddev] = batch_magnitude_stats(magnitudes.row(0));
    stats = ema_update(stats, mean, stddev);
  }

  Matrix normalized(num_levels, take);
  for (int64_t li = 0; li < num_levels; ++li)
    for (int64_t si = 0; si < take; ++si)
      normalized.at(li, si) = normalize_magnitude(stats, magnitudes.at(li, si));

  auto fill = [&](const Matrix& values, double& lo, double& hi, Matrix& counts, Vector& means,
                  bool floor_at_zero) {
    lo = floor_at_zero ? 0.0 : values.values[0];
    hi = values.values[0];
    for (double v : values.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1.0;
    double width = (hi - lo) / static_cast<double>(bins);
    counts = Matrix(num_levels, bins);
    means = Vector(static_cast<size_t>(num_levels), 0.0);
    for (int64_t li = 0; li < num_levels; ++li) {
      double sum = 0.0;
      for (int64_t si = 0; si < take; ++si) {
        double v = values.at(li, si);
        sum += v;
        auto bin = static_cast<int64_t>((v - lo) / width);
        bin = std::clamp<int64_t>(bin, 0, bins - 1);
        counts.at(li, bin) += 1.0;
      }
      means[static_cast<size_t>(li)] = sum / static_cast<double>(take);
    }
  };
  fill(magnitudes, table.raw_lo, table.raw_hi, table.raw_counts, table.raw_means, true);
  fill(normalized, table.norm_lo, table.norm_hi, table.norm_counts, table.norm_means, false);
  return table;
}

std::vector<AblationRow> ablation_harness(AblationParam param, std::span<const double> values,
                                          const ExperimentConfig& base) {
  if (values.empty()) throw InvalidValueError("ablate.values", "must be nonempty");
  std::vector<AblationRow> rows;
  for (double value : values) {
    ExperimentConfig cfg = base;
    switch (param) {
      case AblationParam::delta_t:
        cfg.train.delta_t = static_cast<int64_t>(std::llround(value));
        break;
      case AblationParam::tau:
        cfg.train.injection.tau = value;
        break;
      case AblationParam::augment_probability:
        cfg.train.augment.probability = value;
        break;
    }
    SyntheticDataset data = generate_dataset(cfg.dataset);
    TrainerState state = init_trainer(cfg.train, cfg.dataset);
    TrainView view = make_train_view(data);
    TrainResult trained = train(state, cfg.train, view);

    AblationRow row;
    row.value = value;
    double ignored_sum = 0.0;
    for (const auto& m : trained.history) ignored_sum += m.ignored_fraction;
    row.mean_ignored_fraction =
        trained.history.empty() ? 0.0 : ignored_sum / static_cast<double>(trained.history.size());
    if (!trained.history.empty()) {
      int64_t last_epoch = trained.history.back().epoch;
      double loss_sum = 0.0;
      int64_t count = 0;
      for (const auto& m : trained.history)
        if (m.epoch == last_epoch) {
          loss_sum += m.loss;
          ++count;
        }
      row.final_epoch_loss = loss_sum / static_cast<double>(count);
    }

    SeededRng eval_rng(derive_seed(cfg.train.seed, "eval"));
    auto pairs = make_verification_pairs(data, cfg.eval_pairs, eval_rng);
    EvalReport report = evaluate_verification(state, pairs, cfg.far_grid);
    row.verification_accuracy = report.verification_accuracy;
    for (const auto& [far, tar] : report.tar_at_far) row.tar_at_far.push_back(tar);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

// max |a - b| over entries, relative to the gradient scale.
double relative_error(const Matrix& analytic, const Matrix& oracle) {
  double scale = 1e-8;
  double diff = 0.0;
  for (size_t k = 0; k < analytic.values.size(); ++k) {
    scale = std::max({scale, std::abs(analytic.values[k]), std::abs(oracle.values[k])});
    diff = std::max(diff, std::abs(analytic.values[k] - oracle.values[k]));
  }
  return diff / scale;
}

Matrix random_rows(SeededRng& rng, int64_t rows, int64_t cols, double spread, double min_norm) {
  Matrix m(rows, cols);
  for (int64_t r = 0; r < rows; ++r) {
    do {
      for (int64_t c = 0; c < cols; ++c) m.at(r, c) = spread * rng.normal();
    } while (l2_norm(m.row(r)) < min_norm);
  }
  return m;
}

constexpr double kFdStep = 1e-5;

// Central differences of a scalar loss over every entry of a matrix-valued
// argument, via mutate-and-eval on a scratch copy.
template <typename LossFn>
Matrix fd_over_matrix(Matrix subject, const LossFn& loss) {
  Matrix grad(subject.rows, subject.cols);
  for (size_t k = 0; k < subject.values.size(); ++k) {
    double orig = subject.values[k];
    subject.values[k] = orig + kFdStep;
    double up = loss(subject);
    subject.values[k] = orig - kFdStep;
    double down = loss(subject);
    subject.values[k] = orig;
    grad.values[k] = (up - down) / (2.0 * kFdStep);
  }
  return grad;
}

}  // namespace

double GradCheckReport::worst() const {
  return std::max({features_plain, centers_plain, features_injected, margin_backward});
}

GradCheckReport gradcheck(int64_t cases, uint64_t seed) {
  SeededRng rng(seed);
  GradCheckReport report;
  report.cases = cases;

  for (int64_t case_idx = 0; case_idx < cases; ++case_idx) {
    const int64_t d = 2 + static_cast<int64_t>(rng.uniform_int(7));   // 2..8
    const int64_t c = 2 + static_cast<int64_t>(rng.uniform_int(9));   // 2..10
    const int64_t n = 2 + static_cast<int64_t>(rng.uniform_int(5));   // 2..6

    EmbeddingBatch batch;
    batch.features = random_rows(rng, n, d, 0.7, 0.3);
    batch.labels.resize(static_cast<size_t>(n));
    for (auto& label : batch.labels) label = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(c)));
    ClassCenters centers{random_rows(rng, c, d, 0.7, 0.3)};
    const double inv_n = 1.0 / static_cast<double>(n);

    // Eq.-1 feature and center gradients against the composed plain loss.
    {
      Matrix probs = loss_forward(logits_plain(batch, centers), batch.labels).probabilities;
      Matrix analytic_f = grad_features_batch_mean(batch, centers, probs);
      Matrix fd_f = fd_over_matrix(batch.features, [&](const Matrix& feats) {
        EmbeddingBatch probe{feats, batch.labels};
        return loss_forward(logits_plain(probe, centers), batch.labels).loss;
      });
      report.features_plain = std::max(report.features_plain, relative_error(analytic_f, fd_f));

      Matrix analytic_c = grad_centers_batch_mean(batch, centers, probs);
      Matrix fd_c = fd_over_matrix(centers.raw, [&](const Matrix& raw) {
        return loss_forward(logits_plain(batch, ClassCenters{raw}), batch.labels).loss;
      });
      report.centers_plain = std::max(report.centers_plain, relative_error(analytic_c, fd_c));
    }

    // Injected-center feature gradient against the loss built on W + lambda*M.
    {
      double lambda = 0.25 + 0.5 * rng.uniform();
      Matrix memory = random_rows(rng, c, d, 0.5, 0.0);
      Matrix injected = centers.raw;
      for (size_t k = 0; k < injected.values.size(); ++k)
        injected.values[k] += lambda * memory.values[k];
      Matrix probs =
          loss_forward(logits_plain(batch, ClassCenters{injected}), batch.labels).probabilities;
      Matrix analytic = grad_features_injected(batch, centers, memory, lambda, probs);
      for (auto& v : analytic.values) v *= inv_n;
      Matrix fd = fd_over_matrix(batch.features, [&](const Matrix& feats) {
        EmbeddingBatch probe{feats, batch.labels};
        return loss_forward(logits_plain(probe, ClassCenters{injected}), batch.labels).loss;
      });
      report.features_injected = std::max(report.features_injected, relative_error(analytic, fd));
    }

    // Full margin backward, s alternating between 1 and 64. Cases whose
    // true-class angle sits within FD reach of a clamp kink are re-rolled:
    // central differences are invalid across a kink.
    {
      MarginParams params;
      params.scale = case_idx % 2 == 0 ? 1.0 : 64.0;
      params.multiplicative = case_idx % 3 == 0 ? 1.0 + 0.5 * rng.uniform() : 1.0;
      params.additive = 0.5 * rng.uniform();
      params.cosine = 0.35 * rng.uniform();

      EmbeddingBatch margin_batch = batch;
      ClassCenters margin_centers = centers;
      auto near_kink = [&]() {
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t j = 0; j < c; ++j) {
            double cos_ij =
                cosine_similarity(margin_batch.features.row(i), margin_centers.raw.row(j));
            if (std::abs(cos_ij) > 1.0 - 1e-3) return true;
            if (j == margin_batch.labels[static_cast<size_t>(i)]) {
              double angle = params.multiplicative * safe_arccos(cos_ij) + params.additive;
              if (angle < 1e-3 || angle > std::numbers::pi - 1e-3) return true;
            }
          }
        }
        return false;
      };
      while (near_kink()) {
        margin_batch.features = random_rows(rng, n, d, 0.7, 0.3);
        margin_centers.raw = random_rows(rng, c, d, 0.7, 0.3);
      }

      MarginBackward back =
          grad_margin_backward(margin_batch, margin_centers, params, margin_batch.labels);
      Matrix fd_f = fd_over_matrix(margin_batch.features, [&](const Matrix& feats) {
        EmbeddingBatch probe{feats, margin_batch.labels};
        return loss_forward(logits_margin(probe, margin_centers, params), margin_batch.labels).loss;
      });
      Matrix fd_c = fd_over_matrix(margin_centers.raw, [&](const Matrix& raw) {
        return loss_forward(logits_margin(margin_batch, ClassCenters{raw}, params),
                            margin_batch.labels)
            .loss;
      });
      report.margin_backward = std::max(report.margin_backward, relative_error(back.d_features, fd_f));
      report.margin_backward = std::max(report.margin_backward, relative_error(back.d_centers, fd_c));
    }
  }
  return report;
}

}  // namespace qaface
