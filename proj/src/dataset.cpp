#include "qaface/dataset.hpp"

#include <cmath>
#include <numbers>

namespace qaface {

namespace {

constexpr double kMaxRotation = 0.999 * std::numbers::pi;
constexpr double kDegradeAttenuation = 0.9;  // magnitude factor 1 - 0.9 * level

// Rotates the unit vector u by angle phi along a uniformly random tangent.
Vector rotate_random_tangent(const Vector& u, double phi, SeededRng& rng) {
  Vector tangent(u.size());
  while (true) {
    for (auto& e : tangent) e = rng.normal();
    double along = dot(tangent, u);
    for (size_t k = 0; k < tangent.size(); ++k) tangent[k] -= along * u[k];
    double n = l2_norm(tangent);
    if (n > 1e-9) {
      for (auto& e : tangent) e /= n;
      break;
    }
  }
  Vector out(u.size());
  double c = std::cos(phi);
  double s = std::sin(phi);
  for (size_t k = 0; k < u.size(); ++k) out[k] = c * u[k] + s * tangent[k];
  return out;
}

}  // namespace

void SyntheticDatasetSpec::validate() const {
  if (num_classes < 2) throw InvalidValueError("dataset.num_classes", "must be >= 2");
  if (samples_per_class < 1) throw InvalidValueError("dataset.samples_per_class", "must be >= 1");
  if (input_dim < 2) throw InvalidValueError("dataset.input_dim", "must be >= 2");
  if (embedding_dim < 2) throw InvalidValueError("dataset.embedding_dim", "must be >= 2");
  double sum = 0.0;
  for (double f : mix) {
    if (f < 0.0 || f > 1.0) throw InvalidValueError("dataset.mix", "fractions must be in [0, 1]");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidValueError("dataset.mix", "fractions must sum to 1");
  for (const auto& t : tiers) {
    if (t.angular_std < 0.0) throw InvalidValueError("dataset.angular_std", "must be >= 0");
    if (t.attenuation < 0.0 || t.attenuation >= 1.0)
      throw InvalidValueError("dataset.attenuation", "must be in [0, 1)");
  }
  if (distractor_angular_std < 0.0)
    throw InvalidValueError("dataset.distractor_angular_std", "must be >= 0");
  if (antipodal_directions && num_classes != 2)
    throw InvalidValueError("dataset.antipodal", "requires exactly 2 classes");
}

SyntheticDataset generate_dataset(const SyntheticDatasetSpec& spec) {
  spec.validate();
  SeededRng rng(spec.seed);

  SyntheticDataset data;
  data.identity_directions = Matrix(spec.num_classes, spec.input_dim);
  for (int64_t c = 0; c < spec.num_classes; ++c)
    data.identity_directions.set_row(c, rng.unit_vector(spec.input_dim));
  if (spec.antipodal_directions)
    for (int64_t k = 0; k < spec.input_dim; ++k)
      data.identity_directions.at(1, k) = -data.identity_directions.at(0, k);
  if (spec.distractor == DistractorMode::planted_cluster)
    data.distractor_direction = rng.unit_vector(spec.input_dim);

  // Fixed per-class tier counts: floor the first two, remainder to the last.
  int64_t n_clean = static_cast<int64_t>(spec.mix[0] * static_cast<double>(spec.samples_per_class));
  int64_t n_hard = static_cast<int64_t>(spec.mix[1] * static_cast<double>(spec.samples_per_class));
  int64_t n_unrec = spec.samples_per_class - n_clean - n_hard;
  const std::array<int64_t, kNumTiers> counts = {n_clean, n_hard, n_unrec};

  data.samples.reserve(static_cast<size_t>(spec.num_classes * spec.samples_per_class));
  for (int64_t c = 0; c < spec.num_classes; ++c) {
    Vector identity = data.identity_directions.row_copy(c);
    for (int t = 0; t < kNumTiers; ++t) {
      const TierNoise& noise = spec.tiers[static_cast<size_t>(t)];
      for (int64_t s = 0; s < counts[static_cast<size_t>(t)]; ++s) {
        Vector direction;
        if (static_cast<Tier>(t) == Tier::unrecognizable) {
          if (spec.distractor == DistractorMode::planted_cluster) {
            double phi = std::min(spec.distractor_angular_std * std::abs(rng.normal()), kMaxRotation);
            direction = rotate_random_tangent(data.distractor_direction, phi, rng);
          } else if (noise.angular_std >= std::numbers::pi) {
            direction = rng.unit_vector(spec.input_dim);
          } else {
            double phi = std::min(noise.angular_std * std::abs(rng.normal()), kMaxRotation);
            direction = rotate_random_tangent(identity, phi, rng);
          }
        } else {
          double phi = std::min(noise.angular_std * std::abs(rng.normal()), kMaxRotation);
          direction = rotate_random_tangent(identity, phi, rng);
        }
        double magnitude = (1.0 - noise.attenuation) * std::max(1.0 + 0.05 * rng.normal(), 0.01);
        Sample sample;
        sample.input.resize(static_cast<size_t>(spec.input_dim));
        for (int64_t k = 0; k < spec.input_dim; ++k)
          sample.input[static_cast<size_t>(k)] = magnitude * direction[static_cast<size_t>(k)];
        sample.label = static_cast<int>(c);
        sample.tier = static_cast<Tier>(t);
        data.samples.push_back(std::move(sample));
      }
    }
  }
  return data;
}

Vector degrade_sample(const Vector& input, double level, SeededRng& rng) {
  if (!(level >= 0.0 && level <= 1.0)) throw InvalidValueError("degrade.level", "must be in [0, 1]");
  if (level == 0.0) return input;
  double magnitude = l2_norm(input);
  if (magnitude <= kNormEps) return input;

  Vector unit = input;
  for (auto& e : unit) e /= magnitude;
  Vector noise = rng.unit_vector(static_cast<int64_t>(input.size()));
  Vector blended(input.size());
  for (size_t k = 0; k < input.size(); ++k)
    blended[k] = (1.0 - level) * unit[k] + level * noise[k];
  double bn = l2_norm(blended);
  if (bn <= 1e-9) blended = noise;  // near-antipodal cancellation
  else
    for (auto& e : blended) e /= bn;

  double out_mag = magnitude * (1.0 - kDegradeAttenuation * level);
  for (auto& e : blended) e *= out_mag;
  return blended;
}

TrainView make_train_view(const SyntheticDataset& data) {
  TrainView view;
  if (data.samples.empty()) return view;
  int64_t dim = static_cast<int64_t>(data.samples.front().input.size());
  view.inputs = Matrix(static_cast<int64_t>(data.samples.size()), dim);
  view.labels.reserve(data.samples.size());
  for (size_t i = 0; i < data.samples.size(); ++i) {
    view.inputs.set_row(static_cast<int64_t>(i), data.samples[i].input);
    view.labels.push_back(data.samples[i].label);
  }
  return view;
}

}  // namespace qaface
