#include "qaface/injection.hpp"

#include <cmath>

namespace qaface {

void InjectionParams::validate() const {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw InvalidValueError("injection.tau", "must be finite and >= 0");
  if (!(lambda >= 0.0)) throw InvalidValueError("injection.lambda", "must be >= 0");
  if (start_epoch < 0) throw InvalidValueError("injection.start_epoch", "must be >= 0");
}

bool memory_write(FeatureMemory& memory, int64_t class_id, std::span<const double> feature,
                  double x_hat, int64_t iteration, const InjectionParams& params) {
  if (class_id < 0 || class_id >= memory.num_classes())
    throw DimensionMismatchError("memory class id out of range");
  if (static_cast<int64_t>(feature.size()) != memory.entries.cols)
    throw DimensionMismatchError("feature dim vs memory dim");
  if (params.mode == InjectionMode::off) return false;

  double weight;
  if (params.mode == InjectionMode::quality_aware) {
    weight = quality_weight(QualityWeightParams{params.tau}, x_hat);
    if (weight == 0.0) return false;  // ignored, not recorded
  } else {
    weight = params.lambda;
  }

  Vector unit = normalize(feature);  // throws ZeroVectorError
  auto row = memory.entries.row(class_id);
  for (size_t k = 0; k < unit.size(); ++k) row[k] = weight * unit[k];
  memory.last_write[static_cast<size_t>(class_id)] = iteration;
  return true;
}

bool memory_fresh(const FeatureMemory& memory, int64_t class_id, int64_t current_iteration) {
  int64_t stamp = memory.last_write[static_cast<size_t>(class_id)];
  if (stamp == kNeverWritten) return false;
  return current_iteration - stamp <= memory.delta_t_max;
}

ClassCenters effective_centers(const ClassCenters& centers, const FeatureMemory& memory,
                               int64_t current_iteration, const InjectionParams& params) {
  if (params.mode == InjectionMode::off || params.in_place) return centers;
  if (!memory.entries.same_shape(centers.raw))
    throw DimensionMismatchError("memory shape vs centers shape");
  ClassCenters derived = centers;
  for (int64_t j = 0; j < centers.count(); ++j) {
    if (!memory_fresh(memory, j, current_iteration)) continue;
    auto dst = derived.raw.row(j);
    auto src = memory.entries.row(j);
    for (size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  return derived;
}

void momentum_update(MomentumEncoder& encoder, std::span<const double> main_parameters) {
  if (encoder.parameters.size() != main_parameters.size())
    throw DimensionMismatchError("encoder parameter count vs main");
  for (size_t k = 0; k < main_parameters.size(); ++k)
    encoder.parameters[k] = encoder.gamma * encoder.parameters[k] +
                            (1.0 - encoder.gamma) * main_parameters[k];
}

}  // namespace qaface
