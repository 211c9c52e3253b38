#pragma once

#include <span>
#include <utility>

#include "qaface/numerics.hpp"

namespace qaface {

// Floor on sigma: a constant-magnitude batch must not divide by zero.
inline constexpr double kSigmaFloor = 1e-8;

// Which side of the EMA the coefficient alpha sits on. The default weights
// the current batch statistic by alpha; the alternative weights the running
// history by alpha instead.
enum class EmaOrientation { batch_weighted, history_weighted };

// Running mean / std of feature magnitudes.
struct QualityStats {
  double mu = 0.0;
  double sigma = 0.0;
  double alpha = 0.99;
  bool initialized = false;
  EmaOrientation orientation = EmaOrientation::batch_weighted;
};

// Arithmetic mean and population standard deviation (divide by count),
// floored at kSigmaFloor. Throws BatchTooSmallError below 2 entries.
std::pair<double, double> batch_magnitude_stats(std::span<const double> magnitudes);

// One EMA step. The first-ever update initializes mu/sigma to the batch
// statistics directly; afterwards, with the default orientation,
// mu_t = alpha*batch_mean + (1-alpha)*mu_{t-1} and likewise for sigma.
QualityStats ema_update(QualityStats stats, double batch_mean, double batch_std);

// x_hat = (magnitude - mu) / sigma. Throws NotCalibratedError before the
// first update.
double normalize_magnitude(const QualityStats& stats, double magnitude);

struct QualityWeightParams {
  double tau = 2.0;  // ignore threshold on x_hat
};

// Injection weight: 0 for x_hat < -tau, e^{-x_hat} otherwise.
double quality_weight(const QualityWeightParams& params, double x_hat);

}  // namespace qaface
