#include "qaface/quality.hpp"

#include <algorithm>
#include <cmath>

namespace qaface {

std::pair<double, double> batch_magnitude_stats(std::span<const double> magnitudes) {
  if (magnitudes.size() < 2) throw BatchTooSmallError();
  double sum = 0.0;
  for (double m : magnitudes) sum += m;
  double mean = sum / static_cast<double>(magnitudes.size());
  double sq = 0.0;
  for (double m : magnitudes) sq += (m - mean) * (m - mean);
  double std_dev = std::sqrt(sq / static_cast<double>(magnitudes.size()));
  return {mean, std::max(std_dev, kSigmaFloor)};
}

QualityStats ema_update(QualityStats stats, double batch_mean, double batch_std) {
  if (!stats.initialized) {
    stats.mu = batch_mean;
    stats.sigma = std::max(batch_std, kSigmaFloor);
    stats.initialized = true;
    return stats;
  }
  double w_batch = stats.orientation == EmaOrientation::batch_weighted
                       ? stats.alpha
                       : 1.0 - stats.alpha;
  stats.mu = w_batch * batch_mean + (1.0 - w_batch) * stats.mu;
  stats.sigma = std::max(w_batch * batch_std + (1.0 - w_batch) * stats.sigma, kSigmaFloor);
  return stats;
}

double normalize_magnitude(const QualityStats& stats, double magnitude) {
  if (!stats.initialized) throw NotCalibratedError();
  return (magnitude - stats.mu) / stats.sigma;
}

double quality_weight(const QualityWeightParams& params, double x_hat) {
  if (x_hat < -params.tau) return 0.0;
  return std::exp(-x_hat);
}

}  // namespace qaface
