#include "qaface/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qaface {

namespace {

// Unit-normalized copy of every row. Throws ZeroVectorError on a degenerate row.
Matrix normalized_rows(const Matrix& m, const char* what) {
  Matrix out(m.rows, m.cols);
  for (int64_t r = 0; r < m.rows; ++r) {
    double n = l2_norm(m.row(r));
    if (n <= kNormEps) throw ZeroVectorError(std::string(what) + ": zero row");
    for (int64_t c = 0; c < m.cols; ++c) out.at(r, c) = m.at(r, c) / n;
  }
  return out;
}

// cos(theta_ij) from pre-normalized rows, clamped into [-1, 1]. Both the
// normalized and the margin logits go through this one path so their shared
// entries stay bitwise identical.
Matrix cosine_table(const Matrix& unit_features, const Matrix& unit_centers) {
  Matrix cosines(unit_features.rows, unit_centers.rows);
  for (int64_t i = 0; i < unit_features.rows; ++i)
    for (int64_t j = 0; j < unit_centers.rows; ++j)
      cosines.at(i, j) = std::clamp(dot(unit_features.row(i), unit_centers.row(j)), -1.0, 1.0);
  return cosines;
}

void check_dims(const EmbeddingBatch& batch, const ClassCenters& centers) {
  if (batch.dim() != centers.dim())
    throw DimensionMismatchError("feature dim " + std::to_string(batch.dim()) +
                                 " vs center dim " + std::to_string(centers.dim()));
  batch.validate(centers.count());
}

// Margin transform of the ground-truth cosine and its derivative d(mcos)/d(cos).
// The identity-margin case (m_S=1, m_A=0) bypasses the arccos round trip.
struct MarginCos {
  double value;
  double derivative;
};

MarginCos margin_cosine(double c, const MarginParams& p) {
  if (p.multiplicative == 1.0 && p.additive == 0.0) return {c, 1.0};
  double clamped = std::clamp(c, -1.0 + kAcosEps, 1.0 - kAcosEps);
  double theta = std::acos(clamped);
  double angle = p.multiplicative * theta + p.additive;
  double angle_clamped = std::clamp(angle, 0.0, std::numbers::pi);
  double deriv = 0.0;
  bool cos_interior = c > -1.0 + kAcosEps && c < 1.0 - kAcosEps;
  bool angle_interior = angle > 0.0 && angle < std::numbers::pi;
  if (cos_interior && angle_interior)
    deriv = p.multiplicative * std::sin(angle_clamped) / std::sqrt(1.0 - clamped * clamped);
  return {std::cos(angle_clamped), deriv};
}

}  // namespace

void MarginParams::validate() const {
  if (!(scale > 0.0)) throw InvalidValueError("margin.scale", "must be > 0");
  if (!(multiplicative >= 1.0)) throw InvalidValueError("margin.multiplicative", "must be >= 1");
  if (!(additive >= 0.0 && additive <= std::numbers::pi / 2.0))
    throw InvalidValueError("margin.additive", "must be in [0, pi/2]");
  if (!(cosine >= 0.0 && cosine < 1.0)) throw InvalidValueError("margin.cosine", "must be in [0, 1)");
}

void EmbeddingBatch::validate(int64_t num_classes) const {
  if (features.rows < 1) throw Error("batch must hold at least one sample");
  if (static_cast<int64_t>(labels.size()) != features.rows)
    throw DimensionMismatchError("labels size vs feature rows");
  for (int label : labels)
    if (label < 0 || label >= num_classes)
      throw Error("label " + std::to_string(label) + " out of range");
}

Matrix logits_plain(const EmbeddingBatch& batch, const ClassCenters& centers) {
  check_dims(batch, centers);
  Matrix logits(batch.size(), centers.count());
  for (int64_t i = 0; i < batch.size(); ++i)
    for (int64_t j = 0; j < centers.count(); ++j)
      logits.at(i, j) = dot(centers.raw.row(j), batch.features.row(i));
  return logits;
}

Matrix logits_normalized(const EmbeddingBatch& batch, const ClassCenters& centers, double scale) {
  check_dims(batch, centers);
  Matrix unit_f = normalized_rows(batch.features, "features");
  Matrix unit_c = normalized_rows(centers.raw, "centers");
  Matrix cosines = cosine_table(unit_f, unit_c);
  Matrix logits(batch.size(), centers.count());
  for (int64_t i = 0; i < batch.size(); ++i)
    for (int64_t j = 0; j < centers.count(); ++j) logits.at(i, j) = scale * cosines.at(i, j);
  return logits;
}

Matrix logits_margin(const EmbeddingBatch& batch, const ClassCenters& centers,
                     const MarginParams& params) {
  check_dims(batch, centers);
  params.validate();
  Matrix unit_f = normalized_rows(batch.features, "features");
  Matrix unit_c = normalized_rows(centers.raw, "centers");
  Matrix cosines = cosine_table(unit_f, unit_c);
  Matrix logits(batch.size(), centers.count());
  for (int64_t i = 0; i < batch.size(); ++i) {
    int target = batch.labels[static_cast<size_t>(i)];
    for (int64_t j = 0; j < centers.count(); ++j) {
      double c = cosines.at(i, j);
      if (j == target)
        logits.at(i, j) = params.scale * (margin_cosine(c, params).value - params.cosine);
      else
        logits.at(i, j) = params.scale * c;
    }
  }
  return logits;
}

LossOutput loss_forward(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<int64_t>(labels.size()) != logits.rows)
    throw DimensionMismatchError("labels size vs logit rows");
  LossOutput out;
  out.logits = logits;
  out.probabilities = Matrix(logits.rows, logits.cols);
  double total_log_p = 0.0;
  for (int64_t i = 0; i < logits.rows; ++i) {
    double row_max = logits.at(i, 0);
    for (int64_t j = 1; j < logits.cols; ++j) row_max = std::max(row_max, logits.at(i, j));
    double sum = 0.0;
    for (int64_t j = 0; j < logits.cols; ++j) {
      double e = std::exp(logits.at(i, j) - row_max);
      out.probabilities.at(i, j) = e;
      sum += e;
    }
    for (int64_t j = 0; j < logits.cols; ++j) out.probabilities.at(i, j) /= sum;
    int target = labels[static_cast<size_t>(i)];
    if (target < 0 || target >= logits.cols) throw Error("label out of range");
    total_log_p += (logits.at(i, target) - row_max) - std::log(sum);
  }
  out.loss = -total_log_p / static_cast<double>(logits.rows);
  return out;
}

namespace {

// Shared kernel for the plain and injected feature gradients: per-sample
// row i = sum_j (p_ij - [j == y_i]) * centers_row(j), j ascending.
Matrix feature_gradient_rows(const EmbeddingBatch& batch, const Matrix& center_rows,
                             const Matrix& probabilities) {
  Matrix grad(batch.size(), center_rows.cols);
  for (int64_t i = 0; i < batch.size(); ++i) {
    int target = batch.labels[static_cast<size_t>(i)];
    for (int64_t j = 0; j < center_rows.rows; ++j) {
      double coef = probabilities.at(i, j) - (j == target ? 1.0 : 0.0);
      for (int64_t k = 0; k < center_rows.cols; ++k)
        grad.at(i, k) += coef * center_rows.at(j, k);
    }
  }
  return grad;
}

}  // namespace

Matrix grad_features_plain(const EmbeddingBatch& batch, const ClassCenters& centers,
                           const Matrix& probabilities) {
  check_dims(batch, centers);
  if (probabilities.rows != batch.size() || probabilities.cols != centers.count())
    throw DimensionMismatchError("probabilities shape");
  return feature_gradient_rows(batch, centers.raw, probabilities);
}

Matrix grad_centers_plain(const EmbeddingBatch& batch, const ClassCenters& centers,
                          const Matrix& probabilities) {
  check_dims(batch, centers);
  if (probabilities.rows != batch.size() || probabilities.cols != centers.count())
    throw DimensionMismatchError("probabilities shape");
  Matrix grad(centers.count(), centers.dim());
  for (int64_t i = 0; i < batch.size(); ++i) {
    int target = batch.labels[static_cast<size_t>(i)];
    for (int64_t j = 0; j < centers.count(); ++j) {
      double coef = probabilities.at(i, j) - (j == target ? 1.0 : 0.0);
      for (int64_t k = 0; k < centers.dim(); ++k)
        grad.at(j, k) += coef * batch.features.at(i, k);
    }
  }
  return grad;
}

namespace {

Matrix scaled_by_batch(Matrix m, int64_t batch_size) {
  double inv = 1.0 / static_cast<double>(batch_size);
  for (auto& v : m.values) v *= inv;
  return m;
}

}  // namespace

Matrix grad_features_batch_mean(const EmbeddingBatch& batch, const ClassCenters& centers,
                                const Matrix& probabilities) {
  return scaled_by_batch(grad_features_plain(batch, centers, probabilities), batch.size());
}

Matrix grad_centers_batch_mean(const EmbeddingBatch& batch, const ClassCenters& centers,
                               const Matrix& probabilities) {
  return scaled_by_batch(grad_centers_plain(batch, centers, probabilities), batch.size());
}

Matrix grad_features_injected(const EmbeddingBatch& batch, const ClassCenters& centers,
                              const Matrix& memory_entries, double lambda,
                              const Matrix& probabilities) {
  check_dims(batch, centers);
  if (!memory_entries.same_shape(centers.raw))
    throw DimensionMismatchError("memory shape vs centers shape");
  // lambda == 0 must reduce bitwise to the plain gradient.
  if (lambda == 0.0) return grad_features_plain(batch, centers, probabilities);
  Matrix injected = centers.raw;
  for (size_t k = 0; k < injected.values.size(); ++k)
    injected.values[k] += lambda * memory_entries.values[k];
  return feature_gradient_rows(batch, injected, probabilities);
}

MarginBackward grad_margin_backward(const EmbeddingBatch& batch, const ClassCenters& centers,
                                    const MarginParams& params, const std::vector<int>& labels) {
  check_dims(batch, centers);
  params.validate();
  const int64_t n = batch.size();
  const int64_t c_count = centers.count();
  const int64_t dim = centers.dim();

  Matrix unit_f = normalized_rows(batch.features, "features");
  Matrix unit_c = normalized_rows(centers.raw, "centers");
  Vector feature_norms(static_cast<size_t>(n));
  Vector center_norms(static_cast<size_t>(c_count));
  for (int64_t i = 0; i < n; ++i) feature_norms[static_cast<size_t>(i)] = l2_norm(batch.features.row(i));
  for (int64_t j = 0; j < c_count; ++j) center_norms[static_cast<size_t>(j)] = l2_norm(centers.raw.row(j));

  Matrix cosines = cosine_table(unit_f, unit_c);
  Matrix logits(n, c_count);
  Matrix dlogit_dcos(n, c_count);
  for (int64_t i = 0; i < n; ++i) {
    int target = labels[static_cast<size_t>(i)];
    for (int64_t j = 0; j < c_count; ++j) {
      double c = cosines.at(i, j);
      if (j == target) {
        MarginCos mc = margin_cosine(c, params);
        logits.at(i, j) = params.scale * (mc.value - params.cosine);
        dlogit_dcos.at(i, j) = params.scale * mc.derivative;
      } else {
        logits.at(i, j) = params.scale * c;
        dlogit_dcos.at(i, j) = params.scale;
      }
    }
  }

  MarginBackward result;
  result.output = loss_forward(logits, labels);
  result.d_features = Matrix(n, dim);
  result.d_centers = Matrix(c_count, dim);

  const double inv_n = 1.0 / static_cast<double>(n);
  for (int64_t i = 0; i < n; ++i) {
    int target = labels[static_cast<size_t>(i)];
    double r = feature_norms[static_cast<size_t>(i)];
    for (int64_t j = 0; j < c_count; ++j) {
      double upstream = inv_n * (result.output.probabilities.at(i, j) - (j == target ? 1.0 : 0.0));
      double dcos = upstream * dlogit_dcos.at(i, j);
      if (dcos == 0.0) continue;
      double c = cosines.at(i, j);
      double q = center_norms[static_cast<size_t>(j)];
      // d cos / d x = (v_j - c u_i) / ||x||, d cos / d W_j = (u_i - c v_j) / ||W_j||.
      for (int64_t k = 0; k < dim; ++k) {
        result.d_features.at(i, k) += dcos * (unit_c.at(j, k) - c * unit_f.at(i, k)) / r;
        result.d_centers.at(j, k) += dcos * (unit_f.at(i, k) - c * unit_c.at(j, k)) / q;
      }
    }
  }
  return result;
}

}  // namespace qaface
