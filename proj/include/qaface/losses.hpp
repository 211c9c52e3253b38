#pragma once

#include <vector>

#include "qaface/numerics.hpp"

namespace qaface {

// Scale and the three margin types of the combined-margin loss.
// Biases are omitted everywhere; no bias field exists.
struct MarginParams {
  double scale = 64.0;          // s
  double multiplicative = 1.0;  // m_S, applied to the angle
  double additive = 0.5;        // m_A, radians added to the angle
  double cosine = 0.0;          // m_C, subtracted from the cosine

  void validate() const;
};

struct EmbeddingBatch {
  Matrix features;          // N x d, rows are x_i
  std::vector<int> labels;  // y_i in [0, C)

  int64_t size() const { return features.rows; }
  int64_t dim() const { return features.cols; }
  void validate(int64_t num_classes) const;
};

// C x d center matrix W, stored raw; projected to the unit hypersphere at use.
struct ClassCenters {
  Matrix raw;

  int64_t count() const { return raw.rows; }
  int64_t dim() const { return raw.cols; }
};

struct LossOutput {
  double loss = 0.0;
  Matrix probabilities;  // N x C, rows sum to 1
  Matrix logits;         // N x C
};

// Raw inner products <W_j, x_i>, no normalization.
Matrix logits_plain(const EmbeddingBatch& batch, const ClassCenters& centers);

// s * cos(theta_ij) on unit-normalized copies; raw inputs unmodified.
Matrix logits_normalized(const EmbeddingBatch& batch, const ClassCenters& centers, double scale);

// Combined-margin logits: ground-truth column s*(cos(clamp(m_S*theta + m_A)) - m_C),
// negative columns s*cos(theta). The identity-margin case (m_S=1, m_A=0) skips the
// arccos round trip so it reduces bitwise to logits_normalized.
Matrix logits_margin(const EmbeddingBatch& batch, const ClassCenters& centers,
                     const MarginParams& params);

// Numerically stable softmax cross-entropy (per-row max subtraction).
LossOutput loss_forward(const Matrix& logits, const std::vector<int>& labels);

// Per-sample feature gradient of the plain-Softmax loss:
// row i = (p_{i,y_i} - 1) W_{y_i} + sum_{j != y_i} p_{i,j} W_j.
// Written without the 1/N cross-entropy factor; see *_batch_mean.
Matrix grad_features_plain(const EmbeddingBatch& batch, const ClassCenters& centers,
                           const Matrix& probabilities);

// Center gradient of the plain-Softmax loss, also without the 1/N factor:
// row j = sum_{i: y_i=j} (p_{i,y_i} - 1) x_i + sum_{i: y_i != j} p_{i,j} x_i.
Matrix grad_centers_plain(const EmbeddingBatch& batch, const ClassCenters& centers,
                          const Matrix& probabilities);

// Batch-scaled forms: the exact gradients of loss_forward(logits_plain(...)),
// i.e. the per-sample forms times 1/N.
Matrix grad_features_batch_mean(const EmbeddingBatch& batch, const ClassCenters& centers,
                                const Matrix& probabilities);
Matrix grad_centers_batch_mean(const EmbeddingBatch& batch, const ClassCenters& centers,
                               const Matrix& probabilities);

// Injected-center feature gradient: the plain form with every W_j replaced by
// W_j + lambda * M_j. memory_entries is C x d; lambda == 0 short-circuits to
// grad_features_plain so the reduction is bitwise exact.
Matrix grad_features_injected(const EmbeddingBatch& batch, const ClassCenters& centers,
                              const Matrix& memory_entries, double lambda,
                              const Matrix& probabilities);

struct MarginBackward {
  LossOutput output;
  Matrix d_features;  // N x d, gradient w.r.t. raw features
  Matrix d_centers;   // C x d, gradient w.r.t. raw centers
};

// Full analytic backward pass of loss_forward(logits_margin(...)) with respect
// to raw features and raw centers, including the normalization Jacobian.
// Gradients carry the 1/N factor of the loss.
MarginBackward grad_margin_backward(const EmbeddingBatch& batch, const ClassCenters& centers,
                                    const MarginParams& params, const std::vector<int>& labels);

}  // namespace qaface
