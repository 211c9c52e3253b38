#pragma once

#include <cstdint>
#include <span>

#include "qaface/numerics.hpp"

namespace qaface {

// Two-layer perceptron input_dim -> hidden_dim -> output_dim with a SiLU
// (x * sigmoid(x)) after the first layer: smooth, so finite-difference
// checks are clean, and non-saturating, so feature magnitude tracks input
// magnitude at any weight scale. A
// hidden_dim of 0 selects a parameter-free pass-through (input_dim must equal
// output_dim), used by experiments that operate directly in feature space.
struct ToyBackbone {
  int64_t input_dim = 0;
  int64_t hidden_dim = 0;
  int64_t output_dim = 0;
  Vector w1;  // hidden x input, row-major
  Vector b1;  // hidden
  Vector w2;  // output x hidden, row-major
  Vector b2;  // output

  static ToyBackbone passthrough(int64_t dim);
  static ToyBackbone random_init(int64_t input, int64_t hidden, int64_t output, SeededRng& rng);

  bool is_passthrough() const { return hidden_dim == 0; }
  int64_t parameter_count() const;
  // Flat layout: w1, b1, w2, b2.
  Vector parameters() const;
  void set_parameters(std::span<const double> flat);
};

struct ForwardCache {
  Vector input;
  Vector pre_activation;  // first-layer affine output
  Vector hidden;          // silu(pre_activation)
  Vector output;
};

Vector backbone_forward(const ToyBackbone& net, std::span<const double> input);
ForwardCache backbone_forward_cached(const ToyBackbone& net, std::span<const double> input);

struct BackboneGrads {
  Vector parameters;  // same flat layout as ToyBackbone::parameters()
  Vector input;
};

// Exact chain rule through the cached forward pass.
BackboneGrads backbone_backward(const ToyBackbone& net, const ForwardCache& cache,
                                std::span<const double> upstream);

// In-place accumulation variant used by the training loop, batch order fixed.
void backbone_backward_accumulate(const ToyBackbone& net, const ForwardCache& cache,
                                  std::span<const double> upstream, std::span<double> param_grads);

}  // namespace qaface
