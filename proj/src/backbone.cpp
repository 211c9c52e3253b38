#include "qaface/backbone.hpp"

#include <cmath>

namespace qaface {

namespace {

// Smooth ReLU-like activation: x * sigmoid(x). Unlike a saturating function
// it passes input magnitude through at any weight scale, which the
// magnitude-as-quality analysis depends on, and it stays smooth for clean
// finite-difference checks.
double silu(double z) { return z / (1.0 + std::exp(-z)); }

double silu_derivative(double z) {
  double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

}  // namespace

ToyBackbone ToyBackbone::passthrough(int64_t dim) {
  ToyBackbone net;
  net.input_dim = dim;
  net.hidden_dim = 0;
  net.output_dim = dim;
  return net;
}

ToyBackbone ToyBackbone::random_init(int64_t input, int64_t hidden, int64_t output,
                                     SeededRng& rng) {
  if (hidden == 0) {
    if (input != output)
      throw DimensionMismatchError("pass-through backbone needs input_dim == output_dim");
    return passthrough(input);
  }
  ToyBackbone net;
  net.input_dim = input;
  net.hidden_dim = hidden;
  net.output_dim = output;
  net.w1.resize(static_cast<size_t>(hidden * input));
  net.b1.assign(static_cast<size_t>(hidden), 0.0);
  net.w2.resize(static_cast<size_t>(output * hidden));
  net.b2.assign(static_cast<size_t>(output), 0.0);
  double s1 = 1.0 / std::sqrt(static_cast<double>(input));
  double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& w : net.w1) w = s1 * rng.normal();
  for (auto& w : net.w2) w = s2 * rng.normal();
  return net;
}

int64_t ToyBackbone::parameter_count() const {
  return static_cast<int64_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

Vector ToyBackbone::parameters() const {
  Vector flat;
  flat.reserve(static_cast<size_t>(parameter_count()));
  flat.insert(flat.end(), w1.begin(), w1.end());
  flat.insert(flat.end(), b1.begin(), b1.end());
  flat.insert(flat.end(), w2.begin(), w2.end());
  flat.insert(flat.end(), b2.begin(), b2.end());
  return flat;
}

void ToyBackbone::set_parameters(std::span<const double> flat) {
  if (static_cast<int64_t>(flat.size()) != parameter_count())
    throw DimensionMismatchError("flat parameter count mismatch");
  size_t off = 0;
  for (auto& w : w1) w = flat[off++];
  for (auto& b : b1) b = flat[off++];
  for (auto& w : w2) w = flat[off++];
  for (auto& b : b2) b = flat[off++];
}

ForwardCache backbone_forward_cached(const ToyBackbone& net, std::span<const double> input) {
  if (static_cast<int64_t>(input.size()) != net.input_dim)
    throw DimensionMismatchError("backbone input dim");
  ForwardCache cache;
  cache.input.assign(input.begin(), input.end());
  if (net.is_passthrough()) {
    cache.output = cache.input;
    return cache;
  }
  cache.pre_activation.resize(static_cast<size_t>(net.hidden_dim));
  cache.hidden.resize(static_cast<size_t>(net.hidden_dim));
  for (int64_t h = 0; h < net.hidden_dim; ++h) {
    double acc = net.b1[static_cast<size_t>(h)];
    const double* row = net.w1.data() + h * net.input_dim;
    for (int64_t k = 0; k < net.input_dim; ++k) acc += row[k] * input[static_cast<size_t>(k)];
    cache.pre_activation[static_cast<size_t>(h)] = acc;
    cache.hidden[static_cast<size_t>(h)] = silu(acc);
  }
  cache.output.resize(static_cast<size_t>(net.output_dim));
  for (int64_t o = 0; o < net.output_dim; ++o) {
    double acc = net.b2[static_cast<size_t>(o)];
    const double* row = net.w2.data() + o * net.hidden_dim;
    for (int64_t h = 0; h < net.hidden_dim; ++h) acc += row[h] * cache.hidden[static_cast<size_t>(h)];
    cache.output[static_cast<size_t>(o)] = acc;
  }
  return cache;
}

Vector backbone_forward(const ToyBackbone& net, std::span<const double> input) {
  return backbone_forward_cached(net, input).output;
}

void backbone_backward_accumulate(const ToyBackbone& net, const ForwardCache& cache,
                                  std::span<const double> upstream,
                                  std::span<double> param_grads) {
  if (static_cast<int64_t>(upstream.size()) != net.output_dim)
    throw DimensionMismatchError("upstream dim vs backbone output");
  if (net.is_passthrough()) return;
  if (static_cast<int64_t>(param_grads.size()) != net.parameter_count())
    throw DimensionMismatchError("param grad buffer size");

  const size_t w1_off = 0;
  const size_t b1_off = net.w1.size();
  const size_t w2_off = b1_off + net.b1.size();
  const size_t b2_off = w2_off + net.w2.size();

  // d loss / d hidden, then through tanh.
  Vector d_hidden(static_cast<size_t>(net.hidden_dim), 0.0);
  for (int64_t o = 0; o < net.output_dim; ++o) {
    double u = upstream[static_cast<size_t>(o)];
    param_grads[b2_off + static_cast<size_t>(o)] += u;
    const double* row = net.w2.data() + o * net.hidden_dim;
    double* grow = param_grads.data() + w2_off + o * net.hidden_dim;
    for (int64_t h = 0; h < net.hidden_dim; ++h) {
      grow[h] += u * cache.hidden[static_cast<size_t>(h)];
      d_hidden[static_cast<size_t>(h)] += u * row[h];
    }
  }
  for (int64_t h = 0; h < net.hidden_dim; ++h) {
    double d_pre = d_hidden[static_cast<size_t>(h)] *
                   silu_derivative(cache.pre_activation[static_cast<size_t>(h)]);
    param_grads[b1_off + static_cast<size_t>(h)] += d_pre;
    double* grow = param_grads.data() + w1_off + h * net.input_dim;
    for (int64_t k = 0; k < net.input_dim; ++k)
      grow[k] += d_pre * cache.input[static_cast<size_t>(k)];
  }
}

BackboneGrads backbone_backward(const ToyBackbone& net, const ForwardCache& cache,
                                std::span<const double> upstream) {
  BackboneGrads grads;
  grads.parameters.assign(static_cast<size_t>(net.parameter_count()), 0.0);
  grads.input.assign(static_cast<size_t>(net.input_dim), 0.0);
  if (net.is_passthrough()) {
    grads.input.assign(upstream.begin(), upstream.end());
    return grads;
  }
  backbone_backward_accumulate(net, cache, upstream, grads.parameters);
  // Input gradient: through both layers.
  Vector d_hidden(static_cast<size_t>(net.hidden_dim), 0.0);
  for (int64_t o = 0; o < net.output_dim; ++o) {
    double u = upstream[static_cast<size_t>(o)];
    const double* row = net.w2.data() + o * net.hidden_dim;
    for (int64_t h = 0; h < net.hidden_dim; ++h) d_hidden[static_cast<size_t>(h)] += u * row[h];
  }
  for (int64_t h = 0; h < net.hidden_dim; ++h) {
    double d_pre = d_hidden[static_cast<size_t>(h)] *
                   silu_derivative(cache.pre_activation[static_cast<size_t>(h)]);
    const double* row = net.w1.data() + h * net.input_dim;
    for (int64_t k = 0; k < net.input_dim; ++k)
      grads.input[static_cast<size_t>(k)] += d_pre * row[k];
  }
  return grads;
}

}  // namespace qaface
