#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qaface/errors.hpp"

namespace qaface {

// Norms at or below this are treated as zero: direction is numerically meaningless.
inline constexpr double kNormEps = 1e-12;
// Clamp margin applied before arccos; bounds the arccos derivative to ~2236
// so margin-loss gradients stay finite.
inline constexpr double kAcosEps = 1e-7;

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. All reductions over its rows use a fixed
// left-to-right order so results are bit-reproducible.
struct Matrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(int64_t r, int64_t c, double fill = 0.0)
      : rows(r), cols(c), values(static_cast<size_t>(r * c), fill) {}

  double& at(int64_t r, int64_t c) { return values[static_cast<size_t>(r * cols + c)]; }
  double at(int64_t r, int64_t c) const { return values[static_cast<size_t>(r * cols + c)]; }

  std::span<double> row(int64_t r) {
    return {values.data() + r * cols, static_cast<size_t>(cols)};
  }
  std::span<const double> row(int64_t r) const {
    return {values.data() + r * cols, static_cast<size_t>(cols)};
  }

  Vector row_copy(int64_t r) const {
    auto s = row(r);
    return Vector(s.begin(), s.end());
  }

  void set_row(int64_t r, std::span<const double> v) {
    std::copy(v.begin(), v.end(), values.begin() + static_cast<size_t>(r * cols));
  }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

// Deterministic seeded generator. The engine is std::mt19937_64 (fully
// specified by the standard); uniform and normal variates are derived here
// by fixed arithmetic rather than std distributions, whose output is
// implementation-defined. Identical seed => identical stream on any platform.
class SeededRng {
 public:
  SeededRng() : engine_(0) {}
  explicit SeededRng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log argument.
  double uniform_open() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the sine twin is discarded so the
  // generator carries no hidden cache state.
  double normal();

  // Uniform integer in [0, n); rejection sampling, no modulo bias.
  uint64_t uniform_int(uint64_t n);

  // Unit vector uniform on the (dim-1)-sphere.
  Vector unit_vector(int64_t dim);

  std::string serialize() const;
  static SeededRng deserialize(const std::string& text);

  bool operator==(const SeededRng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

// Per-component sub-seed: splitmix64 of the root seed xored with an FNV-1a
// hash of the stream label. One config-level seed reproduces everything.
uint64_t derive_seed(uint64_t root, std::string_view stream);

uint64_t fnv1a64(std::string_view bytes);
uint64_t splitmix64(uint64_t x);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// Throws ZeroVectorError when the norm is at or below kNormEps.
Vector normalize(std::span<const double> v);

// Clamped into [-1, 1] to absorb roundoff. Throws ZeroVectorError.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// arccos of the input clamped into [-1 + kAcosEps, 1 - kAcosEps].
double safe_arccos(double c);

// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h per coordinate.
// Independent oracle for every analytic gradient in the library.
Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double h);

void check_finite(std::span<const double> v, const char* what);

}  // namespace qaface
