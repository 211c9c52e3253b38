#include "qaface/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qaface {

double SeededRng::normal() {
  double u1 = uniform_open();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * M_PI * u2);
}

uint64_t SeededRng::uniform_int(uint64_t n) {
  if (n == 0) return 0;
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

Vector SeededRng::unit_vector(int64_t dim) {
  Vector v(static_cast<size_t>(dim));
  while (true) {
    for (auto& e : v) e = normal();
    double n = l2_norm(v);
    if (n > kNormEps) {
      for (auto& e : v) e /= n;
      return v;
    }
  }
}

std::string SeededRng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

SeededRng SeededRng::deserialize(const std::string& text) {
  SeededRng rng;
  std::istringstream is(text);
  is >> rng.engine_;
  if (is.fail()) throw CorruptFileError("malformed rng state");
  return rng;
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t root, std::string_view stream) {
  return splitmix64(root ^ fnv1a64(stream));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionMismatchError("dot: " + std::to_string(a.size()) + " vs " +
                                 std::to_string(b.size()));
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

Vector normalize(std::span<const double> v) {
  double n = l2_norm(v);
  if (n <= kNormEps) throw ZeroVectorError();
  Vector out(v.begin(), v.end());
  for (auto& e : out) e /= n;
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double na = l2_norm(a);
  double nb = l2_norm(b);
  if (na <= kNormEps || nb <= kNormEps) throw ZeroVectorError();
  double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

double safe_arccos(double c) {
  return std::acos(std::clamp(c, -1.0 + kAcosEps, 1.0 - kAcosEps));
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double h) {
  Vector grad(x.size());
  Vector probe = x;
  for (size_t k = 0; k < x.size(); ++k) {
    double orig = probe[k];
    probe[k] = orig + h;
    double fp = f(probe);
    probe[k] = orig - h;
    double fm = f(probe);
    probe[k] = orig;
    grad[k] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

void check_finite(std::span<const double> v, const char* what) {
  for (double e : v) {
    if (!std::isfinite(e)) throw Error(std::string(what) + ": non-finite entry");
  }
}

}  // namespace qaface
