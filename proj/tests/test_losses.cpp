#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "qaface/losses.hpp"

using namespace qaface;

namespace {

EmbeddingBatch make_batch(Matrix features, std::vector<int> labels) {
  return EmbeddingBatch{std::move(features), std::move(labels)};
}

Matrix rows(std::initializer_list<Vector> list) {
  int64_t r = static_cast<int64_t>(list.size());
  int64_t c = static_cast<int64_t>(list.begin()->size());
  Matrix m(r, c);
  int64_t i = 0;
  for (const auto& row : list) m.set_row(i++, row);
  return m;
}

Matrix random_rows(SeededRng& rng, int64_t r, int64_t c) {
  Matrix m(r, c);
  for (auto& v : m.values) v = rng.normal();
  for (int64_t i = 0; i < r; ++i)
    if (l2_norm(m.row(i)) < 0.3) {
      for (int64_t j = 0; j < c; ++j) m.at(i, j) += 1.0;
    }
  return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols &&
         std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("logits_plain") {
  auto batch = make_batch(rows({{1.0, 1.0}}), {0});
  ClassCenters centers{rows({{1.0, 1.0}})};
  CHECK(logits_plain(batch, centers).at(0, 0) == 2.0);  // self dot, norm sqrt(2)

  auto ortho = make_batch(rows({{1.0, 0.0}}), {0});
  ClassCenters ortho_centers{rows({{0.0, 1.0}, {0.0, -2.0}})};
  Matrix logits = logits_plain(ortho, ortho_centers);
  CHECK(logits.at(0, 0) == 0.0);
  CHECK(logits.at(0, 1) == 0.0);

  auto pair = make_batch(rows({{1.0, 2.0}}), {0});
  ClassCenters one{rows({{3.0, 4.0}})};
  CHECK(logits_plain(pair, one).at(0, 0) == 11.0);

  ClassCenters wrong{Matrix(1, 3)};
  CHECK_THROWS_AS(logits_plain(pair, wrong), DimensionMismatchError);
}

TEST_CASE("logits_normalized") {
  auto batch = make_batch(rows({{0.3, 0.0}}), {0});
  ClassCenters centers{rows({{7.0, 0.0}})};
  CHECK(logits_normalized(batch, centers, 1.0).at(0, 0) == 1.0);
  CHECK(logits_normalized(batch, centers, 64.0).at(0, 0) == 64.0);

  // Positive rescales leave the logit unchanged; power-of-two rescales are
  // bitwise exact because the normalization path divides them out.
  SeededRng rng(5);
  Matrix f = random_rows(rng, 2, 4);
  Matrix w = random_rows(rng, 3, 4);
  auto base = logits_normalized(make_batch(f, {0, 1}), ClassCenters{w}, 64.0);

  Matrix f5 = f;
  for (auto& v : f5.values) v *= 5.0;
  Matrix w3 = w;
  for (auto& v : w3.values) v *= 3.0;
  auto scaled = logits_normalized(make_batch(f5, {0, 1}), ClassCenters{w3}, 64.0);
  for (size_t k = 0; k < base.values.size(); ++k)
    CHECK(scaled.values[k] == doctest::Approx(base.values[k]).epsilon(1e-12));

  Matrix f4 = f;
  for (auto& v : f4.values) v *= 4.0;
  auto pow2 = logits_normalized(make_batch(f4, {0, 1}), ClassCenters{w}, 64.0);
  CHECK(bitwise_equal(pow2, base));

  auto zero_row = make_batch(rows({{0.0, 0.0, 0.0, 0.0}}), {0});
  CHECK_THROWS_AS(logits_normalized(zero_row, ClassCenters{w}, 1.0), ZeroVectorError);
}

TEST_CASE("logits_margin identity margins reduce bitwise to normalized") {
  SeededRng rng(11);
  MarginParams identity;
  identity.scale = 64.0;
  identity.multiplicative = 1.0;
  identity.additive = 0.0;
  identity.cosine = 0.0;
  for (int k = 0; k < 20; ++k) {
    Matrix f = random_rows(rng, 3, 5);
    Matrix w = random_rows(rng, 4, 5);
    std::vector<int> labels = {static_cast<int>(rng.uniform_int(4)),
                               static_cast<int>(rng.uniform_int(4)),
                               static_cast<int>(rng.uniform_int(4))};
    auto batch = make_batch(f, labels);
    CHECK(bitwise_equal(logits_margin(batch, ClassCenters{w}, identity),
                        logits_normalized(batch, ClassCenters{w}, 64.0)));
  }
}

TEST_CASE("logits_margin margin values") {
  // cos(theta) = 0.8 against the true class, cosine margin 0.35, s = 64.
  auto batch = make_batch(rows({{1.0, 0.0}}), {0});
  ClassCenters centers{rows({{0.8, 0.6}})};
  MarginParams cos_margin;
  cos_margin.scale = 64.0;
  cos_margin.additive = 0.0;
  cos_margin.cosine = 0.35;
  CHECK(logits_margin(batch, centers, cos_margin).at(0, 0) ==
        doctest::Approx(64.0 * 0.45).epsilon(1e-12));

  // theta = 1 rad, additive margin 0.5 => cos(1.5).
  auto angled = make_batch(rows({{std::cos(1.0), std::sin(1.0)}}), {0});
  ClassCenters axis{rows({{1.0, 0.0}})};
  MarginParams arc;
  arc.scale = 1.0;
  arc.additive = 0.5;
  CHECK(logits_margin(angled, axis, arc).at(0, 0) ==
        doctest::Approx(std::cos(1.5)).epsilon(1e-9));
}

TEST_CASE("margin logit non-increasing in the additive margin") {
  auto batch = make_batch(rows({{std::cos(0.7), std::sin(0.7)}}), {0});
  ClassCenters axis{rows({{1.0, 0.0}, {0.0, 1.0}})};
  double prev = std::numeric_limits<double>::infinity();
  for (double m_a = 0.0; m_a <= 1.5; m_a += 0.05) {
    MarginParams p;
    p.scale = 16.0;
    p.additive = m_a;
    double logit = logits_margin(batch, axis, p).at(0, 0);
    CHECK(logit <= prev + 1e-12);
    prev = logit;
  }
}

TEST_CASE("loss_forward") {
  Matrix equal(1, 4, 1.7);
  LossOutput sym = loss_forward(equal, {2});
  CHECK(sym.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  for (int64_t j = 0; j < 4; ++j)
    CHECK(sym.probabilities.at(0, j) == doctest::Approx(0.25).epsilon(1e-12));

  Matrix confident(1, 3);
  confident.at(0, 0) = 1000.0;
  LossOutput limit = loss_forward(confident, {0});
  CHECK(limit.loss < 1e-12);
  CHECK(limit.loss >= 0.0);

  Matrix two(1, 2);
  two.at(0, 0) = 2.0;
  LossOutput pair = loss_forward(two, {0});
  CHECK(pair.probabilities.at(0, 0) == doctest::Approx(0.8807970779778823).epsilon(1e-12));
  CHECK(pair.loss == doctest::Approx(0.126928011042973).epsilon(1e-10));
}

TEST_CASE("probability rows sum to one under s=64 logits") {
  SeededRng rng(23);
  for (int k = 0; k < 200; ++k) {
    int64_t c = 2 + static_cast<int64_t>(rng.uniform_int(30));
    Matrix logits(1, c);
    for (auto& v : logits.values) v = 128.0 * rng.uniform() - 64.0;
    LossOutput out = loss_forward(logits, {0});
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      double p = out.probabilities.at(0, j);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("grad_features_plain special cases") {
  Matrix w = rows({{1.0, 2.0}, {-1.0, 0.5}});
  auto batch = make_batch(rows({{0.4, 0.2}}), {0});

  Matrix perfect(1, 2);
  perfect.at(0, 0) = 1.0;
  Matrix g = grad_features_plain(batch, ClassCenters{w}, perfect);
  CHECK(g.at(0, 0) == 0.0);
  CHECK(g.at(0, 1) == 0.0);

  Matrix half(1, 2, 0.5);
  Matrix gh = grad_features_plain(batch, ClassCenters{w}, half);
  CHECK(gh.at(0, 0) == doctest::Approx(-0.5 * 1.0 + 0.5 * -1.0).epsilon(1e-14));
  CHECK(gh.at(0, 1) == doctest::Approx(-0.5 * 2.0 + 0.5 * 0.5).epsilon(1e-14));
}

TEST_CASE("grad_centers_plain special cases") {
  auto batch = make_batch(rows({{0.7, -0.3}}), {1});
  Matrix w = rows({{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}});

  // Sample of class 1 predicted perfectly: row 1 gradient vanishes; a class
  // absent from the batch with zero probability mass gets a zero row.
  Matrix p(1, 3);
  p.at(0, 1) = 1.0;
  Matrix g = grad_centers_plain(batch, ClassCenters{w}, p);
  for (int64_t j : {1, 2})
    for (int64_t k = 0; k < 2; ++k) CHECK(g.at(j, k) == 0.0);
}

TEST_CASE("plain gradients match the finite-difference oracle") {
  // The oracle differentiates loss_forward(logits_plain(...)), which carries
  // the 1/N factor, so it is compared to the batch-mean forms.
  SeededRng rng(31);
  const double h = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    int64_t d = 3, c = 4, n = 5;
    Matrix f = random_rows(rng, n, d);
    Matrix w = random_rows(rng, c, d);
    std::vector<int> labels;
    for (int64_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.uniform_int(c)));
    auto batch = make_batch(f, labels);
    ClassCenters centers{w};
    Matrix probs = loss_forward(logits_plain(batch, centers), labels).probabilities;

    Matrix gf = grad_features_batch_mean(batch, centers, probs);
    for (int64_t i = 0; i < n; ++i) {
      Vector row = f.row_copy(i);
      auto loss_of = [&](const Vector& x) {
        Matrix probe = f;
        probe.set_row(i, x);
        return loss_forward(logits_plain(make_batch(probe, labels), centers), labels).loss;
      };
      Vector fd = finite_difference_gradient(loss_of, row, h);
      for (int64_t k = 0; k < d; ++k) {
        double rel = std::abs(gf.at(i, k) - fd[static_cast<size_t>(k)]) /
                     std::max({1e-8, std::abs(fd[static_cast<size_t>(k)]), std::abs(gf.at(i, k))});
        CHECK(rel <= 1e-6);
      }
    }

    Matrix gw = grad_centers_batch_mean(batch, centers, probs);
    for (int64_t j = 0; j < c; ++j) {
      Vector row = w.row_copy(j);
      auto loss_of = [&](const Vector& x) {
        Matrix probe = w;
        probe.set_row(j, x);
        return loss_forward(logits_plain(batch, ClassCenters{probe}), labels).loss;
      };
      Vector fd = finite_difference_gradient(loss_of, row, h);
      for (int64_t k = 0; k < d; ++k) {
        double rel = std::abs(gw.at(j, k) - fd[static_cast<size_t>(k)]) /
                     std::max({1e-8, std::abs(fd[static_cast<size_t>(k)]), std::abs(gw.at(j, k))});
        CHECK(rel <= 1e-6);
      }
    }
  }
}

TEST_CASE("grad_features_injected") {
  SeededRng rng(41);
  Matrix f = random_rows(rng, 3, 4);
  Matrix w = random_rows(rng, 5, 4);
  Matrix m = random_rows(rng, 5, 4);
  std::vector<int> labels = {0, 2, 4};
  auto batch = make_batch(f, labels);
  ClassCenters centers{w};
  Matrix probs = loss_forward(logits_plain(batch, centers), labels).probabilities;

  // lambda = 0 is bitwise the plain gradient.
  CHECK(bitwise_equal(grad_features_injected(batch, centers, m, 0.0, probs),
                      grad_features_plain(batch, centers, probs)));

  // M = W, lambda = 1 doubles the gradient exactly (p held fixed).
  Matrix doubled = grad_features_injected(batch, centers, w, 1.0, probs);
  Matrix plain = grad_features_plain(batch, centers, probs);
  for (size_t k = 0; k < plain.values.size(); ++k)
    CHECK(doubled.values[k] == 2.0 * plain.values[k]);

  Matrix bad(4, 4);
  CHECK_THROWS_AS(grad_features_injected(batch, centers, bad, 0.5, probs),
                  DimensionMismatchError);
}

TEST_CASE("injected gradient matches the oracle on the injected loss") {
  SeededRng rng(43);
  const double h = 1e-5;
  for (int rep = 0; rep < 10; ++rep) {
    int64_t d = 4, c = 3, n = 4;
    Matrix f = random_rows(rng, n, d);
    Matrix w = random_rows(rng, c, d);
    Matrix m = random_rows(rng, c, d);
    double lambda = 0.25 + 0.5 * rng.uniform();
    std::vector<int> labels;
    for (int64_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.uniform_int(c)));
    auto batch = make_batch(f, labels);

    Matrix injected = w;
    for (size_t k = 0; k < injected.values.size(); ++k) injected.values[k] += lambda * m.values[k];
    Matrix probs =
        loss_forward(logits_plain(batch, ClassCenters{injected}), labels).probabilities;
    Matrix analytic = grad_features_injected(batch, ClassCenters{w}, m, lambda, probs);
    for (auto& v : analytic.values) v /= static_cast<double>(n);

    for (int64_t i = 0; i < n; ++i) {
      auto loss_of = [&](const Vector& x) {
        Matrix probe = f;
        probe.set_row(i, x);
        return loss_forward(logits_plain(make_batch(probe, labels), ClassCenters{injected}),
                            labels)
            .loss;
      };
      Vector fd = finite_difference_gradient(loss_of, f.row_copy(i), h);
      for (int64_t k = 0; k < d; ++k) {
        double rel = std::abs(analytic.at(i, k) - fd[static_cast<size_t>(k)]) /
                     std::max({1e-8, std::abs(fd[static_cast<size_t>(k)])});
        CHECK(rel <= 1e-6);
      }
    }
  }
}

TEST_CASE("margin backward reduces to the normalized-logit composition") {
  // m_S=1, m_A=0, m_C=0, s=1 with pre-normalized inputs: compare against the
  // independently composed chain grad through s*cos(theta) logits.
  SeededRng rng(53);
  int64_t d = 4, c = 3, n = 3;
  Matrix f(n, d), w(c, d);
  for (int64_t i = 0; i < n; ++i) f.set_row(i, rng.unit_vector(d));
  for (int64_t j = 0; j < c; ++j) w.set_row(j, rng.unit_vector(d));
  std::vector<int> labels = {0, 1, 2};
  auto batch = make_batch(f, labels);
  ClassCenters centers{w};

  MarginParams p;
  p.scale = 1.0;
  p.additive = 0.0;
  MarginBackward back = grad_margin_backward(batch, centers, p, labels);

  LossOutput ref = loss_forward(logits_normalized(batch, centers, 1.0), labels);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int64_t i = 0; i < n; ++i) {
    Vector u = normalize(f.row(i));
    double r = l2_norm(f.row(i));
    for (int64_t k = 0; k < d; ++k) {
      double acc = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        double g = inv_n * (ref.probabilities.at(i, j) - (j == labels[static_cast<size_t>(i)] ? 1.0 : 0.0));
        Vector v = normalize(w.row(j));
        double cos_ij = std::clamp(dot(u, v), -1.0, 1.0);
        acc += g * 1.0 * (v[static_cast<size_t>(k)] - cos_ij * u[static_cast<size_t>(k)]) / r;
      }
      CHECK(back.d_features.at(i, k) == doctest::Approx(acc).epsilon(1e-8));
    }
  }
}

TEST_CASE("margin backward stays finite at the clamp boundary") {
  // Feature exactly aligned with its center: cos theta clamps.
  auto batch = make_batch(rows({{1.0, 0.0}}), {0});
  ClassCenters centers{rows({{1.0, 0.0}, {0.0, 1.0}})};
  MarginParams p;  // ArcFace point, s = 64
  MarginBackward back = grad_margin_backward(batch, centers, p, {0});
  double norm = 0.0;
  for (double v : back.d_features.values) {
    CHECK(std::isfinite(v));
    norm += v * v;
  }
  for (double v : back.d_centers.values) CHECK(std::isfinite(v));
  CHECK(std::sqrt(norm) < 1e6);
}

TEST_CASE("higher scale concentrates probability for a fixed cosine gap") {
  // Restated Fig.-5 behavior: with a fixed positive gap between the true and
  // best negative cosine, larger s never lowers the true-class probability.
  auto batch = make_batch(rows({{std::cos(0.4), std::sin(0.4)}}), {0});
  ClassCenters centers{rows({{1.0, 0.0}, {0.0, 1.0}})};  // gap: cos(0.4) - cos(pi/2 - 0.4)
  double prev = 0.0;
  for (double s : {1.0, 4.0, 16.0, 64.0}) {
    LossOutput out = loss_forward(logits_normalized(batch, centers, s), {0});
    CHECK(out.probabilities.at(0, 0) >= prev);
    prev = out.probabilities.at(0, 0);
  }
}
