#include <doctest.h>

#include <array>
#include <cmath>
#include <cstring>

#include "qaface/dataset.hpp"

using namespace qaface;

TEST_CASE("generation is deterministic per seed") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 20;
  spec.input_dim = 6;
  spec.seed = 99;
  SyntheticDataset a = generate_dataset(spec);
  SyntheticDataset b = generate_dataset(spec);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].label == b.samples[i].label);
    CHECK(a.samples[i].tier == b.samples[i].tier);
    CHECK(std::memcmp(a.samples[i].input.data(), b.samples[i].input.data(),
                      a.samples[i].input.size() * sizeof(double)) == 0);
  }
  spec.seed = 100;
  SyntheticDataset c = generate_dataset(spec);
  CHECK(std::memcmp(a.samples[0].input.data(), c.samples[0].input.data(),
                    a.samples[0].input.size() * sizeof(double)) != 0);
}

TEST_CASE("spec validation") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 1;
  CHECK_THROWS_AS(generate_dataset(spec), InvalidValueError);
  spec = SyntheticDatasetSpec{};
  spec.mix = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(generate_dataset(spec), InvalidValueError);
  spec = SyntheticDatasetSpec{};
  spec.antipodal_directions = true;  // default C = 32
  CHECK_THROWS_AS(generate_dataset(spec), InvalidValueError);
}

TEST_CASE("zero unrecognizable fraction leaves only clean and hard tiers") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 3;
  spec.samples_per_class = 30;
  spec.mix = {0.7, 0.3, 0.0};
  SyntheticDataset data = generate_dataset(spec);
  for (const auto& s : data.samples) CHECK(s.tier != Tier::unrecognizable);
}

TEST_CASE("tier mean cosine ordering over 10^4+ samples") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 3000;
  spec.input_dim = 12;
  spec.seed = 5;
  SyntheticDataset data = generate_dataset(spec);
  std::array<double, kNumTiers> cos_sum = {0.0, 0.0, 0.0};
  std::array<int64_t, kNumTiers> count = {0, 0, 0};
  for (const auto& s : data.samples) {
    double c = cosine_similarity(s.input, data.identity_directions.row(s.label));
    cos_sum[static_cast<size_t>(s.tier)] += c;
    ++count[static_cast<size_t>(s.tier)];
  }
  REQUIRE(count[0] + count[1] + count[2] == 12000);
  double clean = cos_sum[0] / static_cast<double>(count[0]);
  double hard = cos_sum[1] / static_cast<double>(count[1]);
  double unrec = cos_sum[2] / static_cast<double>(count[2]);
  CHECK(clean > hard);
  CHECK(hard > unrec);
  CHECK(std::abs(unrec) < 0.1);  // essentially no identity information
}

TEST_CASE("tier magnitudes follow the attenuation settings") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 2000;
  SyntheticDataset data = generate_dataset(spec);
  std::array<double, kNumTiers> mag_sum = {0.0, 0.0, 0.0};
  std::array<int64_t, kNumTiers> count = {0, 0, 0};
  for (const auto& s : data.samples) {
    mag_sum[static_cast<size_t>(s.tier)] += l2_norm(s.input);
    ++count[static_cast<size_t>(s.tier)];
  }
  for (int t = 0; t < kNumTiers; ++t) {
    double mean = mag_sum[static_cast<size_t>(t)] / static_cast<double>(count[static_cast<size_t>(t)]);
    CHECK(mean == doctest::Approx(1.0 - spec.tiers[static_cast<size_t>(t)].attenuation).epsilon(0.02));
  }
}

TEST_CASE("antipodal directions") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 10;
  spec.antipodal_directions = true;
  SyntheticDataset data = generate_dataset(spec);
  for (int64_t k = 0; k < spec.input_dim; ++k)
    CHECK(data.identity_directions.at(1, k) == -data.identity_directions.at(0, k));
}

TEST_CASE("planted distractor cluster") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 500;
  spec.distractor = DistractorMode::planted_cluster;
  spec.antipodal_directions = true;
  SyntheticDataset data = generate_dataset(spec);
  REQUIRE_FALSE(data.distractor_direction.empty());
  double cos_sum = 0.0;
  int64_t count = 0;
  for (const auto& s : data.samples) {
    if (s.tier != Tier::unrecognizable) continue;
    cos_sum += cosine_similarity(s.input, data.distractor_direction);
    ++count;
  }
  REQUIRE(count > 0);
  CHECK(cos_sum / static_cast<double>(count) > 0.9);
}

TEST_CASE("degrade_sample identity and attenuation") {
  SeededRng rng(21);
  Vector input{0.4, -0.8, 1.2, 0.1};
  CHECK(degrade_sample(input, 0.0, rng) == input);  // bitwise, no rng consumed

  for (int k = 0; k < 100; ++k) {
    double level = rng.uniform();
    Vector out = degrade_sample(input, level, rng);
    CHECK(l2_norm(out) <= l2_norm(input) + 1e-12);
  }
  CHECK_THROWS_AS(degrade_sample(input, 1.5, rng), InvalidValueError);
}

TEST_CASE("degrade_sample at level 1 is directionally independent") {
  SeededRng rng(22);
  const int64_t d = 16;
  Vector input(static_cast<size_t>(d), 0.0);
  input[0] = 2.0;
  double abs_cos_sum = 0.0;
  const int trials = 10000;
  for (int k = 0; k < trials; ++k) {
    Vector out = degrade_sample(input, 1.0, rng);
    abs_cos_sum += std::abs(cosine_similarity(out, input));
  }
  CHECK(abs_cos_sum / trials <= 3.0 / std::sqrt(static_cast<double>(d)));
}

TEST_CASE("train view hides tiers and keeps order") {
  SyntheticDatasetSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 8;
  SyntheticDataset data = generate_dataset(spec);
  TrainView view = make_train_view(data);
  REQUIRE(view.inputs.rows == static_cast<int64_t>(data.samples.size()));
  for (size_t i = 0; i < data.samples.size(); ++i) {
    CHECK(view.labels[i] == data.samples[i].label);
    for (int64_t k = 0; k < view.inputs.cols; ++k)
      CHECK(view.inputs.at(static_cast<int64_t>(i), k) == data.samples[i].input[static_cast<size_t>(k)]);
  }
}
