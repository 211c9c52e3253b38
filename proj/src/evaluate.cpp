#include "qaface/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace qaface {

std::vector<VerificationPair> make_verification_pairs(const SyntheticDataset& data, int64_t count,
                                                      SeededRng& rng) {
  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < data.samples.size(); ++i)
    by_class[data.samples[i].label].push_back(i);

  std::vector<int> multi_classes;  // classes with at least two samples
  for (const auto& [label, members] : by_class)
    if (members.size() >= 2) multi_classes.push_back(label);
  if (multi_classes.empty() || by_class.size() < 2)
    throw Error("dataset too small for verification pairs");

  std::vector<VerificationPair> pairs;
  pairs.reserve(static_cast<size_t>(2 * count));
  for (int64_t k = 0; k < count; ++k) {
    int label = multi_classes[rng.uniform_int(multi_classes.size())];
    const auto& members = by_class[label];
    size_t i = rng.uniform_int(members.size());
    size_t j = rng.uniform_int(members.size() - 1);
    if (j >= i) ++j;
    pairs.push_back({data.samples[members[i]], data.samples[members[j]], true});
  }
  std::vector<int> labels;
  for (const auto& [label, members] : by_class) labels.push_back(label);
  for (int64_t k = 0; k < count; ++k) {
    size_t a = rng.uniform_int(labels.size());
    size_t b = rng.uniform_int(labels.size() - 1);
    if (b >= a) ++b;
    const auto& ma = by_class[labels[a]];
    const auto& mb = by_class[labels[b]];
    pairs.push_back({data.samples[ma[rng.uniform_int(ma.size())]],
                     data.samples[mb[rng.uniform_int(mb.size())]], false});
  }
  return pairs;
}

namespace {

double feature_similarity(const ToyBackbone& net, const Sample& a, const Sample& b) {
  Vector fa = backbone_forward(net, a.input);
  Vector fb = backbone_forward(net, b.input);
  if (l2_norm(fa) <= kNormEps || l2_norm(fb) <= kNormEps) return -1.0;  // degenerate: never accepted
  return cosine_similarity(fa, fb);
}

}  // namespace

EvalReport evaluate_verification(const TrainerState& state,
                                 std::span<const VerificationPair> pairs,
                                 std::span<const double> far_grid) {
  if (pairs.empty()) throw Error("no verification pairs");
  EvalReport report;

  std::vector<std::pair<double, bool>> scored;  // (similarity, same)
  scored.reserve(pairs.size());
  std::vector<double> genuine, impostor;
  for (const auto& p : pairs) {
    double sim = feature_similarity(state.backbone, p.a, p.b);
    scored.push_back({sim, p.same});
    (p.same ? genuine : impostor).push_back(sim);
  }

  // Best global threshold: accept iff score >= threshold. Candidates are
  // -inf plus every observed score, scanned in ascending order; ties keep
  // the lowest threshold.
  std::sort(scored.begin(), scored.end());
  const int64_t total = static_cast<int64_t>(scored.size());
  int64_t positives = 0;
  for (const auto& [s, same] : scored) positives += same ? 1 : 0;
  // With threshold below everything, all accepted: correct = positives.
  int64_t best_correct = positives;
  double best_thr = -std::numeric_limits<double>::infinity();
  int64_t seen_pos = 0, seen_neg = 0;
  for (int64_t i = 0; i < total; ++i) {
    if (scored[static_cast<size_t>(i)].second) ++seen_pos;
    else ++seen_neg;
    // A threshold can only sit between distinct scores (or above the max).
    bool boundary = i + 1 == total ||
                    scored[static_cast<size_t>(i + 1)].first != scored[static_cast<size_t>(i)].first;
    if (!boundary) continue;
    // Threshold just above scored[i]: rejects the first i+1 scores.
    int64_t correct = seen_neg + (positives - seen_pos);
    if (correct > best_correct) {
      best_correct = correct;
      best_thr = i + 1 == total ? scored[static_cast<size_t>(i)].first + 1.0
                                : 0.5 * (scored[static_cast<size_t>(i)].first +
                                         scored[static_cast<size_t>(i + 1)].first);
    }
  }
  report.verification_accuracy = static_cast<double>(best_correct) / static_cast<double>(total);
  report.best_threshold = best_thr;

  // TAR@FAR: threshold sits at the (k+1)-th largest impostor score with
  // k = floor(far * n); accept iff score strictly above it.
  std::sort(impostor.begin(), impostor.end(), std::greater<>());
  for (double far : far_grid) {
    double tar = 1.0;
    if (!genuine.empty() && !impostor.empty()) {
      auto allowed = static_cast<size_t>(far * static_cast<double>(impostor.size()));
      if (allowed >= impostor.size()) {
        tar = 1.0;
      } else {
        double thr = impostor[allowed];
        int64_t accepted = 0;
        for (double g : genuine) accepted += g > thr ? 1 : 0;
        tar = static_cast<double>(accepted) / static_cast<double>(genuine.size());
      }
    }
    report.tar_at_far.push_back({far, tar});
  }

  // Per-tier magnitudes and per-class clean reference directions.
  std::array<double, kNumTiers> mag_sum = {0.0, 0.0, 0.0};
  std::map<int, Vector> clean_direction_sum;
  auto absorb = [&](const Sample& s) {
    Vector f = backbone_forward(state.backbone, s.input);
    double m = l2_norm(f);
    int t = static_cast<int>(s.tier);
    mag_sum[static_cast<size_t>(t)] += m;
    ++report.tier_counts[static_cast<size_t>(t)];
    if (s.tier == Tier::clean && m > kNormEps) {
      auto& acc = clean_direction_sum[s.label];
      if (acc.empty()) acc.assign(f.size(), 0.0);
      for (size_t k = 0; k < f.size(); ++k) acc[k] += f[k] / m;
    }
  };
  for (const auto& p : pairs) {
    absorb(p.a);
    absorb(p.b);
  }
  for (int t = 0; t < kNumTiers; ++t)
    report.mean_magnitude_per_tier[static_cast<size_t>(t)] =
        report.tier_counts[static_cast<size_t>(t)] > 0
            ? mag_sum[static_cast<size_t>(t)] /
                  static_cast<double>(report.tier_counts[static_cast<size_t>(t)])
            : std::numeric_limits<double>::quiet_NaN();

  report.center_angular_error_rad.assign(static_cast<size_t>(state.centers.count()),
                                         std::numeric_limits<double>::quiet_NaN());
  for (const auto& [label, acc] : clean_direction_sum) {
    if (label < 0 || label >= state.centers.count()) continue;
    if (l2_norm(acc) <= kNormEps) continue;
    double c = cosine_similarity(state.centers.raw.row(label), acc);
    report.center_angular_error_rad[static_cast<size_t>(label)] = std::acos(std::clamp(c, -1.0, 1.0));
  }
  return report;
}

}  // namespace qaface
