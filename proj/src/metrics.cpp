#include "apnea/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "apnea/error.hpp"

namespace apnea::metrics {

MetricSummary mean_std(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyDataset, "metrics", "mean of an empty list");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

namespace {
void check_labels(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::ShapeMismatch, "metrics", "scores and labels differ in length");
  for (int y : labels)
    if (y != 0 && y != 1) throw Error(ErrorCode::ConfigInvalid, "metrics", "labels must be 0 or 1");
}
}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_labels(scores, labels);
  const std::size_t n = scores.size();
  std::uint64_t n_pos = 0;
  for (int y : labels) n_pos += static_cast<std::uint64_t>(y);
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::SingleClass, "metrics", "AUC needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum, with ties sharing their mean rank (1-based).
  std::uint64_t rank_sum2 = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::uint64_t twice_mean_rank = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum2 += twice_mean_rank;
    i = j + 1;
  }
  // 2U = 2 * R_pos - n_pos (n_pos + 1)
  const std::uint64_t u2 = rank_sum2 - n_pos * (n_pos + 1);
  // One correctly rounded division of exact integers: the same double as
  // counting pairs. 1 - auc(flipped) can differ from it in the last bit.
  return static_cast<double>(u2) / static_cast<double>(2 * n_pos * n_neg);
}

Confusion confusion(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw Error(ErrorCode::ShapeMismatch, "metrics", "predictions and truth differ in length");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0, t = truth[i] != 0;
    if (t && p) ++c.tp;
    else if (t) ++c.fn;
    else if (p) ++c.fp;
    else ++c.tn;
  }
  return c;
}

SensSpec sensitivity_specificity(std::span<const int> predicted, std::span<const int> truth) {
  const Confusion c = confusion(predicted, truth);
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0)
    throw Error(ErrorCode::SingleClass, "metrics", "sensitivity/specificity need both classes in the truth");
  return {static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn),
          static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp)};
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_labels(scores, labels);
  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  if (thresholds.empty()) throw Error(ErrorCode::EmptyInput, "metrics", "no scores");
  thresholds.insert(thresholds.begin(), std::nextafter(thresholds.front(), HUGE_VAL));

  std::vector<RocPoint> out;
  std::vector<int> predicted(scores.size());
  for (double th : thresholds) {
    for (std::size_t i = 0; i < scores.size(); ++i) predicted[i] = scores[i] >= th;
    const SensSpec ss = sensitivity_specificity(predicted, labels);
    out.push_back({th, ss.sensitivity, ss.specificity});
  }
  return out;
}

std::vector<FoldSplit> make_folds(std::span<const std::string> subjects, std::size_t k, std::uint64_t seed) {
  if (k < 3) throw Error(ErrorCode::ConfigInvalid, "metrics", "need at least 3 folds for train/validation/test");
  std::vector<std::string> ids(subjects.begin(), subjects.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < k)
    throw Error(ErrorCode::TooFewSubjects, "metrics",
                std::to_string(ids.size()) + " subjects cannot fill " + std::to_string(k) + " folds");
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(ids[i], ids[pick(rng)]);
  }
  std::vector<std::vector<std::string>> groups(k);
  const std::size_t base = ids.size() / k, extra = ids.size() % k;
  std::size_t pos = 0;
  for (std::size_t g = 0; g < k; ++g) {
    const std::size_t take = base + (g < extra ? 1 : 0);
    groups[g].assign(ids.begin() + static_cast<std::ptrdiff_t>(pos), ids.begin() + static_cast<std::ptrdiff_t>(pos + take));
    pos += take;
  }
  std::vector<FoldSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    FoldSplit& s = folds[f];
    s.fold_index = f;
    const std::size_t val = (f + 1) % k;
    for (std::size_t g = 0; g < k; ++g) {
      auto& dst = g == f ? s.test : g == val ? s.validation : s.train;
      dst.insert(groups[g].begin(), groups[g].end());
    }
  }
  return folds;
}

}  // namespace apnea::metrics
