#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace apnea::metrics {

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

MetricSummary mean_std(std::span<const double> values);

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(score_pos > score_neg) + 0.5 * P(tie), computed from integer rank sums.
/// Throws Error(SingleClass) unless both labels occur.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct SensSpec {
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct Confusion {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
};

Confusion confusion(std::span<const int> predicted, std::span<const int> truth);
SensSpec sensitivity_specificity(std::span<const int> predicted, std::span<const int> truth);

struct RocPoint {
  double threshold = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

/// Operating points for "score >= threshold" at every distinct score, from the
/// highest threshold down, preceded by a point above the maximum score.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

struct FoldSplit {
  std::size_t fold_index = 0;
  std::set<std::string> train;
  std::set<std::string> validation;
  std::set<std::string> test;
};

/// Shuffles the distinct subject ids with `seed` and partitions them into k
/// groups; fold i tests on group i, validates on group (i + 1) mod k, and
/// trains on the rest. Throws Error(TooFewSubjects) when fewer than k subjects.
std::vector<FoldSplit> make_folds(std::span<const std::string> subjects, std::size_t k, std::uint64_t seed);

}  // namespace apnea::metrics
