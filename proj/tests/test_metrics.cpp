#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "apnea/metrics.hpp"
#include "support.hpp"

using namespace apnea;
using apnea::testing::expect_error;

namespace {

// Mann-Whitney by counting every positive/negative pair.
double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  long twice = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      ++pairs;
      twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
    }
  return static_cast<double>(twice) / static_cast<double>(2 * pairs);
}

struct RandomSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

RandomSet random_set(std::mt19937_64& rng) {
  // Few distinct score levels so ties are common.
  RandomSet r;
  const std::size_t n = 2 + rng() % 14;
  const int levels = 1 + static_cast<int>(rng() % 6);
  for (std::size_t i = 0; i < n; ++i) {
    r.scores.push_back(static_cast<double>(rng() % levels) / levels);
    r.labels.push_back(static_cast<int>(rng() % 2));
  }
  r.labels[0] = 1;
  r.labels[1] = 0;
  return r;
}

std::vector<std::string> subject_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
  return ids;
}

}  // namespace

TEST(Auc, Examples) {
  EXPECT_EQ(metrics::roc_auc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(metrics::roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1, 0}), 0.5);
  EXPECT_EQ(metrics::roc_auc(std::vector<double>{0.8, 0.4, 0.6, 0.2}, std::vector<int>{1, 1, 0, 0}), 0.75);
}

TEST(Auc, MatchesPairCountingExactly) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto r = random_set(rng);
    ASSERT_EQ(metrics::roc_auc(r.scores, r.labels), pair_count_auc(r.scores, r.labels)) << "trial " << trial;
  }
}

TEST(Auc, FlippingLabelsComplements) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    auto r = random_set(rng);
    const double a = metrics::roc_auc(r.scores, r.labels);
    for (auto& l : r.labels) l = 1 - l;
    // Both sides are correctly rounded quotients, so they agree to one ulp of 1.
    ASSERT_NEAR(metrics::roc_auc(r.scores, r.labels), 1.0 - a, 0x1.0p-53);
  }
}

TEST(Auc, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto r = random_set(rng);
    const double a = metrics::roc_auc(r.scores, r.labels);
    std::vector<double> t1, t2;
    for (double s : r.scores) {
      t1.push_back(std::exp(3.0 * s) - 7.0);
      t2.push_back(s * s * s + 0.5 * s);
    }
    ASSERT_EQ(metrics::roc_auc(t1, r.labels), a);
    ASSERT_EQ(metrics::roc_auc(t2, r.labels), a);
  }
}

TEST(Auc, FlipIsExactForDyadicCounts) {
  // 2 positives, 2 negatives: every value is a multiple of 1/8.
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(4);
    for (auto& v : s) v = static_cast<double>(rng() % 3);
    std::vector<int> y{1, 0, 1, 0}, f{0, 1, 0, 1};
    ASSERT_EQ(metrics::roc_auc(s, y), 1.0 - metrics::roc_auc(s, f));
  }
}

TEST(Auc, Errors) {
  expect_error(ErrorCode::SingleClass, [] { metrics::roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); });
  expect_error(ErrorCode::ShapeMismatch, [] { metrics::roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}); });
}

TEST(SensSpec, Examples) {
  const std::vector<int> truth{1, 1, 0, 0, 1, 0};
  auto r = metrics::sensitivity_specificity(truth, truth);
  EXPECT_EQ(r.sensitivity, 1.0);
  EXPECT_EQ(r.specificity, 1.0);
  std::vector<int> inverted;
  for (int t : truth) inverted.push_back(1 - t);
  r = metrics::sensitivity_specificity(inverted, truth);
  EXPECT_EQ(r.sensitivity, 0.0);
  EXPECT_EQ(r.specificity, 0.0);

  std::vector<int> pred, t2;
  auto add = [&](int p, int t, int n) {
    for (int i = 0; i < n; ++i) pred.push_back(p), t2.push_back(t);
  };
  add(1, 1, 7);  // TP
  add(0, 1, 3);  // FN
  add(0, 0, 8);  // TN
  add(1, 0, 2);  // FP
  const auto c = metrics::confusion(pred, t2);
  EXPECT_EQ(c.tp, 7u);
  EXPECT_EQ(c.fn, 3u);
  EXPECT_EQ(c.tn, 8u);
  EXPECT_EQ(c.fp, 2u);
  r = metrics::sensitivity_specificity(pred, t2);
  EXPECT_EQ(r.sensitivity, 0.7);
  EXPECT_EQ(r.specificity, 0.8);
  expect_error(ErrorCode::SingleClass, [] {
    metrics::sensitivity_specificity(std::vector<int>{1, 0}, std::vector<int>{0, 0});
  });
}

TEST(SensSpec, MatchesConfusionArithmetic) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<int> p, t;
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (int i = 0; i < 30; ++i) {
      p.push_back(static_cast<int>(rng() % 2));
      t.push_back(i < 2 ? i : static_cast<int>(rng() % 2));
      (t.back() ? (p.back() ? tp : fn) : (p.back() ? fp : tn))++;
    }
    const auto r = metrics::sensitivity_specificity(p, t);
    ASSERT_EQ(r.sensitivity, static_cast<double>(tp) / static_cast<double>(tp + fn));
    ASSERT_EQ(r.specificity, static_cast<double>(tn) / static_cast<double>(tn + fp));
  }
}

TEST(RocCurve, EndsAtTheCorners) {
  const std::vector<double> s{0.9, 0.4, 0.4, 0.1};
  const std::vector<int> y{1, 0, 1, 0};
  const auto pts = metrics::roc_curve(s, y);
  ASSERT_EQ(pts.size(), 4u);  // above max, then 0.9, 0.4, 0.1
  EXPECT_GT(pts.front().threshold, 0.9);
  EXPECT_EQ(pts.front().sensitivity, 0.0);
  EXPECT_EQ(pts.front().specificity, 1.0);
  EXPECT_EQ(pts[2].threshold, 0.4);
  EXPECT_EQ(pts[2].sensitivity, 1.0);
  EXPECT_EQ(pts[2].specificity, 0.5);
  EXPECT_EQ(pts.back().sensitivity, 1.0);
  EXPECT_EQ(pts.back().specificity, 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_LT(pts[i].threshold, pts[i - 1].threshold);
    EXPECT_GE(pts[i].sensitivity, pts[i - 1].sensitivity);
    EXPECT_LE(pts[i].specificity, pts[i - 1].specificity);
  }
}

TEST(Folds, TwentySubjectsTenFolds) {
  const auto ids = subject_ids(20);
  const auto folds = metrics::make_folds(ids, 10, 7);
  ASSERT_EQ(folds.size(), 10u);
  std::map<std::string, int> tested;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto& f = folds[i];
    EXPECT_EQ(f.fold_index, i);
    EXPECT_EQ(f.test.size(), 2u);
    EXPECT_EQ(f.validation.size(), 2u);
    EXPECT_EQ(f.train.size(), 16u);
    std::set<std::string> all;
    for (const auto* part : {&f.train, &f.validation, &f.test})
      for (const auto& s : *part) EXPECT_TRUE(all.insert(s).second) << s << " appears twice in fold " << i;
    EXPECT_EQ(all.size(), 20u);
    for (const auto& s : f.test) ++tested[s];
    // Validation is the next fold's test group.
    EXPECT_EQ(f.validation, folds[(i + 1) % 10].test);
  }
  EXPECT_EQ(tested.size(), 20u);
  for (const auto& [s, n] : tested) EXPECT_EQ(n, 1) << s;
}

TEST(Folds, DeterministicAndSeedDependent) {
  const auto ids = subject_ids(23);
  const auto a = metrics::make_folds(ids, 5, 1), b = metrics::make_folds(ids, 5, 1), c = metrics::make_folds(ids, 5, 2);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].test, b[i].test);
    EXPECT_EQ(a[i].train, b[i].train);
    differs = differs || a[i].test != c[i].test;
  }
  EXPECT_TRUE(differs);
  // Uneven sizes: 23 = 3 groups of 5 and 2 of 4.
  std::size_t total = 0;
  for (const auto& f : a) {
    EXPECT_GE(f.test.size(), 4u);
    EXPECT_LE(f.test.size(), 5u);
    total += f.test.size();
  }
  EXPECT_EQ(total, 23u);
}

TEST(Folds, RepeatedIdsCountOnce) {
  // One id per night: a subject with two nights must not land in two sets.
  std::vector<std::string> nights{"a", "a", "b", "c", "c", "d", "e"};
  const auto folds = metrics::make_folds(nights, 5, 3);
  for (const auto& f : folds) EXPECT_EQ(f.train.size() + f.validation.size() + f.test.size(), 5u);
}

TEST(Folds, Errors) {
  expect_error(ErrorCode::TooFewSubjects, [] { metrics::make_folds(subject_ids(5), 10, 0); });
  expect_error(ErrorCode::ConfigInvalid, [] { metrics::make_folds(subject_ids(5), 2, 0); });
}

TEST(Summary, PopulationStd) {
  const auto m = metrics::mean_std(std::vector<double>{2, 4, 4, 4, 5, 5, 7, 9});
  EXPECT_EQ(m.mean, 5.0);
  EXPECT_EQ(m.std, 2.0);
  EXPECT_EQ(metrics::mean_std(std::vector<double>{3.5}).std, 0.0);
  expect_error(ErrorCode::EmptyDataset, [] { metrics::mean_std(std::vector<double>{}); });
}
