#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "apnea/effort.hpp"
#include "support.hpp"

using namespace apnea;
using apnea::testing::expect_error;
using nn::Tensor;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed, double mean = 0.0, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(mean, sd);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

std::vector<double> zscore(std::vector<double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  for (auto& v : x) v = (v - mean) / sd;
  return x;
}

effort::EffortArch small_arch() {
  effort::EffortArch arch;
  arch.channels = {4, 8, 8};
  arch.hidden = 8;
  return arch;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(Ccc, PerfectConcordance) {
  const std::vector<double> x{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(effort::ccc(x, x), 1.0);
}

TEST(Ccc, OffsetByOne) {
  const std::vector<double> x{0, 1, 2, 3}, y{1, 2, 3, 4};
  // Population variance of 0..3 is 1.25 and the covariance equals it.
  EXPECT_NEAR(effort::ccc(x, y), 2 * 1.25 / (1.25 + 1.25 + 1.0), 1e-15);
  EXPECT_NEAR(effort::ccc(x, y), 0.7142857142857143, 1e-15);
}

TEST(Ccc, ConstantAgainstVarying) {
  const std::vector<double> x{0, 1, 2, 3}, y{5, 5, 5, 5};
  EXPECT_EQ(effort::ccc(x, y), 0.0);
}

TEST(Ccc, DegenerateAndMismatched) {
  const std::vector<double> c{2, 2, 2}, d{1, 2};
  expect_error(ErrorCode::DegenerateInput, [&] { effort::ccc(c, c); });
  expect_error(ErrorCode::ShapeMismatch, [&] { effort::ccc(c, d); });
}

TEST(Ccc, MomentsAreConsistent) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto x = randn(30, seed), y = randn(30, seed + 1000, 0.3, 2.0);
    const auto m = effort::moments(x, y);
    EXPECT_GE(m.var_x, 0.0);
    EXPECT_GE(m.var_y, 0.0);
    EXPECT_LE(std::abs(m.cov_xy), std::sqrt(m.var_x * m.var_y) + 1e-12);
  }
}

TEST(Ccc, SymmetricAndBounded) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto x = randn(2 + seed % 40, seed, 0.0, 1.0 + seed % 3);
    auto y = randn(x.size(), seed + 7777, seed % 5 * 0.2);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += (seed % 2 ? 1.0 : -1.0) * 0.5 * x[i];
    const double a = effort::ccc(x, y), b = effort::ccc(y, x);
    EXPECT_EQ(a, b);
    EXPECT_GE(a, -1.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Ccc, PenalisesMeanShiftWherePearsonDoesNot) {
  const auto x = zscore(randn(200, 3));
  double prev = 2.0;
  for (double c : {0.0, 0.1, 0.5, 1.0, 2.0, 5.0}) {
    for (double sign : {1.0, -1.0}) {
      std::vector<double> y(x);
      for (auto& v : y) v += sign * c;
      EXPECT_NEAR(effort::pearson(x, y), 1.0, 1e-12);
      const double r = effort::ccc(x, y);
      if (c > 0.0) EXPECT_LT(r, prev);
      // Closed form for unit variance: 2 / (2 + c^2).
      EXPECT_NEAR(r, 2.0 / (2.0 + c * c), 1e-12);
    }
    prev = 2.0 / (2.0 + c * c);
  }
}

TEST(CccLoss, IdenticalAndOpposite) {
  const auto ref = zscore(randn(960, 4));
  EXPECT_NEAR(effort::ccc_loss(ref, ref).value, 0.0, 1e-9);
  std::vector<double> neg(ref);
  for (auto& v : neg) v = -v;
  EXPECT_NEAR(effort::ccc_loss(neg, ref).value, 2.0, 1e-9);
}

TEST(CccLoss, FiniteOnConstantPrediction) {
  const auto ref = zscore(randn(960, 5));
  const std::vector<double> flat(960, 0.0);
  const auto r = effort::ccc_loss(flat, ref);
  EXPECT_NEAR(r.value, 1.0, 1e-12);
  for (double g : r.grad) ASSERT_TRUE(std::isfinite(g));
}

TEST(CccLoss, GradientMatchesFiniteDifferenceOnFullTraces) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto ref = zscore(randn(960, 10 + seed));
    auto pred = randn(960, 20 + seed, 0.2, 0.8);
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += 0.5 * ref[i];
    const auto analytic = effort::ccc_loss(pred, ref);
    double worst = 0.0;
    for (std::size_t i = 0; i < pred.size(); i += 7) {
      auto p = pred;
      p[i] += 1e-5;
      const double up = effort::ccc_loss(p, ref).value;
      p[i] -= 2e-5;
      const double down = effort::ccc_loss(p, ref).value;
      const double num = (up - down) / 2e-5;
      worst = std::max(worst, std::abs(num - analytic.grad[i]) / std::max({std::abs(num), std::abs(analytic.grad[i]), 1e-6}));
    }
    EXPECT_LT(worst, 1e-4);
  }
}

TEST(Interpolation, ConstantStaysConstant) {
  const std::vector<double> in(187, 0.37);
  const auto out = effort::interpolate_linear(in, 960);
  ASSERT_EQ(out.size(), 960u);
  for (double v : out) ASSERT_DOUBLE_EQ(v, 0.37);
}

TEST(Interpolation, RampFollowsTheLine) {
  std::vector<double> in(187);
  std::iota(in.begin(), in.end(), 0.0);
  const auto out = effort::interpolate_linear(in, 960);
  EXPECT_EQ(out.front(), 0.0);
  EXPECT_EQ(out.back(), 186.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out[i] - 186.0 * i / 959.0));
  EXPECT_LT(worst, 1e-9);
}

TEST(Interpolation, PiecewiseLinearBetweenKnots) {
  const auto in = randn(187, 6);
  const auto out = effort::interpolate_linear(in, 960);
  EXPECT_EQ(out.front(), in.front());
  EXPECT_EQ(out.back(), in.back());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = 186.0 * static_cast<double>(i) / 959.0;
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(t), 185);
    const double expect = in[k] + (t - static_cast<double>(k)) * (in[k + 1] - in[k]);
    ASSERT_NEAR(out[i], expect, 1e-12);
    ASSERT_GE(out[i], std::min(in[k], in[k + 1]) - 1e-12);
    ASSERT_LE(out[i], std::max(in[k], in[k + 1]) + 1e-12);
  }
}

TEST(Interpolation, AdjointIsTheTranspose) {
  const auto a = randn(187, 7), b = randn(960, 8);
  const auto fa = effort::interpolate_linear(a, 960);
  const auto ftb = effort::interpolate_linear_adjoint(b, 187);
  const double lhs = std::inner_product(fa.begin(), fa.end(), b.begin(), 0.0);
  const double rhs = std::inner_product(a.begin(), a.end(), ftb.begin(), 0.0);
  EXPECT_NEAR(lhs, rhs, 1e-9);
}

TEST(Estimator, PaperShapes) {
  const effort::EffortArch arch;
  EXPECT_EQ(arch.steps(), 187u);
  EXPECT_EQ(arch.embedding_dim(), 128u);
  effort::EffortEstimator model(arch, 1);
  const Tensor x({2, 1, 1500, 64}, 0.1);
  const auto out = model.infer(x);
  EXPECT_EQ(out.hidden.shape(), (nn::Shape{2, 187, 128}));
  EXPECT_EQ(out.traces.shape(), (nn::Shape{2, 960}));
  EXPECT_EQ(model.embeddings(x).shape(), (nn::Shape{2, 128}));
}

TEST(Estimator, DecodeRequiresExactSteps) {
  effort::EffortEstimator model(effort::EffortArch{}, 2);
  expect_error(ErrorCode::ShapeMismatch, [&] { model.decode_and_interpolate(Tensor({186, 128}, 0.0)); });
  expect_error(ErrorCode::ShapeMismatch, [&] { model.decode_and_interpolate(Tensor({187, 127}, 0.0)); });
  // Zero hidden states project to the decoder bias everywhere.
  const auto flat = model.decode_and_interpolate(Tensor({187, 128}, 0.0));
  ASSERT_EQ(flat.size(), 960u);
  for (double v : flat) ASSERT_EQ(v, flat.front());
}

TEST(Estimator, EmbeddingIsPureAndFixedWidth) {
  const auto ex = apnea::testing::synthetic_examples(1, 120.0, 2, 0.0);
  ASSERT_GE(ex.effort.size(), 2u);
  effort::EffortEstimator model(effort::EffortArch{}, 3);
  const auto a = model.embedding(*ex.effort[0].features);
  EXPECT_EQ(a.size(), 128u);
  EXPECT_EQ(model.embedding(*ex.effort[0].features), a);
  EXPECT_EQ(model.predict(*ex.effort[0].features).values, model.predict(*ex.effort[0].features).values);

  auto arch = effort::EffortArch{};
  arch.embedding = effort::EmbeddingMode::final_state;
  effort::EffortEstimator last(arch, 3);
  EXPECT_EQ(last.embedding(*ex.effort[0].features).size(), 128u);
}

TEST(Estimator, BatchCompositionDoesNotChangeOutputs) {
  const auto ex = apnea::testing::synthetic_examples(6, 120.0, 0, 0.0);
  ASSERT_GE(ex.effort.size(), 3u);
  effort::EffortEstimator model(small_arch(), 8);
  std::vector<FeaturePtr> batch{ex.effort[0].features, ex.effort[1].features, ex.effort[2].features};
  const auto out = model.infer(stack_features(batch));
  const auto emb = model.embeddings(stack_features(batch));
  for (std::size_t i = 0; i < 3; ++i) {
    const auto single = model.predict(*batch[i]).values;
    EXPECT_TRUE(std::equal(single.begin(), single.end(), out.traces.data() + i * 960));
    const auto e = model.embedding(*batch[i]);
    EXPECT_TRUE(std::equal(e.begin(), e.end(), emb.data() + i * e.size()));
  }
}

TEST(Estimator, DisjointActivityGivesDistinctEmbeddings) {
  // Breathing sounds confined to opposite halves of the window.
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 0.1);
  std::vector<float> first(480000), second(480000);
  for (std::size_t i = 0; i < first.size(); ++i) {
    const double t = static_cast<double>(i) / 16000.0;
    const double breath = std::max(0.0, std::sin(2.0 * std::numbers::pi * 0.25 * t));
    const float sound = static_cast<float>(breath * g(rng) + 0.001 * g(rng));
    (t < 15.0 ? first : second)[i] = sound;
    (t < 15.0 ? second : first)[i] = static_cast<float>(0.001 * g(rng));
  }
  effort::EffortEstimator model(effort::EffortArch{}, 4);
  const auto a = model.embedding(dsp::log_mel(first)), b = model.embedding(dsp::log_mel(second));
  EXPECT_LT(cosine(a, b), 0.99);
}

TEST(Estimator, CheckpointRoundTrip) {
  const auto ex = apnea::testing::synthetic_examples(2, 90.0, 1, 0.0);
  effort::EffortEstimator model(small_arch(), 5);
  nn::Checkpoint ckpt;
  ckpt.config["effort_arch"] = small_arch().to_json();
  model.save_to(ckpt, "effort.");
  const auto a = effort::EffortEstimator::from_checkpoint(ckpt, "effort.");
  const auto b = effort::EffortEstimator::from_checkpoint(nn::parse_checkpoint(nn::serialize_checkpoint(ckpt)), "effort.");
  EXPECT_EQ(a.predict(*ex.effort[0].features).values, b.predict(*ex.effort[0].features).values);
  EXPECT_EQ(a.arch().channels, small_arch().channels);
  expect_error(ErrorCode::CorruptCheckpoint, [&] { effort::EffortEstimator::from_checkpoint(ckpt, "other."); });
}

TEST(Reference, SegmentsAreZScored) {
  std::vector<float> night(32 * 120);
  for (std::size_t i = 0; i < night.size(); ++i) night[i] = static_cast<float>(3.0 + 2.0 * std::sin(0.1 * i));
  const auto ref = effort::reference_segment(night, {20.0, 30.0, 10.0});
  ASSERT_EQ(ref.values.size(), 960u);
  const auto m = effort::moments(ref.values, ref.values);
  EXPECT_NEAR(m.mu_x, 0.0, 1e-12);
  EXPECT_NEAR(m.var_x, 1.0, 1e-12);
  EXPECT_NEAR(ref.values[0], (night[640] - ref.mean) / ref.std, 1e-12);
  expect_error(ErrorCode::ShapeMismatch, [&] { effort::reference_segment(night, {100.0, 30.0, 10.0}); });

  const std::vector<double> flat(960, 4.0);
  const auto z = effort::z_normalize(flat);
  for (double v : z.values) ASSERT_EQ(v, 0.0);
}

TEST(Evaluation, PerfectPrediction) {
  std::vector<std::vector<double>> refs;
  for (std::uint64_t s = 0; s < 5; ++s) refs.push_back(zscore(randn(960, s)));
  const auto ev = effort::evaluate_traces(refs, refs);
  EXPECT_NEAR(ev.ccc_summary.mean, 1.0, 1e-12);
  EXPECT_EQ(ev.rmse_summary.mean, 0.0);
  EXPECT_EQ(ev.mae_summary.mean, 0.0);
}

TEST(Evaluation, UnitOffset) {
  std::vector<std::vector<double>> refs, preds;
  for (std::uint64_t s = 0; s < 5; ++s) {
    refs.push_back(zscore(randn(960, s)));
    preds.push_back(refs.back());
    for (auto& v : preds.back()) v += 1.0;
  }
  const auto ev = effort::evaluate_traces(preds, refs);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(ev.ccc[i], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(ev.rmse[i], 1.0, 1e-12);
    EXPECT_NEAR(ev.mae[i], 1.0, 1e-12);
  }
  EXPECT_EQ(ev.table_row(), "0.667 ± 0.000 | 1.000 ± 0.000 | 1.000 ± 0.000");
}

TEST(Evaluation, EmptyIsAnError) {
  const std::vector<std::vector<double>> none;
  expect_error(ErrorCode::EmptyDataset, [&] { effort::evaluate_traces(none, none); });
  effort::EffortEstimator model(small_arch(), 6);
  expect_error(ErrorCode::EmptyDataset, [&] { effort::evaluate_effort(model, {}); });
}

TEST(Training, EmptySplitsRejected) {
  const auto ex = apnea::testing::synthetic_examples(3, 60.0, 1, 0.0);
  TrainConfig tc;
  expect_error(ErrorCode::EmptyDataset, [&] { effort::train_effort({}, ex.effort, small_arch(), tc); });
  expect_error(ErrorCode::EmptyDataset, [&] { effort::train_effort(ex.effort, {}, small_arch(), tc); });
}

TEST(Training, MemorisesASingleSegment) {
  const auto ex = apnea::testing::synthetic_examples(4, 60.0, 1, 0.0);
  ASSERT_EQ(ex.effort.size(), 1u);
  TrainConfig tc;
  tc.batch_size = 1;
  tc.max_epochs = 200;
  tc.patience = 200;
  tc.seed = 7;
  const auto res = effort::train_effort(ex.effort, ex.effort, effort::EffortArch{}, tc);
  ASSERT_LE(res.step_losses.size(), 200u);
  EXPECT_LT(*std::min_element(res.step_losses.begin(), res.step_losses.end()), 0.05);
  EXPECT_GT(res.best_validation_ccc, 0.95);
}

TEST(Training, SameSeedSameTrajectory) {
  const auto ex = apnea::testing::synthetic_examples(5, 120.0, 0, 20.0);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 2;
  tc.seed = 11;
  const auto a = effort::train_effort(ex.effort, ex.effort, small_arch(), tc);
  const auto b = effort::train_effort(ex.effort, ex.effort, small_arch(), tc);
  EXPECT_EQ(a.step_losses, b.step_losses);
  EXPECT_EQ(a.checkpoint.tensors, b.checkpoint.tensors);
  tc.seed = 12;
  const auto c = effort::train_effort(ex.effort, ex.effort, small_arch(), tc);
  EXPECT_NE(a.step_losses, c.step_losses);
  EXPECT_EQ(a.checkpoint.config["model"], "effort");
  EXPECT_EQ(effort::EffortArch::from_json(a.checkpoint.config["effort_arch"]).channels, small_arch().channels);
}

TEST(EffortFile, RoundTrip) {
  apnea::testing::TempDir dir("eff");
  const std::vector<float> v{0.5f, -1.25f, 3.0f};
  effort::write_effort_file(dir / "x.eff", v);
  EXPECT_EQ(effort::read_effort_file(dir / "x.eff"), v);
  std::ofstream(dir / "bad.eff") << "EFF32 10\nabc";
  EXPECT_THROW(effort::read_effort_file(dir / "bad.eff"), Error);
}
