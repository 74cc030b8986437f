#include <gtest/gtest.h>

#include <cmath>

#include "apnea/metrics.hpp"
#include "apnea/pipeline.hpp"
#include "support.hpp"

using namespace apnea;
using apnea::testing::expect_error;
using apnea::testing::TempDir;

namespace {

synth::SynthNight make_night(std::uint64_t seed, double events_per_h, double seconds = 600.0,
                             const std::string& subject = "s000") {
  synth::SynthConfig c;
  c.seed = seed;
  c.night_duration_s = seconds;
  c.event_rate_per_h = events_per_h;
  c.subject_id = subject;
  return synth::generate(c);
}

corpus::Examples examples_from(std::initializer_list<std::uint64_t> seeds, std::size_t per_night) {
  corpus::Examples out;
  RunConfig config;
  config.segments_per_night = per_night;
  for (auto seed : seeds) {
    auto n = make_night(seed, 30.0, 600.0, "s" + std::to_string(seed));
    corpus::NightRecord rec{std::move(n.audio), std::move(n.effort)};
    corpus::append_examples(rec, config, seed, out);
  }
  return out;
}

// Full-size audio-only classifier trained once on a few synthetic nights.
struct Trained {
  osa::OsaClassifier model;
  corpus::Examples test;
};

const Trained& trained() {
  static const Trained t = [] {
    const auto train = examples_from({101, 102, 103, 104, 105, 106}, 24);
    const auto validation = examples_from({107}, 0);
    TrainConfig tc = RunConfig{}.osa_train;
    tc.batch_size = 16;
    tc.max_epochs = 3;
    tc.seed = 17;
    const auto res = osa::train_osa(osa::ModelKind::audio_only, train.osa, validation.osa, osa::AudioArch{}, tc);
    return Trained{osa::OsaClassifier::from_checkpoint(res.checkpoint), examples_from({201, 202}, 0)};
  }();
  return t;
}

}  // namespace

TEST(Pipeline, HeldOutSegmentAuc) {
  const auto& t = trained();
  std::vector<int> labels;
  for (const auto& e : t.test.osa) labels.push_back(e.label);
  const double auc = metrics::roc_auc(osa::predict_examples(t.model, t.test.osa), labels);
  std::cout << "held-out segment AUC " << auc << " on " << labels.size() << " windows\n";
  EXPECT_GE(auc, 0.9);
}

TEST(Pipeline, EventFreeNightIsHealthy) {
  const auto& t = trained();
  const auto night = make_night(301, 0.0);
  const auto report = pipeline::night_report(pipeline::ModelScorer(t.model), night.audio, RunConfig{});
  EXPECT_EQ(report.event_count, 0u);
  EXPECT_EQ(report.ahi, 0.0);
  EXPECT_EQ(report.severity, events::Severity::healthy);
}

TEST(Pipeline, ReportIsReproducibleAndBatchIndependent) {
  const auto& t = trained();
  const auto night = make_night(302, 30.0);
  const RunConfig config;
  const auto a = pipeline::night_report(pipeline::ModelScorer(t.model, {}, 16), night.audio, config).to_json().dump();
  const auto b = pipeline::night_report(pipeline::ModelScorer(t.model, {}, 16), night.audio, config).to_json().dump();
  const auto c = pipeline::night_report(pipeline::ModelScorer(t.model, {}, 5), night.audio, config).to_json().dump();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Pipeline, ReferenceLabelsReproduceTrueAhi) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto night = make_night(400 + seed, 5.0 + 4.0 * static_cast<double>(seed), 1800.0);
    const auto report = pipeline::night_report(pipeline::ReferenceScorer(), night.audio, RunConfig{});
    EXPECT_EQ(report.event_count, night.events.size()) << "seed " << seed;
    EXPECT_EQ(report.ahi, night.true_ahi) << "seed " << seed;
  }
}

TEST(Pipeline, CutoffMetrics) {
  const std::vector<double> reference{2, 7, 20, 40, 12, 31};
  const std::vector<double> predicted{3, 4, 18, 35, 16, 25};
  const auto m = pipeline::cutoff_metrics(predicted, reference);
  ASSERT_EQ(m.size(), 3u);
  // >= 5: truth 0 1 1 1 1 1, prediction 0 0 1 1 1 1.
  EXPECT_EQ(m[0].cutoff, 5.0);
  EXPECT_EQ(m[0].positives, 5u);
  EXPECT_EQ(*m[0].sensitivity, 0.8);
  EXPECT_EQ(*m[0].specificity, 1.0);
  // >= 15: truth 0 0 1 1 0 1, prediction 0 0 1 1 1 1.
  EXPECT_EQ(*m[1].sensitivity, 1.0);
  EXPECT_EQ(*m[1].specificity, 2.0 / 3.0);
  // >= 30: truth 0 0 0 1 0 1, prediction 0 0 0 1 0 0.
  EXPECT_EQ(*m[2].sensitivity, 0.5);
  EXPECT_EQ(*m[2].specificity, 1.0);
  EXPECT_EQ(*m[2].auc, 1.0);

  const std::vector<double> low{1, 2};
  const auto none = pipeline::cutoff_metrics(low, low);
  EXPECT_FALSE(none[0].sensitivity.has_value());
  EXPECT_TRUE(none[0].specificity.has_value());
  EXPECT_FALSE(none[0].auc.has_value());
  expect_error(ErrorCode::ShapeMismatch, [&] { pipeline::cutoff_metrics(low, reference); });
}

TEST(Pipeline, EvaluateWithReferenceLabels) {
  TempDir dir("pipeline_eval");
  corpus::CorpusSpec spec;
  spec.subjects = 8;
  spec.night_duration_s = 1200.0;
  spec.seed = 5;
  const auto manifest = corpus::write_synthetic_corpus(spec, dir.path());
  const auto reloaded = corpus::Manifest::load(dir / "manifest.json");
  ASSERT_EQ(reloaded.entries.size(), 8u);
  const auto ev = pipeline::evaluate(pipeline::ReferenceScorer(), reloaded, reloaded.entries, RunConfig{});
  ASSERT_EQ(ev.reports.size(), 8u);
  for (std::size_t i = 0; i < ev.reports.size(); ++i) EXPECT_EQ(ev.reports[i].ahi, ev.reference_ahi[i]);
  for (const auto& m : ev.cutoffs) {
    if (m.sensitivity) EXPECT_EQ(*m.sensitivity, 1.0) << m.cutoff;
    if (m.specificity) EXPECT_EQ(*m.specificity, 1.0) << m.cutoff;
  }
  ASSERT_TRUE(ev.segment_auc.has_value());
  EXPECT_EQ(*ev.segment_auc, 1.0);
  EXPECT_EQ(ev.to_json().dump(), pipeline::evaluate(pipeline::ReferenceScorer(), reloaded, reloaded.entries,
                                                    RunConfig{}).to_json().dump());
}
