#include <gtest/gtest.h>

#include <fstream>

#include "apnea/config.hpp"
#include "support.hpp"

using namespace apnea;
using apnea::testing::expect_error;
using apnea::testing::TempDir;

namespace {

RunConfig non_default() {
  RunConfig c;
  c.seed = 123456789012345ull;
  c.paths.manifest = "corpus/manifest.json";
  c.paths.cache_dir = "cache";
  c.features.mel_bins = 32;
  c.segments_per_night = 7;
  c.label_min_overlap_s = 5.5;
  c.effort_arch.hidden = 16;
  c.effort_train.learning_rate = 3e-4;
  c.effort_train.batch_size = 8;
  c.osa_model = osa::ModelKind::audio_only;
  c.osa_train.patience = 3;
  c.k_folds = 5;
  c.fold = 4;
  c.events.threshold = 0.35;
  c.events.gap_s = 12.5;
  c.max_lag_s = 20.0;
  return c;
}

}  // namespace

TEST(Config, JsonRoundTripIsLossless) {
  const auto c = non_default();
  const auto j = c.to_json();
  const auto back = RunConfig::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.effort_train.learning_rate, 3e-4);
  EXPECT_EQ(back.osa_model, osa::ModelKind::audio_only);
  EXPECT_EQ(back.events.threshold, 0.35);
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, FileRoundTrip) {
  TempDir dir("config_file");
  const auto c = non_default();
  c.save(dir / "run.json");
  const auto back = RunConfig::load(dir / "run.json");
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, PartialFileKeepsDefaults) {
  const auto j = nlohmann::json::parse(R"({"seed": 5, "folds": {"k": 4}})");
  const auto c = RunConfig::from_json(j);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.k_folds, 4u);
  const RunConfig d;
  EXPECT_EQ(c.features.mel_bins, d.features.mel_bins);
  EXPECT_EQ(c.effort_train.max_epochs, d.effort_train.max_epochs);
}

TEST(Config, PartialTrainSectionKeepsStageDefaults) {
  const RunConfig d;
  EXPECT_EQ(d.effort_train.learning_rate, 1e-3);
  EXPECT_EQ(d.osa_train.learning_rate, 1e-4);
  const auto c = RunConfig::from_json(nlohmann::json::parse(R"({"osa": {"train": {"batch_size": 4}}})"));
  EXPECT_EQ(c.osa_train.batch_size, 4u);
  EXPECT_EQ(c.osa_train.learning_rate, 1e-4);
}

TEST(Config, HashIsStableAndSensitive) {
  const RunConfig a;
  const auto h = config_hash(a);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h.find_first_not_of("0123456789abcdef"), std::string::npos);
  EXPECT_EQ(config_hash(RunConfig{}), h);
  RunConfig b;
  b.seed = 1;
  EXPECT_NE(config_hash(b), h);
  RunConfig c;
  c.events.min_duration_s += 1e-9;
  EXPECT_NE(config_hash(c), h);
}

TEST(Config, RejectsUnknownAndMistypedFields) {
  const char* bad[] = {
      R"({"sed": 1})",
      R"({"features": {"mel_bin": 64}})",
      R"({"seed": "one"})",
      R"({"folds": 10})",
      R"({"folds": {"k": 2}})",
      R"({"folds": {"k": 5, "fold": 5}})",
      R"({"osa": {"model": "transformer"}})",
      R"({"events": {"threshold": 1.5}})",
      R"({"alignment": {"max_lag_s": 0}})",
      R"([1, 2])",
  };
  for (const char* text : bad) {
    SCOPED_TRACE(text);
    expect_error(ErrorCode::ConfigInvalid, [&] { RunConfig::from_json(nlohmann::json::parse(text)); });
  }
}

TEST(Config, LoadErrors) {
  TempDir dir("config_errors");
  expect_error(ErrorCode::Io, [&] { RunConfig::load(dir / "missing.json"); });
  std::ofstream(dir / "broken.json") << "{\"seed\": ";
  expect_error(ErrorCode::ConfigInvalid, [&] { RunConfig::load(dir / "broken.json"); });
}
