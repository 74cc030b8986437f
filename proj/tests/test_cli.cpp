#include <gtest/gtest.h>

#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "support.hpp"

using apnea::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run apnea_cli(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.path().string() + "' && '" APNEA_CLI_PATH "' " + args + " > '" + out.string() +
                          "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Narrow networks on 16 Mel bins so whole runs take seconds.
void write_tiny_config(const TempDir& dir) {
  std::ofstream(dir / "tiny.json") << R"({
  "seed": 3,
  "features": {"mel_bins": 16},
  "data": {"segments_per_night": 4},
  "effort": {"arch": {"mel_bins": 16, "channels": [2, 2, 2], "pool_time": 2, "pool_freq": 2, "hidden": 4},
             "train": {"batch_size": 8, "max_epochs": 1}},
  "osa": {"arch": {"mel_bins": 16, "channels": [2, 2, 2], "pool": 2, "embedding": 8, "fusion_hidden": 4},
          "train": {"batch_size": 8, "max_epochs": 1}}
})";
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST(Cli, InvalidFlagPrintsUsage) {
  TempDir dir("cli_flag");
  const auto r = apnea_cli(dir, "synth --out x --bogus 1");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, UnknownSubcommand) {
  TempDir dir("cli_unknown");
  const auto r = apnea_cli(dir, "frobnicate");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("UnknownSubcommand"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_NE(apnea_cli(dir, "").code, 0);
}

TEST(Cli, BadConfigIsReported) {
  TempDir dir("cli_config");
  std::ofstream(dir / "bad.json") << R"({"folds": {"k": 1}})";
  const auto r = apnea_cli(dir, "synth --out c --config bad.json");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ConfigInvalid"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("folds.k"), std::string::npos) << r.err;
}

TEST(Cli, ReferenceLabelEvaluationIsPerfect) {
  TempDir dir("cli_eval");
  auto r = apnea_cli(dir, "synth --out corpus --subjects 6 --duration-s 1200 --seed 4");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto synth = nlohmann::json::parse(r.out);
  EXPECT_EQ(synth["nights"], 6);
  ASSERT_TRUE(std::filesystem::exists(dir / "corpus/manifest.json"));

  r = apnea_cli(dir, "evaluate --manifest corpus/manifest.json --use-reference-labels --all-nights --out eval.json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ev = nlohmann::json::parse(r.out);
  EXPECT_EQ(slurp(dir / "eval.json"), r.out);
  EXPECT_EQ(ev["nights"].size(), 6u);
  for (const auto& n : ev["nights"]) EXPECT_EQ(n["predicted_ahi"], n["reference_ahi"]);
  std::size_t defined = 0;
  for (const auto& c : ev["cutoffs"]) {
    for (const char* key : {"sensitivity", "specificity"})
      if (!c[key].is_null()) {
        EXPECT_EQ(c[key].get<double>(), 1.0) << c.dump();
        ++defined;
      }
  }
  EXPECT_GT(defined, 0u);
  EXPECT_EQ(ev["config_hash"].get<std::string>().size(), 16u);

  // A night aligned against itself has zero lag.
  const auto wav = nlohmann::json::parse(slurp(dir / "corpus/manifest.json"))["nights"][0]["audio"].get<std::string>();
  r = apnea_cli(dir, "align --a corpus/" + wav + " --b corpus/" + wav);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["lag_samples"], 0);
}

TEST(Cli, TrainPredictAndReport) {
  TempDir dir("cli_train");
  write_tiny_config(dir);
  ASSERT_EQ(apnea_cli(dir, "synth --out corpus --subjects 6 --duration-s 240 --seed 2").code, 0);
  const std::string common = "--config tiny.json --manifest corpus/manifest.json --k 3 --fold 1";
  auto r = apnea_cli(dir, "train-effort " + common + " --checkpoint-out effort.ckpt");
  ASSERT_EQ(r.code, 0) << r.err;
  r = apnea_cli(dir, "eval-effort " + common + " --checkpoint effort.ckpt");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("CCC | RMSE | MAE"), std::string::npos);

  r = apnea_cli(dir, "train-osa " + common + " --model fusion --checkpoint-out osa.ckpt");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("MissingCheckpoint"), std::string::npos) << r.err;
  r = apnea_cli(dir, "train-osa " + common + " --model fusion --effort-checkpoint effort.ckpt --checkpoint-out osa.ckpt");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["model"], "latent_fusion");

  const auto wav = nlohmann::json::parse(slurp(dir / "corpus/manifest.json"))["nights"][0]["audio"].get<std::string>();
  r = apnea_cli(dir, "predict --config tiny.json --checkpoint osa.ckpt --audio corpus/" + wav);
  ASSERT_EQ(r.code, 0) << r.err;
  // Two comment lines, then one line per window: (240 - 30) / 10 + 1 = 22.
  EXPECT_EQ(count_lines(r.out), 24u);
  const auto first = apnea_cli(dir, "predict --config tiny.json --checkpoint osa.ckpt --audio corpus/" + wav).out;
  EXPECT_EQ(first, r.out);

  r = apnea_cli(dir, "report --config tiny.json --manifest corpus/manifest.json --checkpoint osa.ckpt --out-dir rep");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 6u);
  EXPECT_TRUE(std::filesystem::exists(dir / "rep/roc.csv"));
  const auto report = nlohmann::json::parse(slurp(dir / "rep" / (std::filesystem::path(wav).stem().string() + ".json")));
  EXPECT_TRUE(report.contains("severity"));
  EXPECT_TRUE(report.contains("config_hash"));
}

TEST(Cli, CrossValidateTenFolds) {
  TempDir dir("cli_cv");
  write_tiny_config(dir);
  ASSERT_EQ(apnea_cli(dir, "synth --out corpus --subjects 20 --duration-s 240 --seed 1").code, 0);
  const auto r = apnea_cli(dir, "cross-validate --config tiny.json --manifest corpus/manifest.json --k 10 --out cv.txt");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "cv.txt"), r.out);

  std::istringstream lines(r.out);
  std::string line;
  std::size_t rows = 0;
  bool in_table = false, footer = false;
  while (std::getline(lines, line)) {
    if (line.rfind("fold |", 0) == 0) {
      in_table = true;
      continue;
    }
    if (!in_table) continue;
    if (line.rfind("mean ± std", 0) == 0) {
      footer = true;
      EXPECT_NE(line.find(" ± "), std::string::npos);
      break;
    }
    EXPECT_EQ(line.rfind(std::to_string(rows) + " | 2 | ", 0), 0u) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 10u);
  EXPECT_TRUE(footer);
  EXPECT_NE(r.out.find("AHI>=15"), std::string::npos);
}
