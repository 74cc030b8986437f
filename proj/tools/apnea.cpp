// Command-line entry point: synth, align, featurize, train-effort, eval-effort,
// train-osa, predict, evaluate, report, cross-validate.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "apnea/alignment.hpp"
#include "apnea/classifier.hpp"
#include "apnea/config.hpp"
#include "apnea/corpus.hpp"
#include "apnea/dsp.hpp"
#include "apnea/effort.hpp"
#include "apnea/error.hpp"
#include "apnea/hash.hpp"
#include "apnea/metrics.hpp"
#include "apnea/nn/checkpoint.hpp"
#include "apnea/pipeline.hpp"
#include "apnea/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace apnea;

namespace {

// Flags shared by the subcommands that take a run configuration. Only flags
// that were given on the command line override the file.
struct CommonFlags {
  std::string config_path;
  std::string manifest;
  std::string cache_dir;
  std::uint64_t seed = 0;
  std::size_t fold = 0;
  std::size_t k = 10;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* fold_opt = nullptr;
  CLI::Option* k_opt = nullptr;

  void attach(CLI::App* app, bool with_fold) {
    app->add_option("--config", config_path, "run configuration (JSON)")->check(CLI::ExistingFile);
    app->add_option("--manifest", manifest, "paired-data manifest");
    app->add_option("--cache-dir", cache_dir, "feature cache directory (default: $APN_CACHE_DIR)");
    seed_opt = app->add_option("--seed", seed, "base seed");
    if (with_fold) {
      fold_opt = app->add_option("--fold", fold, "fold index");
      k_opt = app->add_option("--k", k, "number of folds");
    }
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    if (!manifest.empty()) c.paths.manifest = manifest;
    if (!cache_dir.empty()) {
      c.paths.cache_dir = cache_dir;
    } else if (c.paths.cache_dir.empty()) {
      if (const char* env = std::getenv("APN_CACHE_DIR")) c.paths.cache_dir = env;
    }
    if (seed_opt && seed_opt->count()) c.seed = seed;
    if (k_opt && k_opt->count()) c.k_folds = k;
    if (fold_opt && fold_opt->count()) c.fold = fold;
    c.events.window_s = c.segment_s;
    c.validate();
    return c;
  }
};

json stamp(const RunConfig& c) {
  return {{"config_hash", config_hash(c)}, {"seed", c.seed}, {"run_config", c.to_json()}};
}

corpus::Manifest need_manifest(const RunConfig& c) {
  if (c.paths.manifest.empty()) throw Error(ErrorCode::ConfigInvalid, "cli", "no manifest given (--manifest)");
  return corpus::Manifest::load(c.paths.manifest);
}

metrics::FoldSplit fold_split(const corpus::Manifest& m, const RunConfig& c) {
  const auto subjects = m.subjects();
  return metrics::make_folds(subjects, c.k_folds, c.seed).at(c.fold);
}

std::string fold_tag(const RunConfig& c) { return "fold " + std::to_string(c.fold); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cli", "cannot write " + path.string());
  out << text;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// 500 Hz envelope of a wave file or a rectified, linearly resampled effort trace.
std::vector<double> envelope_of(const fs::path& path) {
  if (path.extension() == ".eff") {
    const auto trace = effort::read_effort_file(path);
    if (trace.size() < 2) throw Error(ErrorCode::EmptyInput, "cli", path.string() + " holds too few samples");
    const auto n = static_cast<std::size_t>(std::floor(static_cast<double>(trace.size() - 1) *
                                                       align::kEnvelopeRateHz / kEffortRateHz)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double pos = static_cast<double>(i) * kEffortRateHz / align::kEnvelopeRateHz;
      const auto k = std::min(static_cast<std::size_t>(pos), trace.size() - 2);
      const double f = pos - static_cast<double>(k);
      out[i] = std::abs(trace[k] * (1.0 - f) + trace[k + 1] * f);
    }
    return out;
  }
  const auto w = wav::read_wav(path);
  if (w.channels != 1) throw Error(ErrorCode::UnsupportedFormat, "cli", path.string() + " is not mono");
  return align::downsample_envelope(w.samples, w.sample_rate_hz, align::kEnvelopeRateHz);
}

std::unique_ptr<pipeline::SegmentScorer> make_scorer(const std::string& checkpoint, bool reference,
                                                     const RunConfig& c, std::optional<osa::OsaClassifier>& holder) {
  if (reference) return std::make_unique<pipeline::ReferenceScorer>(c.label_min_overlap_s);
  if (checkpoint.empty())
    throw Error(ErrorCode::MissingCheckpoint, "cli", "give --checkpoint or --use-reference-labels");
  holder.emplace(osa::OsaClassifier::from_checkpoint(nn::load_checkpoint(checkpoint)));
  return std::make_unique<pipeline::ModelScorer>(*holder, c.features);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-only OSA screening with estimated respiratory effort"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  // synth
  CommonFlags synth_flags;
  std::string synth_out;
  corpus::CorpusSpec spec;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic paired corpus and its manifest");
  synth_flags.attach(synth_cmd, false);
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--subjects", spec.subjects, "number of subjects");
  synth_cmd->add_option("--nights", spec.nights_per_subject, "nights per subject");
  synth_cmd->add_option("--duration-s", spec.night_duration_s, "night length in seconds");
  synth_cmd->add_option("--snr-db", spec.audio_snr_db, "audio SNR in dB");
  synth_cmd->add_option("--suppression", spec.effort_suppression_factor, "effort factor inside events");
  synth_cmd->add_option("--event-rates", spec.event_rates_per_h, "event rates per hour, cycled over subjects");

  // align
  std::string align_a, align_b;
  std::optional<double> align_max_lag;
  CommonFlags align_flags;
  auto* align_cmd = app.add_subcommand("align", "estimate the delay between two recordings");
  align_flags.attach(align_cmd, false);
  align_cmd->add_option("--a", align_a, "reference wave (.wav) or effort trace (.eff)")->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--b", align_b, "delayed wave or trace")->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--max-lag-s", align_max_lag, "search range in seconds");

  // featurize
  CommonFlags feat_flags;
  auto* feat_cmd = app.add_subcommand("featurize", "write log-Mel caches for every night of a manifest");
  feat_flags.attach(feat_cmd, false);

  // train-effort / eval-effort
  CommonFlags te_flags, ee_flags;
  std::string te_out, ee_ckpt;
  auto* te_cmd = app.add_subcommand("train-effort", "train the respiratory effort estimator on one fold");
  te_flags.attach(te_cmd, true);
  te_cmd->add_option("--checkpoint-out", te_out, "where to write the checkpoint")->required();
  auto* ee_cmd = app.add_subcommand("eval-effort", "score an effort checkpoint on a fold's test subjects");
  ee_flags.attach(ee_cmd, true);
  ee_cmd->add_option("--checkpoint,--checkpoint-out", ee_ckpt, "effort checkpoint")->required()->check(CLI::ExistingFile);

  // train-osa
  CommonFlags to_flags;
  std::string to_model, to_effort, to_out;
  auto* to_cmd = app.add_subcommand("train-osa", "train the segment classifier on one fold");
  to_flags.attach(to_cmd, true);
  to_cmd->add_option("--model", to_model, "audio | fusion")->check(CLI::IsMember({"audio", "fusion"}));
  to_cmd->add_option("--effort-checkpoint", to_effort, "frozen effort estimator (fusion)")->check(CLI::ExistingFile);
  to_cmd->add_option("--checkpoint-out", to_out, "where to write the checkpoint")->required();

  // predict
  CommonFlags pr_flags;
  std::string pr_ckpt, pr_audio;
  auto* pr_cmd = app.add_subcommand("predict", "per-window probabilities for one recording");
  pr_flags.attach(pr_cmd, false);
  pr_cmd->add_option("--checkpoint", pr_ckpt, "classifier checkpoint")->required()->check(CLI::ExistingFile);
  pr_cmd->add_option("--audio", pr_audio, "mono 16 kHz wave")->required()->check(CLI::ExistingFile);

  // evaluate
  CommonFlags ev_flags;
  std::string ev_ckpt, ev_out;
  bool ev_ref = false, ev_all = false;
  auto* ev_cmd = app.add_subcommand("evaluate", "night-level screening metrics at AHI cut-offs 5/15/30");
  ev_flags.attach(ev_cmd, true);
  ev_cmd->add_option("--checkpoint", ev_ckpt, "classifier checkpoint")->check(CLI::ExistingFile);
  ev_cmd->add_flag("--use-reference-labels", ev_ref, "score windows with the reference labels");
  ev_cmd->add_flag("--all-nights", ev_all, "evaluate every night instead of the fold's test subjects");
  ev_cmd->add_option("--out", ev_out, "also write the JSON here");

  // report
  CommonFlags rp_flags;
  std::string rp_ckpt, rp_audio, rp_labels, rp_out;
  bool rp_ref = false;
  auto* rp_cmd = app.add_subcommand("report", "night reports plus an ROC table");
  rp_flags.attach(rp_cmd, false);
  rp_cmd->add_option("--checkpoint", rp_ckpt, "classifier checkpoint")->check(CLI::ExistingFile);
  rp_cmd->add_flag("--use-reference-labels", rp_ref, "score windows with the reference labels");
  rp_cmd->add_option("--audio", rp_audio, "single recording instead of a manifest")->check(CLI::ExistingFile);
  rp_cmd->add_option("--labels", rp_labels, "reference labels for --audio")->check(CLI::ExistingFile);
  rp_cmd->add_option("--out-dir", rp_out, "output directory (default: paths.report_dir)");

  // cross-validate
  CommonFlags cv_flags;
  std::string cv_out;
  auto* cv_cmd = app.add_subcommand("cross-validate", "full k-fold two-stage protocol");
  cv_flags.attach(cv_cmd, true);
  cv_cmd->add_option("--out", cv_out, "also write the summary here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (app.get_subcommands().empty() && argc > 1 && argv[1][0] != '-') {
      std::cerr << "cli: UnknownSubcommand: '" << argv[1] << "'\n\n";
    } else {
      std::cerr << "cli: ConfigInvalid: " << e.what() << "\n\n";
    }
    const CLI::App* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << target->help();
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      const RunConfig c = synth_flags.resolve();
      spec.seed = c.seed;
      json prov = stamp(c);
      const auto m = corpus::write_synthetic_corpus(spec, synth_out, prov);
      std::cout << json{{"manifest", (fs::path(synth_out) / "manifest.json").string()},
                        {"nights", m.entries.size()},
                        {"config_hash", prov["config_hash"]},
                        {"seed", c.seed}}
                       .dump()
                << "\n";
    } else if (align_cmd->parsed()) {
      RunConfig c = align_flags.resolve();
      if (align_max_lag) c.max_lag_s = *align_max_lag;
      const auto a = envelope_of(align_a), b = envelope_of(align_b);
      const auto lag = align::estimate_lag(a, b, c.max_lag_s);
      std::cout << json{{"lag_s", lag.lag_s},
                        {"lag_samples", lag.lag_samples},
                        {"rate_hz", align::kEnvelopeRateHz},
                        {"peak_normalized_correlation", lag.peak_normalized_correlation},
                        {"config_hash", config_hash(c)},
                        {"seed", c.seed}}
                       .dump()
                << "\n";
    } else if (feat_cmd->parsed()) {
      const RunConfig c = feat_flags.resolve();
      if (c.paths.cache_dir.empty())
        throw Error(ErrorCode::ConfigInvalid, "cli", "no cache directory (--cache-dir or APN_CACHE_DIR)");
      const auto m = need_manifest(c);
      fs::create_directories(c.paths.cache_dir);
      for (const auto& e : m.entries) {
        const auto rec = corpus::load_record(m, e);
        const dsp::LogMelExtractor extract(rec.audio.sample_rate_hz, c.features);
        std::vector<dsp::LogMelSegment> segs;
        for (const auto& s : dsp::segment_night(rec.audio, c.segment_s, c.shift_s)) segs.push_back(extract(s.samples, s.index));
        const auto path = corpus::cache_path(c.paths.cache_dir, e.subject_id, e.night_id);
        dsp::write_feature_cache(path, segs);
        std::cout << path.string() << " " << segs.size() << "\n";
      }
    } else if (te_cmd->parsed()) {
      const RunConfig c = te_flags.resolve();
      const auto m = need_manifest(c);
      const auto split = fold_split(m, c);
      const auto train = corpus::build_examples(m, split.train, c, "train");
      const auto val = corpus::build_examples(m, split.validation, c, "validation");
      TrainConfig tc = c.effort_train;
      tc.seed = derive_seed(c.seed, fold_tag(c) + "/effort");
      auto res = effort::train_effort(train.effort, val.effort, c.effort_arch, tc, stamp(c));
      res.checkpoint.config["fold"] = c.fold;
      nn::save_checkpoint(res.checkpoint, te_out);
      json hist = json::array();
      for (const auto& h : res.history) hist.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"validation_ccc", h.validation_score}});
      std::cout << json{{"checkpoint", te_out},
                        {"best_epoch", res.best_epoch},
                        {"best_validation_ccc", res.best_validation_ccc},
                        {"history", hist},
                        {"config_hash", config_hash(c)},
                        {"seed", c.seed}}
                       .dump()
                << "\n";
    } else if (ee_cmd->parsed()) {
      const RunConfig c = ee_flags.resolve();
      const auto m = need_manifest(c);
      const auto split = fold_split(m, c);
      const auto test = corpus::build_examples(m, split.test, c, "test");
      const auto model = effort::EffortEstimator::from_checkpoint(nn::load_checkpoint(ee_ckpt));
      const auto ev = effort::evaluate_effort(model, test.effort, c.effort_train.batch_size);
      std::cout << "# config_hash=" << config_hash(c) << " seed=" << c.seed << " fold=" << c.fold
                << " segments=" << test.effort.size() << "\n";
      std::cout << "CCC | RMSE | MAE\n" << ev.table_row() << "\n";
    } else if (to_cmd->parsed()) {
      RunConfig c = to_flags.resolve();
      if (!to_model.empty()) c.osa_model = osa::parse_model_kind(to_model);
      const auto m = need_manifest(c);
      const auto split = fold_split(m, c);
      std::shared_ptr<const effort::EffortEstimator> est;
      if (c.osa_model == osa::ModelKind::latent_fusion) {
        if (to_effort.empty())
          throw Error(ErrorCode::MissingCheckpoint, "cli", "fusion training needs --effort-checkpoint");
        est = std::make_shared<const effort::EffortEstimator>(
            effort::EffortEstimator::from_checkpoint(nn::load_checkpoint(to_effort)));
      }
      const auto train = corpus::build_examples(m, split.train, c, "train");
      const auto val = corpus::build_examples(m, split.validation, c, "validation");
      TrainConfig tc = c.osa_train;
      tc.seed = derive_seed(c.seed, fold_tag(c) + "/osa");
      auto res = osa::train_osa(c.osa_model, train.osa, val.osa, c.osa_arch, tc, est, stamp(c));
      res.checkpoint.config["fold"] = c.fold;
      nn::save_checkpoint(res.checkpoint, to_out);
      std::cout << json{{"checkpoint", to_out},
                        {"model", osa::to_string(c.osa_model)},
                        {"best_epoch", res.best_epoch},
                        {"best_validation_auc", res.best_validation_score},
                        {"config_hash", config_hash(c)},
                        {"seed", c.seed}}
                       .dump()
                << "\n";
    } else if (pr_cmd->parsed()) {
      const RunConfig c = pr_flags.resolve();
      const auto model = osa::OsaClassifier::from_checkpoint(nn::load_checkpoint(pr_ckpt));
      const AudioNight night = wav::load_night(pr_audio);
      std::vector<SegmentIndex> segs;
      for (const auto& s : dsp::segment_night(night, c.segment_s, c.shift_s)) segs.push_back(s.index);
      const auto probs = pipeline::ModelScorer(model, c.features).score(night, segs);
      std::cout << "# config_hash=" << config_hash(c) << " seed=" << c.seed << "\n# start_s,prob\n";
      for (std::size_t i = 0; i < segs.size(); ++i)
        std::cout << format_double(segs[i].start_s) << "," << format_double(probs[i]) << "\n";
    } else if (ev_cmd->parsed()) {
      const RunConfig c = ev_flags.resolve();
      const auto m = need_manifest(c);
      std::optional<osa::OsaClassifier> holder;
      const auto scorer = make_scorer(ev_ckpt, ev_ref, c, holder);
      const auto nights = ev_all ? m.entries : m.nights_of(fold_split(m, c).test);
      json out = pipeline::evaluate(*scorer, m, nights, c).to_json();
      out["config_hash"] = config_hash(c);
      out["seed"] = c.seed;
      out["scorer"] = ev_ref ? "reference_labels" : "checkpoint";
      const std::string text = out.dump(2) + "\n";
      if (!ev_out.empty()) write_text(ev_out, text);
      std::cout << text;
    } else if (rp_cmd->parsed()) {
      const RunConfig c = rp_flags.resolve();
      std::optional<osa::OsaClassifier> holder;
      const auto scorer = make_scorer(rp_ckpt, rp_ref, c, holder);
      const fs::path out_dir = rp_out.empty() ? fs::path(c.paths.report_dir) : fs::path(rp_out);
      fs::create_directories(out_dir);
      std::vector<double> scores;
      std::vector<int> labels;
      auto emit = [&](const AudioNight& night) {
        const auto report = pipeline::night_report(*scorer, night, c);
        json j = report.to_json();
        j["config_hash"] = config_hash(c);
        j["seed"] = c.seed;
        const std::string stem = (night.subject_id.empty() ? "night" : night.subject_id) +
                                 (night.night_id.empty() ? "" : "_" + night.night_id);
        write_text(out_dir / (stem + ".json"), j.dump(2) + "\n");
        std::vector<SegmentIndex> segs;
        for (const auto& sp : report.segment_probs) {
          segs.push_back({sp.start_s, c.segment_s, c.shift_s});
          scores.push_back(sp.prob);
        }
        const auto l = events::segment_labels(segs, night.events, c.label_min_overlap_s);
        labels.insert(labels.end(), l.begin(), l.end());
        std::cout << (out_dir / (stem + ".json")).string() << " ahi=" << format_double(report.ahi)
                  << " severity=" << events::to_string(report.severity) << "\n";
      };
      if (!rp_audio.empty()) {
        AudioNight night = wav::load_night(rp_audio, fs::path(rp_audio).stem().string());
        if (!rp_labels.empty()) night.events = events::read_labels(rp_labels);
        emit(night);
      } else {
        const auto m = need_manifest(c);
        for (const auto& e : m.entries) emit(corpus::load_record(m, e).audio);
      }
      std::ostringstream roc;
      roc << "# config_hash=" << config_hash(c) << " seed=" << c.seed << "\nthreshold,sensitivity,specificity\n";
      const auto counts = osa::count_classes(labels);
      if (counts.positive > 0 && counts.negative > 0) {
        for (const auto& p : metrics::roc_curve(scores, labels))
          roc << format_double(p.threshold) << "," << format_double(p.sensitivity) << ","
              << format_double(p.specificity) << "\n";
      } else {
        std::cerr << "report: reference labels hold a single class; ROC table left empty\n";
      }
      write_text(out_dir / "roc.csv", roc.str());
    } else if (cv_cmd->parsed()) {
      const RunConfig c = cv_flags.resolve();
      const auto m = need_manifest(c);
      const auto cv = pipeline::cross_validate(m, c, &std::cerr);
      if (!cv_out.empty()) write_text(cv_out, cv.summary);
      std::cout << cv.summary;
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "cli: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
