#include "apnea/pipeline.hpp"

#include <cstdio>
#include <sstream>

#include "apnea/error.hpp"
#include "apnea/hash.hpp"
#include "apnea/metrics.hpp"

namespace apnea::pipeline {

namespace {

std::vector<SegmentIndex> night_segments(const AudioNight& night, const RunConfig& config) {
  std::vector<SegmentIndex> out;
  for (const auto& s : dsp::segment_night(night, config.segment_s, config.shift_s)) out.push_back(s.index);
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fmt("%.3f", *v) : std::string("n/a"); }

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string pm(const metrics::MetricSummary& s) { return fmt("%.3f", s.mean) + " ± " + fmt("%.3f", s.std); }

}  // namespace

std::vector<double> ModelScorer::score(const AudioNight& night, std::span<const SegmentIndex> segments) const {
  const dsp::LogMelExtractor extract(night.sample_rate_hz, features_);
  std::vector<double> probs;
  probs.reserve(segments.size());
  std::vector<FeaturePtr> batch;
  for (std::size_t i = 0; i < segments.size(); i += batch_size_) {
    batch.clear();
    for (std::size_t j = i; j < std::min(segments.size(), i + batch_size_); ++j) {
      const auto first = static_cast<std::size_t>(std::llround(segments[j].start_s * night.sample_rate_hz));
      const auto count = static_cast<std::size_t>(std::llround(segments[j].duration_s * night.sample_rate_hz));
      if (first + count > night.samples.size())
        throw Error(ErrorCode::ShapeMismatch, "pipeline", "segment runs past the end of the night");
      batch.push_back(std::make_shared<const dsp::LogMelSegment>(
          extract(std::span<const float>(night.samples).subspan(first, count), segments[j])));
    }
    const nn::Tensor p = model_.predict(stack_features(batch));
    probs.insert(probs.end(), p.storage().begin(), p.storage().end());
  }
  return probs;
}

std::vector<double> ReferenceScorer::score(const AudioNight& night, std::span<const SegmentIndex> segments) const {
  const auto labels = events::segment_labels(segments, night.events, min_overlap_s_);
  return {labels.begin(), labels.end()};
}

events::NightReport night_report(const SegmentScorer& scorer, const AudioNight& night, const RunConfig& config) {
  night.validate();
  const auto segments = night_segments(night, config);
  if (segments.empty()) throw Error(ErrorCode::NightTooShort, "pipeline", "night is shorter than one window");
  const auto probs = scorer.score(night, segments);
  std::vector<events::SegmentProb> sp(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) sp[i] = {segments[i].start_s, probs[i]};
  events::EventConfig ev = config.events;
  ev.window_s = config.segment_s;
  return events::build_report(night, std::move(sp), ev);
}

std::vector<CutoffMetrics> cutoff_metrics(std::span<const double> predicted_ahi, std::span<const double> reference_ahi) {
  if (predicted_ahi.size() != reference_ahi.size())
    throw Error(ErrorCode::ShapeMismatch, "pipeline", "predicted and reference AHI counts differ");
  std::vector<CutoffMetrics> out;
  for (double cutoff : kAhiCutoffs) {
    CutoffMetrics m;
    m.cutoff = cutoff;
    std::vector<int> truth, pred;
    for (std::size_t i = 0; i < reference_ahi.size(); ++i) {
      truth.push_back(reference_ahi[i] >= cutoff);
      pred.push_back(predicted_ahi[i] >= cutoff);
    }
    const auto c = metrics::confusion(pred, truth);
    m.positives = c.tp + c.fn;
    m.negatives = c.tn + c.fp;
    if (m.positives > 0) m.sensitivity = static_cast<double>(c.tp) / static_cast<double>(m.positives);
    if (m.negatives > 0) m.specificity = static_cast<double>(c.tn) / static_cast<double>(m.negatives);
    if (m.positives > 0 && m.negatives > 0) m.auc = metrics::roc_auc(predicted_ahi, truth);
    out.push_back(m);
  }
  return out;
}

nlohmann::json Evaluation::to_json() const {
  nlohmann::json nights = nlohmann::json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    nights.push_back({{"subject_id", r.subject_id},
                      {"night_id", r.night_id},
                      {"predicted_ahi", r.ahi},
                      {"reference_ahi", reference_ahi[i]},
                      {"predicted_severity", std::string(events::to_string(r.severity))},
                      {"reference_severity", std::string(events::to_string(events::severity(reference_ahi[i])))},
                      {"tst_h", r.tst_h},
                      {"tst_source", r.tst_source == events::TstSource::metadata ? "metadata" : "recording"}});
  }
  nlohmann::json cuts = nlohmann::json::array();
  for (const auto& c : cutoffs)
    cuts.push_back({{"cutoff", c.cutoff},
                    {"positives", c.positives},
                    {"negatives", c.negatives},
                    {"sensitivity", opt_json(c.sensitivity)},
                    {"specificity", opt_json(c.specificity)},
                    {"auc", opt_json(c.auc)}});
  return {{"nights", nights}, {"cutoffs", cuts}, {"segment_auc", opt_json(segment_auc)}};
}

Evaluation evaluate(const SegmentScorer& scorer, const corpus::Manifest& manifest,
                    std::span<const corpus::ManifestEntry> nights, const RunConfig& config) {
  if (nights.empty()) throw Error(ErrorCode::EmptyDataset, "pipeline", "no nights to evaluate");
  Evaluation ev;
  std::vector<double> predicted;
  for (const auto& entry : nights) {
    const corpus::NightRecord rec = corpus::load_record(manifest, entry);
    events::NightReport report = night_report(scorer, rec.audio, config);
    ev.reference_ahi.push_back(events::compute_ahi(rec.audio.events, report.tst_h));
    predicted.push_back(report.ahi);
    std::vector<SegmentIndex> segs;
    for (const auto& sp : report.segment_probs) {
      segs.push_back({sp.start_s, config.segment_s, config.shift_s});
      ev.segment_scores.push_back(sp.prob);
    }
    const auto labels = events::segment_labels(segs, rec.audio.events, config.label_min_overlap_s);
    ev.segment_labels.insert(ev.segment_labels.end(), labels.begin(), labels.end());
    ev.reports.push_back(std::move(report));
  }
  ev.cutoffs = cutoff_metrics(predicted, ev.reference_ahi);
  const auto counts = osa::count_classes(ev.segment_labels);
  if (counts.positive > 0 && counts.negative > 0) ev.segment_auc = metrics::roc_auc(ev.segment_scores, ev.segment_labels);
  return ev;
}

CrossValidation cross_validate(const corpus::Manifest& manifest, const RunConfig& config, std::ostream* progress) {
  config.validate();
  const auto subjects = manifest.subjects();
  const auto folds = metrics::make_folds(subjects, config.k_folds, config.seed);
  const std::string hash = config_hash(config);
  auto say = [&](const std::string& line) {
    if (progress) *progress << line << std::endl;
  };

  CrossValidation cv;
  for (const auto& split : folds) {
    const std::string tag = "fold " + std::to_string(split.fold_index);
    RunConfig fold_cfg = config;
    fold_cfg.fold = split.fold_index;
    const auto train = corpus::build_examples(manifest, split.train, fold_cfg, "train");
    const auto val = corpus::build_examples(manifest, split.validation, fold_cfg, "validation");
    const auto test = corpus::build_examples(manifest, split.test, fold_cfg, "test");
    if (train.effort.empty() || val.effort.empty() || test.effort.empty())
      throw Error(ErrorCode::EmptyDataset, "pipeline", tag + ": the manifest lacks effort traces for a split");

    TrainConfig et = config.effort_train;
    et.seed = derive_seed(config.seed, tag + "/effort");
    say(tag + ": training effort estimator on " + std::to_string(train.effort.size()) + " segments");
    const auto eres = effort::train_effort(train.effort, val.effort, config.effort_arch, et);
    auto estimator = std::make_shared<const effort::EffortEstimator>(effort::EffortEstimator::from_checkpoint(eres.checkpoint));

    FoldResult fr;
    fr.fold = split.fold_index;
    fr.test_subjects = split.test.size();
    fr.test_segments = test.effort.size();
    fr.effort = effort::evaluate_effort(*estimator, test.effort, config.effort_train.batch_size);

    TrainConfig ot = config.osa_train;
    ot.seed = derive_seed(config.seed, tag + "/osa");
    say(tag + ": training audio-only classifier");
    const auto ares = osa::train_osa(osa::ModelKind::audio_only, train.osa, val.osa, config.osa_arch, ot);
    say(tag + ": training fusion classifier");
    const auto fres = osa::train_osa(osa::ModelKind::latent_fusion, train.osa, val.osa, config.osa_arch, ot, estimator);
    const auto audio = osa::OsaClassifier::from_checkpoint(ares.checkpoint);
    const auto fusion = osa::OsaClassifier::from_checkpoint(fres.checkpoint);

    std::vector<int> labels;
    for (const auto& ex : test.osa) labels.push_back(ex.label);
    const auto counts = osa::count_classes(labels);
    const bool both = counts.positive > 0 && counts.negative > 0;
    fr.audio_auc = both ? metrics::roc_auc(osa::predict_examples(audio, test.osa), labels) : std::nan("");
    fr.fusion_auc = both ? metrics::roc_auc(osa::predict_examples(fusion, test.osa), labels) : std::nan("");

    say(tag + ": scoring " + std::to_string(split.test.size()) + " test subjects");
    const auto nights = manifest.nights_of(split.test);
    const ModelScorer audio_scorer(audio, config.features), fusion_scorer(fusion, config.features);
    for (const auto& entry : nights) {
      const auto rec = corpus::load_record(manifest, entry);
      const auto ra = night_report(audio_scorer, rec.audio, config);
      const auto rf = night_report(fusion_scorer, rec.audio, config);
      cv.reference_ahi.push_back(events::compute_ahi(rec.audio.events, ra.tst_h));
      cv.audio_ahi.push_back(ra.ahi);
      cv.fusion_ahi.push_back(rf.ahi);
    }
    cv.folds.push_back(std::move(fr));
  }

  std::ostringstream out;
  out << "# cross-validation k=" << config.k_folds << " seed=" << config.seed << " config_hash=" << hash << "\n";
  out << "# subjects=" << subjects.size() << " nights=" << manifest.entries.size() << "\n\n";
  out << "Respiratory effort estimation (held-out segments)\n";
  out << "fold | subjects | segments | CCC | RMSE | MAE | audio AUC | fusion AUC\n";
  std::vector<double> cccs, rmses, maes, aaucs, faucs;
  for (const auto& f : cv.folds) {
    out << f.fold << " | " << f.test_subjects << " | " << f.test_segments << " | " << f.effort.table_row() << " | "
        << fmt("%.3f", f.audio_auc) << " | " << fmt("%.3f", f.fusion_auc) << "\n";
    cccs.push_back(f.effort.ccc_summary.mean);
    rmses.push_back(f.effort.rmse_summary.mean);
    maes.push_back(f.effort.mae_summary.mean);
    if (!std::isnan(f.audio_auc)) aaucs.push_back(f.audio_auc);
    if (!std::isnan(f.fusion_auc)) faucs.push_back(f.fusion_auc);
  }
  out << "mean ± std | | | " << pm(metrics::mean_std(cccs)) << " | " << pm(metrics::mean_std(rmses)) << " | "
      << pm(metrics::mean_std(maes)) << " | " << (aaucs.empty() ? "n/a" : pm(metrics::mean_std(aaucs))) << " | "
      << (faucs.empty() ? "n/a" : pm(metrics::mean_std(faucs))) << "\n\n";

  out << "OSA screening by AHI cut-off (pooled test nights)\n";
  out << "model | metric | AHI>=5 | AHI>=15 | AHI>=30\n";
  const std::pair<const char*, const std::vector<double>*> models[] = {{"audio only", &cv.audio_ahi},
                                                                       {"latent fusion", &cv.fusion_ahi}};
  for (const auto& [name, ahi] : models) {
    const auto cm = cutoff_metrics(*ahi, cv.reference_ahi);
    out << name << " | sensitivity";
    for (const auto& c : cm) out << " | " << opt(c.sensitivity);
    out << "\n" << name << " | specificity";
    for (const auto& c : cm) out << " | " << opt(c.specificity);
    out << "\n" << name << " | AUC";
    for (const auto& c : cm) out << " | " << opt(c.auc);
    out << "\n";
  }
  cv.summary = out.str();
  return cv;
}

}  // namespace apnea::pipeline
