#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "apnea/classifier.hpp"
#include "apnea/config.hpp"
#include "apnea/corpus.hpp"
#include "apnea/events.hpp"

namespace apnea::pipeline {

inline constexpr double kAhiCutoffs[] = {5.0, 15.0, 30.0};

/// Turns a night's windows into probabilities.
class SegmentScorer {
 public:
  virtual ~SegmentScorer() = default;
  virtual std::vector<double> score(const AudioNight& night, std::span<const SegmentIndex> segments) const = 0;
};

/// Eval-mode classifier over log-Mel features.
class ModelScorer final : public SegmentScorer {
 public:
  ModelScorer(const osa::OsaClassifier& model, dsp::LogMelConfig features = {}, std::size_t batch_size = 16)
      : model_(model), features_(features), batch_size_(batch_size) {}
  std::vector<double> score(const AudioNight& night, std::span<const SegmentIndex> segments) const override;

 private:
  const osa::OsaClassifier& model_;
  dsp::LogMelConfig features_;
  std::size_t batch_size_;
};

/// Oracle that answers with the reference segment labels (1 or 0).
class ReferenceScorer final : public SegmentScorer {
 public:
  explicit ReferenceScorer(double min_overlap_s = 10.0) : min_overlap_s_(min_overlap_s) {}
  std::vector<double> score(const AudioNight& night, std::span<const SegmentIndex> segments) const override;

 private:
  double min_overlap_s_;
};

/// Segment -> probability -> merge -> AHI -> severity for one night.
events::NightReport night_report(const SegmentScorer& scorer, const AudioNight& night, const RunConfig& config);

struct CutoffMetrics {
  double cutoff = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> auc;  // predicted AHI as the score
};

/// Night-level screening metrics: truth is reference AHI >= cutoff and the
/// prediction is predicted AHI >= cutoff. Undefined entries stay empty.
std::vector<CutoffMetrics> cutoff_metrics(std::span<const double> predicted_ahi, std::span<const double> reference_ahi);

struct Evaluation {
  std::vector<events::NightReport> reports;
  std::vector<double> reference_ahi;
  std::vector<CutoffMetrics> cutoffs;
  std::vector<double> segment_scores;
  std::vector<int> segment_labels;
  std::optional<double> segment_auc;

  nlohmann::json to_json() const;
};

Evaluation evaluate(const SegmentScorer& scorer, const corpus::Manifest& manifest,
                    std::span<const corpus::ManifestEntry> nights, const RunConfig& config);

struct FoldResult {
  std::size_t fold = 0;
  std::size_t test_subjects = 0;
  std::size_t test_segments = 0;
  effort::EffortEvaluation effort;
  double audio_auc = 0.0;
  double fusion_auc = 0.0;
};

struct CrossValidation {
  std::vector<FoldResult> folds;
  std::vector<double> reference_ahi;
  std::vector<double> audio_ahi;
  std::vector<double> fusion_ahi;
  std::string summary;
};

/// The two-stage protocol on every fold: train the effort estimator, freeze
/// it, train audio-only and fusion classifiers, then score held-out subjects.
/// `progress`, when given, receives one line per stage.
CrossValidation cross_validate(const corpus::Manifest& manifest, const RunConfig& config,
                               std::ostream* progress = nullptr);

}  // namespace apnea::pipeline
