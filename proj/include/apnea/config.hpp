#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "apnea/classifier.hpp"
#include "apnea/dsp.hpp"
#include "apnea/effort.hpp"
#include "apnea/events.hpp"
#include "apnea/training.hpp"

namespace apnea {

struct PathConfig {
  std::string manifest;
  std::string cache_dir;
  std::string checkpoint_dir = "checkpoints";
  std::string report_dir = "reports";
};

/// Every tunable of a run. The JSON form is the config file schema:
///
///   seed                      base seed for every random stream
///   paths.{manifest, cache_dir, checkpoint_dir, report_dir}
///   features.{window_ms, shift_ms, mel_bins, segment_s, shift_s}
///   data.segments_per_night   segments sampled per training/test night, 0 = all
///   data.label_min_overlap_s  overlap that makes a window positive
///   effort.{arch, train}      estimator widths and optimiser settings
///   osa.{model, arch, train}  classifier kind ("audio" | "fusion"), widths, optimiser
///   folds.{k, fold}
///   events.{threshold, merge_gap_s, min_duration_s}
///   alignment.max_lag_s
struct RunConfig {
  std::uint64_t seed = 0;
  PathConfig paths;
  dsp::LogMelConfig features;
  double segment_s = kSegmentSeconds;
  double shift_s = kSegmentShiftSeconds;
  std::size_t segments_per_night = 0;
  double label_min_overlap_s = 10.0;
  effort::EffortArch effort_arch;
  TrainConfig effort_train;
  osa::ModelKind osa_model = osa::ModelKind::latent_fusion;
  osa::AudioArch osa_arch;
  // A 1e-3 first Adam step moves all ~750k projection weights coherently and
  // saturates the sigmoid; 1e-4 trains the audio CNN reliably.
  TrainConfig osa_train{.learning_rate = 1e-4};
  std::size_t k_folds = 10;
  std::size_t fold = 0;
  events::EventConfig events;
  double max_lag_s = 30.0;

  /// Throws Error(ConfigInvalid) naming the first offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace apnea
