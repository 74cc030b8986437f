#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "apnea/classifier.hpp"
#include "apnea/config.hpp"
#include "apnea/effort.hpp"
#include "apnea/synth.hpp"
#include "apnea/types.hpp"

namespace apnea::corpus {

/// One night in a manifest. Paths are relative to the manifest's directory
/// unless absolute; `effort` and `labels` may be empty.
struct ManifestEntry {
  std::string subject_id;
  std::string night_id;
  std::string audio;
  std::string effort;
  std::string labels;
  std::optional<double> total_sleep_time_h;
};

/// Paired-data manifest (JSON): {"provenance": {...}, "nights": [entry...]}.
struct Manifest {
  std::vector<ManifestEntry> entries;
  nlohmann::json provenance = nlohmann::json::object();
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& path) const;
  std::vector<std::string> subjects() const;
  std::vector<ManifestEntry> nights_of(const std::set<std::string>& subjects) const;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j, std::filesystem::path base_dir);
  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Audio (with reference events and TST metadata) plus the effort trace, if any.
struct NightRecord {
  AudioNight audio;
  std::vector<float> effort;
};

NightRecord load_record(const Manifest& manifest, const ManifestEntry& entry);

/// A cohort of synthetic subjects whose event rates cycle through
/// `event_rates_per_h` (scaled by a per-subject factor in [0.9, 1.1]). The
/// defaults keep each subject inside one severity band; with 60 s between
/// events an hour holds about 37 of them.
struct CorpusSpec {
  std::size_t subjects = 20;
  std::size_t nights_per_subject = 1;
  double night_duration_s = 3600.0;
  double audio_snr_db = 20.0;
  double effort_suppression_factor = 0.2;
  double breathing_rate_hz = 0.25;
  std::vector<double> event_rates_per_h{2.0, 10.0, 22.0, 34.0};
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

synth::SynthConfig night_config(const CorpusSpec& spec, std::size_t subject, std::size_t night);

/// Writes <dir>/<subject>_<night>.{wav,eff,csv} and <dir>/manifest.json.
Manifest write_synthetic_corpus(const CorpusSpec& spec, const std::filesystem::path& dir,
                                const nlohmann::json& provenance = nlohmann::json::object());

/// Up to `max_count` window indices (all when max_count is 0 or exceeds the
/// night): positives and negatives are drawn half and half where possible,
/// returned in ascending order.
std::vector<std::size_t> select_segments(std::span<const int> labels, std::size_t max_count, std::uint64_t seed);

struct Examples {
  std::vector<effort::EffortExample> effort;
  std::vector<osa::OsaExample> osa;
};

/// Feature matrices for the selected windows of one night; reads the night's
/// feature cache under config.paths.cache_dir when it exists.
void append_examples(const NightRecord& night, const RunConfig& config, std::uint64_t seed, Examples& out);

/// Examples for every night of `subjects`, in manifest order.
Examples build_examples(const Manifest& manifest, const std::set<std::string>& subjects, const RunConfig& config,
                        const std::string& split);

std::filesystem::path cache_path(const std::filesystem::path& cache_dir, const std::string& subject_id,
                                 const std::string& night_id);

}  // namespace apnea::corpus
