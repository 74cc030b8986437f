#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "apnea/types.hpp"

namespace apnea::events {

struct SegmentProb {
  double start_s = 0.0;
  double prob = 0.0;
};

struct EventConfig {
  double threshold = 0.5;
  double gap_s = 10.0;
  double min_duration_s = 10.0;
  double window_s = kSegmentSeconds;

  void validate() const;
};

/// Windows with prob >= threshold become [start, start + window] intervals;
/// intervals that overlap or are at most gap_s apart are merged, and merged
/// episodes shorter than min_duration_s are dropped.
/// Throws Error(UnsortedInput) unless starts are non-decreasing.
std::vector<SdbEvent> merge_events(std::span<const SegmentProb> probs, const EventConfig& config = {});

/// events / tst_h. Throws Error(NonPositiveTst) when tst_h <= 0.
double compute_ahi(std::size_t event_count, double tst_h);
inline double compute_ahi(std::span<const SdbEvent> events, double tst_h) { return compute_ahi(events.size(), tst_h); }

enum class Severity { healthy, mild, moderate, severe };

/// <5 healthy, [5,15) mild, [15,30) moderate, >=30 severe.
/// Throws Error(NegativeAhi) for negative or NaN input.
Severity severity(double ahi);
std::string_view to_string(Severity s);

/// 1 for every window overlapping some event by at least min_overlap_s.
std::vector<int> segment_labels(std::span<const SegmentIndex> segments, std::span<const SdbEvent> events,
                                double min_overlap_s = 10.0);

/// Labels file: one "start_s,end_s" line per event; blank lines and lines
/// starting with '#' are ignored.
std::vector<SdbEvent> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, std::span<const SdbEvent> events);
std::vector<SdbEvent> parse_labels(std::string_view text);

enum class TstSource { metadata, recording };

struct NightReport {
  std::string subject_id;
  std::string night_id;
  std::size_t event_count = 0;
  double tst_h = 0.0;
  TstSource tst_source = TstSource::recording;
  double ahi = 0.0;
  Severity severity = Severity::healthy;
  EventConfig config;
  std::vector<SegmentProb> segment_probs;
  std::vector<SdbEvent> events;

  nlohmann::json to_json() const;
};

/// TST from metadata when present, otherwise the recording length.
std::pair<double, TstSource> total_sleep_time(const AudioNight& night);

/// Merges `probs`, then fills AHI and severity for `night`.
NightReport build_report(const AudioNight& night, std::vector<SegmentProb> probs, const EventConfig& config = {});

}  // namespace apnea::events
