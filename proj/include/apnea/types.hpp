#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace apnea {

inline constexpr int kAudioRateHz = 16000;
inline constexpr int kEffortRateHz = 32;
inline constexpr double kSegmentSeconds = 30.0;
inline constexpr double kSegmentShiftSeconds = 10.0;

/// Position of one analysis window inside a night.
struct SegmentIndex {
  double start_s = 0.0;
  double duration_s = kSegmentSeconds;
  double shift_s = kSegmentShiftSeconds;

  double end_s() const { return start_s + duration_s; }
};

enum class EventSource { reference, predicted };

/// An apnoea/hypopnoea interval in seconds from the start of the night.
struct SdbEvent {
  double start_s = 0.0;
  double end_s = 0.0;
  EventSource source = EventSource::reference;

  double duration_s() const { return end_s - start_s; }
  friend bool operator==(const SdbEvent&, const SdbEvent&) = default;
};

/// One night of mono audio plus metadata.
struct AudioNight {
  std::vector<float> samples;
  int sample_rate_hz = kAudioRateHz;
  std::string subject_id;
  std::string night_id;
  std::optional<double> total_sleep_time_h;
  std::vector<SdbEvent> events;

  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
  /// Throws Error(EmptyInput / UnsupportedFormat / ConfigInvalid) on a broken night.
  void validate() const;
};

}  // namespace apnea
