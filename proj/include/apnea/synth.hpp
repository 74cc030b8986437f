#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "apnea/types.hpp"

namespace apnea::synth {

struct SynthConfig {
  std::uint64_t seed = 0;
  double night_duration_s = 3600.0;
  double breathing_rate_hz = 0.25;
  double event_rate_per_h = 15.0;
  double event_min_s = 10.0;
  double event_max_s = 60.0;
  double audio_snr_db = 20.0;
  double effort_suppression_factor = 0.2;
  /// Events keep this far from each other and from both ends of the night.
  double min_event_gap_s = 60.0;
  double edge_margin_s = 30.0;
  std::string subject_id = "s000";
  std::string night_id = "n0";

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthNight {
  AudioNight audio;           // events mirrored into audio.events
  std::vector<float> effort;  // whole night at 32 Hz
  std::vector<SdbEvent> events;
  double true_ahi = 0.0;
  double signal_power = 0.0;  // mean power of the audio before noise
  double noise_power = 0.0;
  SynthConfig config;
};

/// round(rate * hours) events with durations uniform in [min, max], placed as
/// uniform order statistics over the free time so that neighbours stay
/// min_event_gap_s apart. Throws Error(ConfigInvalid) when no placement is
/// found within 10^4 draws.
std::vector<SdbEvent> schedule_events(const SynthConfig& config);

/// Effort is a drifting-amplitude breathing sinusoid scaled by the suppression
/// factor inside events. Audio carries the inspiratory half-wave on a low band
/// noise carrier and the expiratory half-wave on a high band carrier, plus
/// white noise at audio_snr_db.
SynthNight generate(const SynthConfig& config);

/// Adds independent white noise so the night's SNR drops to `target_snr_db`.
/// Throws Error(ConfigInvalid) if the night is already noisier than that.
void degrade_snr(SynthNight& night, double target_snr_db, std::uint64_t seed);

}  // namespace apnea::synth
