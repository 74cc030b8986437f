#include "apnea/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "apnea/error.hpp"
#include "apnea/hash.hpp"

namespace apnea::synth {

namespace {

constexpr const char* kModule = "synth";
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kMaxScheduleDraws = 10000;

// Carrier bands and the per-night ranges of the nuisance parameters.
constexpr double kInspiratoryHz = 800.0;
constexpr double kExpiratoryHz = 3500.0;
constexpr double kCarrierQ = 0.7;
constexpr double kDriftDepth = 0.1;
constexpr double kAudioGain = 0.1;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, kModule, what); }

// RBJ band-pass (0 dB peak) run as direct form I.
class Biquad {
 public:
  Biquad(double center_hz, double q, double rate_hz) {
    const double w0 = kTwoPi * center_hz / rate_hz;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
  }
  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }
  /// Output variance for unit-variance white input.
  double noise_gain(double rate_hz) const {
    Biquad probe = *this;
    probe.x1_ = probe.x2_ = probe.y1_ = probe.y2_ = 0.0;
    double energy = 0.0;
    const auto n = static_cast<std::size_t>(rate_hz);
    for (std::size_t i = 0; i < n; ++i) {
      const double h = probe(i == 0 ? 1.0 : 0.0);
      energy += h * h;
    }
    return energy;
  }

 private:
  double b0_ = 0, b2_ = 0, a1_ = 0, a2_ = 0;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

struct Drift {
  double freq_hz[3];
  double phase[3];
  double weight[3];

  double operator()(double t) const {
    double v = 0.0;
    for (int k = 0; k < 3; ++k) v += weight[k] * std::sin(kTwoPi * freq_hz[k] * t + phase[k]);
    return 1.0 + kDriftDepth * v;
  }
};

// Everything about a night that is a smooth function of time.
struct EffortModel {
  double rate_hz = 0.25;
  double phase = 0.0;
  double rate_wobble = 0.0;  // relative depth of slow breathing-rate variation
  double wobble_hz = 0.0;
  double suppression = 0.2;
  Drift drift{};
  const std::vector<SdbEvent>* events = nullptr;

  double breathing_phase(double t) const {
    // Integral of rate_hz * (1 + wobble * sin(2 pi wobble_hz t)).
    const double w = kTwoPi * wobble_hz;
    return kTwoPi * rate_hz * (t + rate_wobble * (1.0 - std::cos(w * t)) / w) + phase;
  }
};

double effort_value(const EffortModel& m, double t, std::size_t& cursor) {
  const auto& ev = *m.events;
  while (cursor < ev.size() && ev[cursor].end_s <= t) ++cursor;
  const bool inside = cursor < ev.size() && ev[cursor].start_s <= t;
  return m.drift(t) * (inside ? m.suppression : 1.0) * std::sin(m.breathing_phase(t));
}

// Zero-mean, unit-variance uniform white noise. The band-pass filters make the
// carriers close to Gaussian anyway, and this is several times cheaper.
double unit_white(std::mt19937_64& rng) {
  constexpr double kScale = 0x1.0p-53;
  return (static_cast<double>(rng() >> 11) * kScale - 0.5) * 2.0 * std::numbers::sqrt3;
}

}  // namespace

void SynthConfig::validate() const {
  if (!(night_duration_s >= 60.0)) invalid("night_duration_s must be at least 60");
  if (!(breathing_rate_hz > 0.0 && breathing_rate_hz < 2.0)) invalid("breathing_rate_hz must lie in (0, 2)");
  if (!(event_rate_per_h >= 0.0)) invalid("event_rate_per_h must be non-negative");
  if (!(event_min_s > 0.0 && event_max_s >= event_min_s)) invalid("event duration range must satisfy 0 < min <= max");
  if (!std::isfinite(audio_snr_db)) invalid("audio_snr_db must be finite");
  if (!(effort_suppression_factor >= 0.0 && effort_suppression_factor <= 1.0))
    invalid("effort_suppression_factor must lie in [0, 1]");
  if (!(min_event_gap_s >= 0.0 && edge_margin_s >= 0.0)) invalid("event spacing must be non-negative");
  if (subject_id.empty() || night_id.empty()) invalid("subject_id and night_id must be non-empty");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"seed", seed},
          {"night_duration_s", night_duration_s},
          {"breathing_rate_hz", breathing_rate_hz},
          {"event_rate_per_h", event_rate_per_h},
          {"event_duration_range_s", {event_min_s, event_max_s}},
          {"audio_snr_db", audio_snr_db},
          {"effort_suppression_factor", effort_suppression_factor},
          {"min_event_gap_s", min_event_gap_s},
          {"edge_margin_s", edge_margin_s},
          {"subject_id", subject_id},
          {"night_id", night_id}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.seed = j.value("seed", c.seed);
  c.night_duration_s = j.value("night_duration_s", c.night_duration_s);
  c.breathing_rate_hz = j.value("breathing_rate_hz", c.breathing_rate_hz);
  c.event_rate_per_h = j.value("event_rate_per_h", c.event_rate_per_h);
  if (j.contains("event_duration_range_s")) {
    const auto& r = j.at("event_duration_range_s");
    if (!r.is_array() || r.size() != 2) invalid("event_duration_range_s must be [min, max]");
    c.event_min_s = r[0].get<double>();
    c.event_max_s = r[1].get<double>();
  }
  c.audio_snr_db = j.value("audio_snr_db", c.audio_snr_db);
  c.effort_suppression_factor = j.value("effort_suppression_factor", c.effort_suppression_factor);
  c.min_event_gap_s = j.value("min_event_gap_s", c.min_event_gap_s);
  c.edge_margin_s = j.value("edge_margin_s", c.edge_margin_s);
  c.subject_id = j.value("subject_id", c.subject_id);
  c.night_id = j.value("night_id", c.night_id);
  c.validate();
  return c;
}

std::vector<SdbEvent> schedule_events(const SynthConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(std::llround(config.event_rate_per_h * config.night_duration_s / 3600.0));
  if (n == 0) return {};
  const double usable = config.night_duration_s - 2.0 * config.edge_margin_s;
  std::mt19937_64 rng(derive_seed(config.seed, "events"));
  std::uniform_real_distribution<double> duration(config.event_min_s, config.event_max_s);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int draw = 0; draw < kMaxScheduleDraws; ++draw) {
    std::vector<double> durations(n);
    double busy = config.min_event_gap_s * static_cast<double>(n - 1);
    for (double& d : durations) {
      d = duration(rng);
      busy += d;
    }
    const double slack = usable - busy;
    if (slack < 0.0) continue;
    // Free time split at n sorted uniform points: the gaps of a conditioned Poisson process.
    std::vector<double> cuts(n);
    for (double& c : cuts) c = unit(rng) * slack;
    std::sort(cuts.begin(), cuts.end());
    std::vector<SdbEvent> events(n);
    double used = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double start = config.edge_margin_s + cuts[i] + used;
      events[i] = {start, start + durations[i], EventSource::reference};
      used += durations[i] + config.min_event_gap_s;
    }
    return events;
  }
  invalid("cannot place " + std::to_string(n) + " events in " + std::to_string(config.night_duration_s) + " s");
}

SynthNight generate(const SynthConfig& config) {
  config.validate();
  SynthNight night;
  night.config = config;
  night.events = schedule_events(config);
  night.true_ahi = static_cast<double>(night.events.size()) / (config.night_duration_s / 3600.0);

  std::mt19937_64 subject_rng(derive_seed(config.seed, "subject"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EffortModel model;
  model.rate_hz = config.breathing_rate_hz * (0.9 + 0.2 * u(subject_rng));
  model.phase = kTwoPi * u(subject_rng);
  model.rate_wobble = 0.05 * u(subject_rng);
  model.wobble_hz = 1.0 / (120.0 + 240.0 * u(subject_rng));
  model.suppression = config.effort_suppression_factor;
  for (int k = 0; k < 3; ++k) {
    model.drift.freq_hz[k] = 1.0 / (60.0 + 540.0 * u(subject_rng));
    model.drift.phase[k] = kTwoPi * u(subject_rng);
    model.drift.weight[k] = 1.0 / 3.0;
  }
  model.events = &night.events;
  const double expiratory_gain = 0.5 + 0.3 * u(subject_rng);

  const auto effort_n = static_cast<std::size_t>(std::llround(config.night_duration_s * kEffortRateHz));
  night.effort.resize(effort_n);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < effort_n; ++i)
    night.effort[i] = static_cast<float>(effort_value(model, static_cast<double>(i) / kEffortRateHz, cursor));

  const double rate = kAudioRateHz;
  const auto audio_n = static_cast<std::size_t>(std::llround(config.night_duration_s * rate));
  Biquad low(kInspiratoryHz, kCarrierQ, rate), high(kExpiratoryHz, kCarrierQ, rate);
  const double low_norm = 1.0 / std::sqrt(low.noise_gain(rate));
  const double high_norm = 1.0 / std::sqrt(high.noise_gain(rate));
  std::mt19937_64 low_rng(derive_seed(config.seed, "carrier.low"));
  std::mt19937_64 high_rng(derive_seed(config.seed, "carrier.high"));
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Clean signal first (it sets the noise level), then noise in place.
  night.audio.samples.resize(audio_n);
  double power = 0.0;
  // Effort is smooth at audio time scales; evaluate it on a 1 kHz grid and
  // interpolate (16 audio samples per grid step).
  constexpr std::size_t kGridStep = 16;
  std::vector<double> grid(audio_n / kGridStep + 2);
  cursor = 0;
  for (std::size_t g = 0; g < grid.size(); ++g)
    grid[g] = effort_value(model, static_cast<double>(g * kGridStep) / rate, cursor);
  for (std::size_t i = 0; i < audio_n; ++i) {
    const std::size_t g = i / kGridStep;
    const double frac = static_cast<double>(i % kGridStep) / kGridStep;
    const double e = grid[g] + frac * (grid[g + 1] - grid[g]);
    const double c_low = low(unit_white(low_rng)) * low_norm;
    const double c_high = high(unit_white(high_rng)) * high_norm;
    const double s = kAudioGain * (std::max(e, 0.0) * c_low + expiratory_gain * std::max(-e, 0.0) * c_high);
    night.audio.samples[i] = static_cast<float>(s);
    power += s * s;
  }
  night.signal_power = power / static_cast<double>(audio_n);
  night.noise_power = night.signal_power * std::pow(10.0, -config.audio_snr_db / 10.0);

  std::mt19937_64 noise_rng(derive_seed(config.seed, "noise"));
  const double noise_sd = std::sqrt(night.noise_power);
  for (float& x : night.audio.samples)
    x = static_cast<float>(std::clamp(static_cast<double>(x) + noise_sd * gauss(noise_rng), -1.0, 1.0));

  night.audio.sample_rate_hz = kAudioRateHz;
  night.audio.subject_id = config.subject_id;
  night.audio.night_id = config.night_id;
  night.audio.events = night.events;
  return night;
}

void degrade_snr(SynthNight& night, double target_snr_db, std::uint64_t seed) {
  const double target = night.signal_power * std::pow(10.0, -target_snr_db / 10.0);
  if (target < night.noise_power) invalid("target SNR is above the night's current SNR");
  const double extra_sd = std::sqrt(target - night.noise_power);
  std::mt19937_64 rng(derive_seed(seed, "degrade"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (float& s : night.audio.samples)
    s = static_cast<float>(std::clamp(static_cast<double>(s) + extra_sd * gauss(rng), -1.0, 1.0));
  night.noise_power = target;
  night.config.audio_snr_db = target_snr_db;
}

}  // namespace apnea::synth
