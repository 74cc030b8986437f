#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "apnea/types.hpp"

namespace apnea::dsp {

/// A window of samples inside a night. The span borrows from AudioNight::samples.
struct SegmentSlice {
  SegmentIndex index;
  std::span<const float> samples;
};

/// floor((night_s - duration_s) / shift_s) + 1, or 0 when the night is shorter than one window.
std::size_t segment_count(double night_s, double duration_s, double shift_s);

/// Overlapping fixed-length windows starting at 0, shift, 2*shift, ...; a window
/// that would run past the end of the night is dropped.
std::vector<SegmentSlice> segment_night(const AudioNight& night,
                                        double duration_s = kSegmentSeconds,
                                        double shift_s = kSegmentShiftSeconds);

struct LogMelConfig {
  int window_ms = 50;
  int shift_ms = 20;
  int mel_bins = 64;
  double floor = 1e-10;
};

/// Row-major frames x bins matrix of log-Mel energies for one window.
struct LogMelSegment {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> values;
  SegmentIndex segment;
  int frame_shift_ms = 20;
  int window_ms = 50;

  double at(std::size_t frame, std::size_t bin) const { return values[frame * bins + bin]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Hann-windowed power spectra pooled by a triangular HTK Mel filterbank
/// (0 Hz to Nyquist, unit-peak filters), then log(max(E, floor)).
///
/// The signal is center-padded by reflecting window/2 samples at both ends, so a
/// segment of n samples yields ceil(n / hop) frames: 1500 x 64 for 30 s at 16 kHz.
class LogMelExtractor {
 public:
  explicit LogMelExtractor(int sample_rate_hz = kAudioRateHz, LogMelConfig config = {});

  LogMelSegment operator()(std::span<const float> samples, SegmentIndex segment = {}) const;

  std::size_t frame_count(std::size_t n_samples) const;
  std::size_t window_samples() const { return window_.size(); }
  std::size_t hop_samples() const { return hop_; }
  std::size_t fft_size() const { return fft_size_; }
  int sample_rate_hz() const { return sample_rate_hz_; }
  const LogMelConfig& config() const { return config_; }
  /// Center frequency (Hz) of every Mel filter.
  const std::vector<double>& center_frequencies_hz() const { return centers_hz_; }

 private:
  struct Filter {
    std::size_t first_bin = 0;
    std::vector<double> weights;
  };

  int sample_rate_hz_;
  LogMelConfig config_;
  std::size_t hop_;
  std::size_t fft_size_;
  std::vector<double> window_;
  std::vector<Filter> filters_;
  std::vector<double> centers_hz_;
};

/// Convenience wrapper around LogMelExtractor for one-off calls.
LogMelSegment log_mel(std::span<const float> samples, int sample_rate_hz = kAudioRateHz,
                      const LogMelConfig& config = {}, SegmentIndex segment = {});

/// Feature cache: header line "LMEL1 <frames> <bins>\n" followed by little-endian
/// float32 row-major matrices, one per consecutive window of the night.
void write_feature_cache(const std::filesystem::path& path, std::span<const LogMelSegment> segments);
std::vector<LogMelSegment> read_feature_cache(const std::filesystem::path& path,
                                              double duration_s = kSegmentSeconds,
                                              double shift_s = kSegmentShiftSeconds);
/// Reads only the matrix at `index` (window index, not seconds).
LogMelSegment read_feature_cache_entry(const std::filesystem::path& path, std::size_t index,
                                       double duration_s = kSegmentSeconds,
                                       double shift_s = kSegmentShiftSeconds);

}  // namespace apnea::dsp
