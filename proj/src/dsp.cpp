#include "apnea/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <unsupported/Eigen/FFT>

#include "apnea/error.hpp"

namespace apnea {

void AudioNight::validate() const {
  if (sample_rate_hz <= 0) throw Error(ErrorCode::UnsupportedFormat, "dsp", "sample rate must be positive");
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "dsp", "night " + night_id + " has no samples");
  if (total_sleep_time_h) {
    const double tst = *total_sleep_time_h;
    if (!(tst > 0.0) || tst * 3600.0 > duration_s() + 1e-9)
      throw Error(ErrorCode::ConfigInvalid, "dsp",
                  "total sleep time must be positive and not exceed the recording for night " + night_id);
  }
}

namespace dsp {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

std::size_t to_samples(double seconds, int rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

std::size_t segment_count(double night_s, double duration_s, double shift_s) {
  if (!(duration_s > 0.0) || !(shift_s > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "dsp", "window duration and shift must be positive");
  if (night_s + 1e-9 < duration_s) return 0;
  return static_cast<std::size_t>(std::floor((night_s - duration_s) / shift_s + 1e-9)) + 1;
}

std::vector<SegmentSlice> segment_night(const AudioNight& night, double duration_s, double shift_s) {
  night.validate();
  if (!(duration_s > 0.0) || !(shift_s > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "dsp", "window duration and shift must be positive");
  const std::size_t win = to_samples(duration_s, night.sample_rate_hz);
  const std::size_t hop = to_samples(shift_s, night.sample_rate_hz);
  const std::size_t n = night.samples.size();
  if (n < win) {
    std::ostringstream msg;
    msg << "night " << night.night_id << " lasts " << night.duration_s() << " s, shorter than a "
        << duration_s << " s window";
    throw Error(ErrorCode::NightTooShort, "dsp", msg.str());
  }
  const std::size_t count = (n - win) / hop + 1;
  std::vector<SegmentSlice> out;
  out.reserve(count);
  const std::span<const float> all(night.samples);
  for (std::size_t i = 0; i < count; ++i) {
    SegmentIndex idx{static_cast<double>(i) * shift_s, duration_s, shift_s};
    out.push_back({idx, all.subspan(i * hop, win)});
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

LogMelExtractor::LogMelExtractor(int sample_rate_hz, LogMelConfig config)
    : sample_rate_hz_(sample_rate_hz), config_(config) {
  if (sample_rate_hz <= 0 || config.window_ms <= 0 || config.shift_ms <= 0 || config.mel_bins <= 0 ||
      !(config.floor > 0.0))
    throw Error(ErrorCode::ConfigInvalid, "dsp", "invalid log-Mel configuration");
  const std::size_t win = static_cast<std::size_t>(sample_rate_hz) * config.window_ms / 1000;
  hop_ = static_cast<std::size_t>(sample_rate_hz) * config.shift_ms / 1000;
  if (win < 2 || hop_ == 0) throw Error(ErrorCode::ConfigInvalid, "dsp", "window too short for sample rate");
  fft_size_ = next_pow2(win);

  // Periodic Hann.
  window_.resize(win);
  for (std::size_t i = 0; i < win; ++i)
    window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));

  const auto n_filters = static_cast<std::size_t>(config.mel_bins);
  const double nyquist = sample_rate_hz / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(n_filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_filters + 1));

  const std::size_t n_bins = fft_size_ / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate_hz) / static_cast<double>(fft_size_);
  filters_.resize(n_filters);
  centers_hz_.resize(n_filters);
  for (std::size_t m = 0; m < n_filters; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    centers_hz_[m] = mid;
    Filter& f = filters_[m];
    std::size_t first = n_bins, last = 0;
    std::vector<double> w(n_bins, 0.0);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double hz = static_cast<double>(k) * bin_hz;
      double v = 0.0;
      if (hz > lo && hz <= mid) v = (hz - lo) / (mid - lo);
      else if (hz > mid && hz < hi) v = (hi - hz) / (hi - mid);
      if (v > 0.0) {
        w[k] = v;
        first = std::min(first, k);
        last = std::max(last, k);
      }
    }
    if (first > last) throw Error(ErrorCode::ConfigInvalid, "dsp", "Mel filter has no FFT support; use fewer bins");
    f.first_bin = first;
    f.weights.assign(w.begin() + static_cast<std::ptrdiff_t>(first), w.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  }
}

std::size_t LogMelExtractor::frame_count(std::size_t n_samples) const {
  return (n_samples + hop_ - 1) / hop_;
}

LogMelSegment LogMelExtractor::operator()(std::span<const float> samples, SegmentIndex segment) const {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "dsp", "log-Mel input is empty");
  for (float s : samples)
    if (!std::isfinite(s)) throw Error(ErrorCode::NonFiniteSample, "dsp", "log-Mel input contains NaN or Inf");
  const std::size_t n = samples.size();
  const std::size_t win = window_.size();
  const std::size_t pad = win / 2;
  if (n <= pad) throw Error(ErrorCode::EmptyInput, "dsp", "log-Mel input shorter than half a window");

  auto padded_at = [&](std::size_t i) -> double {
    std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad);
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    if (src < 0) src = -src;
    else if (src > last) src = 2 * last - src;
    return static_cast<double>(samples[static_cast<std::size_t>(src)]);
  };

  LogMelSegment out;
  out.frames = frame_count(n);
  out.bins = filters_.size();
  out.values.resize(out.frames * out.bins);
  out.segment = segment;
  out.frame_shift_ms = config_.shift_ms;
  out.window_ms = config_.window_ms;

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(fft_size_, 0.0);
  std::vector<std::complex<double>> spectrum;
  std::vector<double> power(fft_size_ / 2 + 1);

  for (std::size_t t = 0; t < out.frames; ++t) {
    const std::size_t base = t * hop_;
    for (std::size_t i = 0; i < win; ++i) frame[i] = padded_at(base + i) * window_[i];
    fft.fwd(spectrum, frame);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spectrum[k]);
    double* row = out.values.data() + t * out.bins;
    for (std::size_t m = 0; m < filters_.size(); ++m) {
      const Filter& f = filters_[m];
      double e = 0.0;
      for (std::size_t j = 0; j < f.weights.size(); ++j) e += f.weights[j] * power[f.first_bin + j];
      row[m] = std::log(std::max(e, config_.floor));
    }
  }
  return out;
}

LogMelSegment log_mel(std::span<const float> samples, int sample_rate_hz, const LogMelConfig& config,
                      SegmentIndex segment) {
  return LogMelExtractor(sample_rate_hz, config)(samples, segment);
}

namespace {

struct CacheHeader {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::streamoff payload_offset = 0;
  std::size_t count = 0;
};

CacheHeader read_cache_header(std::ifstream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::UnsupportedFormat, "dsp", "empty feature cache " + path.string());
  std::istringstream hs(line);
  std::string magic;
  CacheHeader h;
  if (!(hs >> magic >> h.frames >> h.bins) || magic != "LMEL1" || h.frames == 0 || h.bins == 0)
    throw Error(ErrorCode::UnsupportedFormat, "dsp", "bad LMEL1 header in " + path.string());
  h.payload_offset = in.tellg();
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg() - h.payload_offset);
  const std::size_t matrix_bytes = h.frames * h.bins * sizeof(float);
  if (bytes % matrix_bytes != 0)
    throw Error(ErrorCode::UnsupportedFormat, "dsp", "truncated feature cache " + path.string());
  h.count = bytes / matrix_bytes;
  return h;
}

LogMelSegment read_matrix(std::ifstream& in, const CacheHeader& h, std::size_t index, double duration_s,
                          double shift_s) {
  LogMelSegment seg;
  seg.frames = h.frames;
  seg.bins = h.bins;
  seg.segment = {static_cast<double>(index) * shift_s, duration_s, shift_s};
  std::vector<float> buf(h.frames * h.bins);
  in.seekg(h.payload_offset + static_cast<std::streamoff>(index * buf.size() * sizeof(float)));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw Error(ErrorCode::Io, "dsp", "short read in feature cache");
  seg.values.assign(buf.begin(), buf.end());
  return seg;
}

}  // namespace

void write_feature_cache(const std::filesystem::path& path, std::span<const LogMelSegment> segments) {
  if (segments.empty()) throw Error(ErrorCode::EmptyInput, "dsp", "no segments to cache");
  const std::size_t frames = segments.front().frames, bins = segments.front().bins;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "dsp", "cannot write " + path.string());
  out << "LMEL1 " << frames << ' ' << bins << '\n';
  std::vector<float> buf(frames * bins);
  for (const auto& s : segments) {
    if (s.frames != frames || s.bins != bins)
      throw Error(ErrorCode::ShapeMismatch, "dsp", "feature cache needs equally shaped segments");
    std::transform(s.values.begin(), s.values.end(), buf.begin(), [](double v) { return static_cast<float>(v); });
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::Io, "dsp", "write failed for " + path.string());
}

std::vector<LogMelSegment> read_feature_cache(const std::filesystem::path& path, double duration_s,
                                              double shift_s) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "dsp", "cannot open " + path.string());
  const CacheHeader h = read_cache_header(in, path);
  std::vector<LogMelSegment> out;
  out.reserve(h.count);
  for (std::size_t i = 0; i < h.count; ++i) out.push_back(read_matrix(in, h, i, duration_s, shift_s));
  return out;
}

LogMelSegment read_feature_cache_entry(const std::filesystem::path& path, std::size_t index, double duration_s,
                                       double shift_s) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "dsp", "cannot open " + path.string());
  const CacheHeader h = read_cache_header(in, path);
  if (index >= h.count) throw Error(ErrorCode::ShapeMismatch, "dsp", "feature cache index out of range");
  return read_matrix(in, h, index, duration_s, shift_s);
}

}  // namespace dsp
}  // namespace apnea
