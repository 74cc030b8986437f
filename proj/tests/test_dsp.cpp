#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "apnea/dsp.hpp"
#include "apnea/error.hpp"
#include "apnea/wav.hpp"

using namespace apnea;
using apnea::dsp::LogMelExtractor;

namespace {

std::vector<float> sine(double hz, double seconds, double amp = 0.5, int rate = 16000) {
  std::vector<float> x(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate));
  return x;
}

std::vector<float> noise(std::size_t n, std::uint64_t seed, double sd = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(g(rng));
  return x;
}

template <typename F>
void expect_error(ErrorCode code, F&& f) {
  try {
    f();
    FAIL() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

// Straightforward reference: reflect-pad, Hann, O(N^2) DFT, HTK triangles.
std::vector<double> reference_frame(const std::vector<float>& x, std::size_t frame) {
  const std::size_t win = 800, hop = 320, nfft = 1024, pad = 400;
  const double rate = 16000.0;
  std::vector<double> buf(nfft, 0.0);
  const auto n = static_cast<long>(x.size());
  for (std::size_t i = 0; i < win; ++i) {
    long src = static_cast<long>(frame * hop + i) - static_cast<long>(pad);
    if (src < 0) src = -src;
    if (src >= n) src = 2 * (n - 1) - src;
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / win);
    buf[i] = x[static_cast<std::size_t>(src)] * w;
  }
  std::vector<double> power(nfft / 2 + 1);
  for (std::size_t k = 0; k <= nfft / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < nfft; ++t)
      acc += buf[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / nfft);
    power[k] = std::norm(acc);
  }
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> out(64);
  for (int m = 0; m < 64; ++m) {
    const double lo = hz(mel(8000.0) * m / 65.0), mid = hz(mel(8000.0) * (m + 1) / 65.0),
                 hi = hz(mel(8000.0) * (m + 2) / 65.0);
    double e = 0.0;
    for (std::size_t k = 0; k <= nfft / 2; ++k) {
      const double f = k * rate / nfft;
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      e += w * power[k];
    }
    out[m] = std::log(std::max(e, 1e-10));
  }
  return out;
}

}  // namespace

TEST(Segmentation, SevenHourNightCount) {
  // Enumerate starts 0, 10, 20, ... while the window fits.
  std::size_t enumerated = 0;
  for (double s = 0.0; s + 30.0 <= 25200.0; s += 10.0) ++enumerated;
  EXPECT_EQ(enumerated, 2518u);
  EXPECT_EQ(dsp::segment_count(25200.0, 30.0, 10.0), enumerated);

  // The slicer itself, on a low-rate night so the buffer stays small.
  AudioNight night;
  night.sample_rate_hz = 100;
  night.samples.assign(25200 * 100, 0.0f);
  const auto segs = dsp::segment_night(night);
  ASSERT_EQ(segs.size(), enumerated);
  EXPECT_DOUBLE_EQ(segs[1].index.start_s, 10.0);
  EXPECT_DOUBLE_EQ(segs.back().index.start_s, 25170.0);
  EXPECT_EQ(segs.back().samples.size(), 3000u);
}

TEST(Segmentation, ExactFitGivesOneSegment) {
  AudioNight night;
  night.samples.assign(30 * 16000, 0.0f);
  const auto segs = dsp::segment_night(night);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].index.start_s, 0.0);
  EXPECT_EQ(segs[0].samples.size(), 480000u);
}

TEST(Segmentation, ShortNightRejected) {
  AudioNight night;
  night.samples.assign(29 * 16000, 0.0f);
  expect_error(ErrorCode::NightTooShort, [&] { dsp::segment_night(night); });
}

TEST(Segmentation, OverrunningWindowDropped) {
  AudioNight night;
  night.samples.assign(65 * 16000, 0.0f);
  const auto segs = dsp::segment_night(night);
  ASSERT_EQ(segs.size(), 4u);  // 0, 10, 20, 30; 40 would end at 70
  EXPECT_DOUBLE_EQ(segs.back().index.end_s(), 60.0);
}

TEST(Segmentation, InvalidNight) {
  AudioNight empty;
  expect_error(ErrorCode::EmptyInput, [&] { dsp::segment_night(empty); });
  AudioNight night;
  night.samples.assign(60 * 16000, 0.0f);
  night.total_sleep_time_h = 1.0;  // longer than the recording
  expect_error(ErrorCode::ConfigInvalid, [&] { dsp::segment_night(night); });
}

TEST(LogMel, CanonicalShape) {
  const auto x = noise(480000, 1);
  const auto m = dsp::log_mel(x);
  EXPECT_EQ(m.frames, 1500u);
  EXPECT_EQ(m.bins, 64u);
  EXPECT_EQ(m.values.size(), 1500u * 64u);
  EXPECT_EQ(m.frame_shift_ms, 20);
  EXPECT_EQ(m.window_ms, 50);
  for (double v : m.values) ASSERT_TRUE(std::isfinite(v));
}

TEST(LogMel, SilenceIsTheFloor) {
  const std::vector<float> x(480000, 0.0f);
  const auto m = dsp::log_mel(x);
  for (double v : m.values) ASSERT_EQ(v, std::log(1e-10));
}

TEST(LogMel, MatchesDirectComputation) {
  const auto x = noise(480000, 2);
  const LogMelExtractor extract;
  const auto m = extract(x);
  for (std::size_t frame : {0u, 1u, 700u, 1499u}) {
    const auto ref = reference_frame(x, frame);
    for (std::size_t b = 0; b < 64; ++b) EXPECT_NEAR(m.at(frame, b), ref[b], 1e-9) << "frame " << frame << " bin " << b;
  }
}

TEST(LogMel, SineLandsInNearestBin) {
  // HTK centers: equally spaced on the Mel scale between 0 and 8 kHz.
  const double mel_top = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  std::size_t nearest = 0;
  double best = 1e9;
  for (std::size_t m = 0; m < 64; ++m) {
    const double c = 700.0 * (std::pow(10.0, mel_top * (m + 1) / 65.0 / 2595.0) - 1.0);
    if (std::abs(c - 1000.0) < best) {
      best = std::abs(c - 1000.0);
      nearest = m;
    }
  }
  const LogMelExtractor extract;
  EXPECT_NEAR(extract.center_frequencies_hz()[nearest], 1000.0, 40.0);
  const auto m = extract(sine(1000.0, 30.0));
  for (std::size_t f = 0; f < m.frames; ++f) {
    std::size_t arg = 0;
    for (std::size_t b = 1; b < m.bins; ++b)
      if (m.at(f, b) > m.at(f, arg)) arg = b;
    ASSERT_EQ(arg, nearest) << "frame " << f;
  }
}

TEST(LogMel, OneHopShiftMovesInteriorFrames) {
  const auto x = noise(480000 + 320, 3);
  const std::vector<float> a(x.begin(), x.end() - 320), b(x.begin() + 320, x.end());
  const LogMelExtractor extract;
  const auto ma = extract(a), mb = extract(b);
  // Frames 3..1497 of a and their partners in b never touch the padding.
  for (std::size_t f = 3; f + 3 < ma.frames; ++f)
    for (std::size_t k = 0; k < 64; ++k) ASSERT_NEAR(mb.at(f - 1, k), ma.at(f, k), 1e-10);
}

TEST(LogMel, LouderNeverLower) {
  const auto x = noise(480000, 4);
  std::vector<float> y(x);
  for (auto& v : y) v *= 1.7f;
  const auto mx = dsp::log_mel(x), my = dsp::log_mel(y);
  for (std::size_t i = 0; i < mx.values.size(); ++i) ASSERT_GE(my.values[i], mx.values[i]);
}

TEST(LogMel, Deterministic) {
  const auto x = noise(480000, 5);
  EXPECT_EQ(dsp::log_mel(x).values, dsp::log_mel(x).values);
}

TEST(LogMel, RejectsBadInput) {
  expect_error(ErrorCode::EmptyInput, [] { dsp::log_mel(std::vector<float>{}); });
  std::vector<float> x(16000, 0.0f);
  x[100] = std::nanf("");
  expect_error(ErrorCode::NonFiniteSample, [&] { dsp::log_mel(x); });
  x[100] = INFINITY;
  expect_error(ErrorCode::NonFiniteSample, [&] { dsp::log_mel(x); });
}

TEST(LogMel, FrameCountRoundsUp) {
  const LogMelExtractor extract;
  EXPECT_EQ(extract.frame_count(480000), 1500u);
  EXPECT_EQ(extract.frame_count(480001), 1501u);
  EXPECT_EQ(extract.window_samples(), 800u);
  EXPECT_EQ(extract.hop_samples(), 320u);
  EXPECT_EQ(extract.fft_size(), 1024u);
}

TEST(FeatureCache, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "apnea_test_cache";
  std::filesystem::create_directories(dir);
  std::vector<dsp::LogMelSegment> segs;
  for (int i = 0; i < 3; ++i) segs.push_back(dsp::log_mel(noise(16000 * 2, 10 + i), 16000, {}, {i * 1.0, 2.0, 1.0}));
  const auto path = dir / "night.lmel";
  dsp::write_feature_cache(path, segs);
  const auto back = dsp::read_feature_cache(path, 2.0, 1.0);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_EQ(back[i].frames, segs[i].frames);
    for (std::size_t k = 0; k < segs[i].values.size(); ++k)
      ASSERT_EQ(back[i].values[k], static_cast<double>(static_cast<float>(segs[i].values[k])));
  }
  const auto one = dsp::read_feature_cache_entry(path, 2, 2.0, 1.0);
  EXPECT_EQ(one.values, back[2].values);
  EXPECT_DOUBLE_EQ(one.segment.start_s, 2.0);
  expect_error(ErrorCode::ShapeMismatch, [&] { dsp::read_feature_cache_entry(path, 3); });
  std::filesystem::remove_all(dir);
}

TEST(Wav, RoundTripAndFormatChecks) {
  const auto dir = std::filesystem::temp_directory_path() / "apnea_test_wav";
  std::filesystem::create_directories(dir);
  const auto x = sine(440.0, 0.5);
  wav::write_wav(dir / "f.wav", x, 16000, wav::Encoding::float32);
  EXPECT_EQ(wav::read_wav(dir / "f.wav").samples, x);
  wav::write_wav(dir / "p.wav", x, 16000, wav::Encoding::pcm16);
  const auto p = wav::read_wav(dir / "p.wav");
  ASSERT_EQ(p.samples.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(p.samples[i], x[i], 1.0 / 32767.0);

  const auto night = wav::load_night(dir / "p.wav", "s1", "n1");
  EXPECT_EQ(night.subject_id, "s1");
  EXPECT_EQ(night.sample_rate_hz, 16000);

  wav::write_wav(dir / "r.wav", x, 8000);
  expect_error(ErrorCode::UnsupportedFormat, [&] { wav::load_night(dir / "r.wav"); });
  std::ofstream(dir / "junk.wav") << "not a wave file";
  expect_error(ErrorCode::UnsupportedFormat, [&] { wav::read_wav(dir / "junk.wav"); });
  std::filesystem::remove_all(dir);
}
