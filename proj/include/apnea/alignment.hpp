#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace apnea::align {

inline constexpr int kEnvelopeRateHz = 500;

struct LagEstimate {
  std::int64_t lag_samples = 0;  // at the envelope rate; positive means `b` lags `a`
  double lag_s = 0.0;
  double peak_normalized_correlation = 0.0;
};

/// Rectify, average over each output period, and decimate. `from_hz` must be an
/// integer multiple of `to_hz`; the output has floor(n * to_hz / from_hz) points.
std::vector<double> downsample_envelope(std::span<const float> samples, int from_hz, int to_hz = kEnvelopeRateHz);

/// Lag maximising the Pearson correlation between a[n] and b[n + lag], evaluated
/// on the overlap of the two sequences, over integer lags in [-max_lag, +max_lag].
/// Exactly tied peaks resolve toward the smallest |lag|.
LagEstimate estimate_lag(std::span<const double> a, std::span<const double> b, double max_lag_s = 30.0,
                         int rate_hz = kEnvelopeRateHz);

}  // namespace apnea::align
