#include "apnea/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "apnea/error.hpp"

namespace apnea::align {

std::vector<double> downsample_envelope(std::span<const float> samples, int from_hz, int to_hz) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "alignment", "envelope input is empty");
  if (from_hz <= 0 || to_hz <= 0 || from_hz % to_hz != 0)
    throw Error(ErrorCode::UnsupportedFormat, "alignment",
                "source rate " + std::to_string(from_hz) + " Hz is not a multiple of " + std::to_string(to_hz) + " Hz");
  const auto factor = static_cast<std::size_t>(from_hz / to_hz);
  const std::size_t n_out = samples.size() / factor;
  std::vector<double> env(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    double acc = 0.0;
    const float* p = samples.data() + j * factor;
    for (std::size_t i = 0; i < factor; ++i) {
      if (!std::isfinite(p[i])) throw Error(ErrorCode::NonFiniteSample, "alignment", "envelope input is not finite");
      acc += std::abs(static_cast<double>(p[i]));
    }
    env[j] = acc / static_cast<double>(factor);
  }
  return env;
}

namespace {

std::vector<double> centered(std::span<const double> x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double var = 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw Error(ErrorCode::NonFiniteSample, "alignment", "lag input is not finite");
    out[i] = x[i] - mean;
    var += out[i] * out[i];
  }
  if (!(var > 0.0)) throw Error(ErrorCode::DegenerateInput, "alignment", "lag input has zero variance");
  return out;
}

std::vector<double> prefix(const std::vector<double>& x, bool squared) {
  std::vector<double> p(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) p[i + 1] = p[i] + (squared ? x[i] * x[i] : x[i]);
  return p;
}

}  // namespace

LagEstimate estimate_lag(std::span<const double> a_in, std::span<const double> b_in, double max_lag_s, int rate_hz) {
  if (a_in.empty() || b_in.empty()) throw Error(ErrorCode::EmptyInput, "alignment", "lag input is empty");
  if (!(max_lag_s >= 0.0) || rate_hz <= 0) throw Error(ErrorCode::ConfigInvalid, "alignment", "invalid max lag");
  const auto max_lag = static_cast<std::int64_t>(std::llround(max_lag_s * rate_hz));
  const auto na = static_cast<std::int64_t>(a_in.size());
  const auto nb = static_cast<std::int64_t>(b_in.size());
  if (na <= max_lag + 1 || nb <= max_lag + 1)
    throw Error(ErrorCode::ConfigInvalid, "alignment", "sequences must be longer than the maximum lag");

  const std::vector<double> a = centered(a_in);
  const std::vector<double> b = centered(b_in);

  // Raw cross-correlation r[k] = sum_n a[n] b[n + k] via FFT.
  std::size_t nfft = 1;
  while (nfft < a.size() + b.size()) nfft <<= 1;
  Eigen::FFT<double> fft;
  std::vector<double> pa(nfft, 0.0), pb(nfft, 0.0);
  std::copy(a.begin(), a.end(), pa.begin());
  std::copy(b.begin(), b.end(), pb.begin());
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, pa);
  fft.fwd(fb, pb);
  for (std::size_t i = 0; i < nfft; ++i) fa[i] = std::conj(fa[i]) * fb[i];
  std::vector<double> raw;
  fft.inv(raw, fa);

  const std::vector<double> sa = prefix(a, false), saa = prefix(a, true);
  const std::vector<double> sb = prefix(b, false), sbb = prefix(b, true);

  auto pearson = [&](std::int64_t k) {
    const std::int64_t lo = std::max<std::int64_t>(0, -k);
    const std::int64_t hi = std::min<std::int64_t>(na, nb - k);
    const std::int64_t m = hi - lo;
    if (m < 2) return 0.0;
    const auto md = static_cast<double>(m);
    const double s_a = sa[static_cast<std::size_t>(hi)] - sa[static_cast<std::size_t>(lo)];
    const double s_aa = saa[static_cast<std::size_t>(hi)] - saa[static_cast<std::size_t>(lo)];
    const double s_b = sb[static_cast<std::size_t>(hi + k)] - sb[static_cast<std::size_t>(lo + k)];
    const double s_bb = sbb[static_cast<std::size_t>(hi + k)] - sbb[static_cast<std::size_t>(lo + k)];
    const double s_ab = raw[static_cast<std::size_t>(k >= 0 ? k : static_cast<std::int64_t>(nfft) + k)];
    const double cov = s_ab - s_a * s_b / md;
    const double va = s_aa - s_a * s_a / md;
    const double vb = s_bb - s_b * s_b / md;
    if (va <= 1e-300 || vb <= 1e-300) return 0.0;
    return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
  };

  LagEstimate best;
  best.peak_normalized_correlation = pearson(0);
  for (std::int64_t d = 1; d <= max_lag; ++d) {
    for (std::int64_t k : {-d, d}) {
      const double r = pearson(k);
      if (r > best.peak_normalized_correlation) {
        best.peak_normalized_correlation = r;
        best.lag_samples = k;
      }
    }
  }
  best.lag_s = static_cast<double>(best.lag_samples) / rate_hz;
  return best;
}

}  // namespace apnea::align
