#include "apnea/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "apnea/error.hpp"
#include "reduce.hpp"

namespace apnea::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::relu: return "relu";
    case LayerKind::max_pool2d: return "max_pool2d";
    case LayerKind::linear: return "linear";
    case LayerKind::bilstm: return "bilstm";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::mean_pool_time: return "mean_pool_time";
  }
  return "unknown";
}

void LayerSpec::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::ConfigInvalid, "nn", std::string(to_string(kind)) + ": " + why);
  };
  switch (kind) {
    case LayerKind::conv2d:
      if (in == 0 || out == 0 || kernel == 0 || stride == 0) fail("channels, kernel and stride must be positive");
      if (kernel % 2 == 0) fail("kernel must be odd");
      break;
    case LayerKind::batch_norm:
      if (in == 0) fail("channel count must be positive");
      break;
    case LayerKind::max_pool2d:
      if (pool_h == 0 || pool_w == 0) fail("pool extents must be positive");
      break;
    case LayerKind::linear:
      if (in == 0 || out == 0) fail("feature counts must be positive");
      break;
    case LayerKind::bilstm:
      if (in == 0 || hidden == 0) fail("input and hidden sizes must be positive");
      break;
    case LayerKind::relu:
    case LayerKind::sigmoid:
    case LayerKind::mean_pool_time: break;
  }
}

LayerSpec LayerSpec::conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in = in;
  s.out = out;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}
LayerSpec LayerSpec::batch_norm(std::size_t channels) {
  LayerSpec s;
  s.kind = LayerKind::batch_norm;
  s.in = channels;
  return s;
}
LayerSpec LayerSpec::relu() { return LayerSpec{}; }
LayerSpec LayerSpec::max_pool2d(std::size_t pool_h, std::size_t pool_w) {
  LayerSpec s;
  s.kind = LayerKind::max_pool2d;
  s.pool_h = pool_h;
  s.pool_w = pool_w;
  return s;
}
LayerSpec LayerSpec::linear(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::linear;
  s.in = in;
  s.out = out;
  return s;
}
LayerSpec LayerSpec::bilstm(std::size_t in, std::size_t hidden) {
  LayerSpec s;
  s.kind = LayerKind::bilstm;
  s.in = in;
  s.hidden = hidden;
  return s;
}
LayerSpec LayerSpec::sigmoid() {
  LayerSpec s;
  s.kind = LayerKind::sigmoid;
  return s;
}
LayerSpec LayerSpec::mean_pool_time() {
  LayerSpec s;
  s.kind = LayerKind::mean_pool_time;
  return s;
}

void Layer::require_recording(std::string_view layer) const {
  if (!recorded_)
    throw Error(ErrorCode::NoRecordedGraph, "nn", std::string(layer) + ": backward without a train-mode forward");
}

namespace {

void fill_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
}

void expect_rank(const Tensor& t, std::size_t rank, std::string_view where) {
  if (t.rank() != rank)
    throw Error(ErrorCode::ShapeMismatch, "nn",
                std::string(where) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(t.shape()));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::mt19937_64& rng)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(kernel / 2),
      weight_({out_channels, in_channels, kernel, kernel}),
      bias_({out_channels}) {
  LayerSpec::conv2d(in_channels, out_channels, kernel, stride).validate();
  const double fan_in = static_cast<double>(in_channels * kernel * kernel);
  fill_uniform(weight_.value, std::sqrt(3.0 / fan_in), rng);
}

namespace {

struct ConvGeometry {
  std::size_t c, h, w, k, s, p, ho, wo;
};

// col[(c*k + ki)*k + kj][oh*wo + ow] = x[c][oh*s - p + ki][ow*s - p + kj] (0 outside).
void im2col(const double* x, const ConvGeometry& g, double* col) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = col + ((c * g.k + ki) * g.k + kj) * plane;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          double* dst = row + oh * g.wo;
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.s + ki) - static_cast<std::ptrdiff_t>(g.p);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.s + kj) - static_cast<std::ptrdiff_t>(g.p);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[iw];
          }
        }
      }
}

void col2im_add(const double* col, const ConvGeometry& g, double* x) {
  const std::size_t plane = g.ho * g.wo;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = col + ((c * g.k + ki) * g.k + kj) * plane;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.s + ki) - static_cast<std::ptrdiff_t>(g.p);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const double* src = row + oh * g.wo;
          double* dst = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.s + kj) - static_cast<std::ptrdiff_t>(g.p);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) dst[iw] += src[ow];
          }
        }
      }
}

}  // namespace

Tensor Conv2d::compute(const Tensor& input) const {
  expect_rank(input, 4, "conv2d");
  if (input.dim(1) != in_)
    throw Error(ErrorCode::ShapeMismatch, "nn",
                "conv2d: expected " + std::to_string(in_) + " input channels, got " + shape_string(input.shape()));
  const std::size_t n = input.dim(0), h = input.dim(2), w = input.dim(3);
  if (h + 2 * pad_ < kernel_ || w + 2 * pad_ < kernel_)
    throw Error(ErrorCode::ShapeMismatch, "nn", "conv2d: input smaller than kernel");
  const ConvGeometry g{in_, h, w, kernel_, stride_, pad_, out_extent(h), out_extent(w)};
  const std::size_t plane = g.ho * g.wo, krows = in_ * kernel_ * kernel_;
  Tensor out({n, out_, g.ho, g.wo});
  std::vector<double> col(krows * plane);
  CMapMat wmat(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(krows));
  CMapVec b(bias_.value.data(), static_cast<Eigen::Index>(out_));
  for (std::size_t i = 0; i < n; ++i) {
    im2col(input.data() + i * in_ * h * w, g, col.data());
    MapMat y(out.data() + i * out_ * plane, static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(plane));
    y.noalias() = wmat * CMapMat(col.data(), static_cast<Eigen::Index>(krows), static_cast<Eigen::Index>(plane));
    y.colwise() += b;
  }
  return out;
}

Tensor Conv2d::forward_train(Tensor input) {
  Tensor out = compute(input);
  input_ = std::move(input);
  recorded_ = true;
  return out;
}

Tensor Conv2d::forward_eval(Tensor input) const { return compute(input); }

Tensor Conv2d::backward(const Tensor& grad_output) {
  require_recording("conv2d");
  const std::size_t n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const ConvGeometry g{in_, h, w, kernel_, stride_, pad_, out_extent(h), out_extent(w)};
  expect_shape(grad_output, {n, out_, g.ho, g.wo}, "conv2d backward");
  const std::size_t plane = g.ho * g.wo, krows = in_ * kernel_ * kernel_;
  const auto kr = static_cast<Eigen::Index>(krows), pl = static_cast<Eigen::Index>(plane),
             co = static_cast<Eigen::Index>(out_);
  Tensor grad_input(input_.shape());
  std::vector<double> col(krows * plane);
  MapMat dw(weight_.grad.data(), co, kr);
  CMapMat wmat(weight_.value.data(), co, kr);
  for (std::size_t i = 0; i < n; ++i) {
    CMapMat gy(grad_output.data() + i * out_ * plane, co, pl);
    im2col(input_.data() + i * in_ * h * w, g, col.data());
    dw.noalias() += gy * CMapMat(col.data(), kr, pl).transpose();
    // Fixed-order sum; see reduce.hpp.
    const double* gyp = grad_output.data() + i * out_ * plane;
    for (std::size_t o = 0; o < out_; ++o) {
      double acc = 0.0;
      for (std::size_t k = 0; k < plane; ++k) acc += gyp[o * plane + k];
      bias_.grad[o] += acc;
    }
    MapMat(col.data(), kr, pl).noalias() = wmat.transpose() * gy;
    col2im_add(col.data(), g, grad_input.data() + i * in_ * h * w);
  }
  input_ = Tensor();
  recorded_ = false;
  return grad_input;
}

std::vector<StateRef> Conv2d::state() {
  return {{"weight", &weight_.value, &weight_.grad}, {"bias", &bias_.value, &bias_.grad}};
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_({channels}),
      beta_({channels}),
      running_mean_({channels}, 0.0),
      running_var_({channels}, 1.0) {
  LayerSpec::batch_norm(channels).validate();
  gamma_.value.fill(1.0);
}

namespace {
struct ChannelLayout {
  std::size_t n, c, inner;
};
ChannelLayout channel_layout(const Tensor& t, std::size_t channels) {
  if (t.rank() < 2 || t.dim(1) != channels)
    throw Error(ErrorCode::ShapeMismatch, "nn",
                "batch_norm: expected axis 1 of size " + std::to_string(channels) + ", got " + shape_string(t.shape()));
  return {t.dim(0), channels, t.size() / (t.dim(0) * channels)};
}
}  // namespace

Tensor BatchNorm::forward_train(Tensor x) {
  const auto [n, c, inner] = channel_layout(x, channels_);
  const double count = static_cast<double>(n * inner);
  if (count < 2.0) throw Error(ErrorCode::ShapeMismatch, "nn", "batch_norm: need at least two values per channel");
  xhat_ = Tensor(x.shape());
  inv_std_.assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = x.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) sum += p[j];
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = x.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) ss += (p[j] - mean) * (p[j] - mean);
    }
    const double var = ss / count;
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[ch] = inv;
    const double g = gamma_.value[ch], b = beta_.value[ch];
    for (std::size_t i = 0; i < n; ++i) {
      double* p = x.data() + (i * c + ch) * inner;
      double* q = xhat_.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        q[j] = (p[j] - mean) * inv;
        p[j] = g * q[j] + b;
      }
    }
    running_mean_[ch] = (1.0 - momentum_) * running_mean_[ch] + momentum_ * mean;
    running_var_[ch] = (1.0 - momentum_) * running_var_[ch] + momentum_ * var * count / (count - 1.0);
  }
  recorded_ = true;
  return x;
}

Tensor BatchNorm::forward_eval(Tensor x) const {
  const auto [n, c, inner] = channel_layout(x, channels_);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(running_var_[ch] + eps_);
    const double scale = gamma_.value[ch] * inv;
    const double shift = beta_.value[ch] - running_mean_[ch] * scale;
    for (std::size_t i = 0; i < n; ++i) {
      double* p = x.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) p[j] = p[j] * scale + shift;
    }
  }
  return x;
}

Tensor BatchNorm::backward(const Tensor& grad_output) {
  require_recording("batch_norm");
  expect_shape(grad_output, xhat_.shape(), "batch_norm backward");
  const auto [n, c, inner] = channel_layout(xhat_, channels_);
  const double count = static_cast<double>(n * inner);
  Tensor grad_input(xhat_.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* dy = grad_output.data() + (i * c + ch) * inner;
      const double* xh = xhat_.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        sum_dy += dy[j];
        sum_dy_xhat += dy[j] * xh[j];
      }
    }
    gamma_.grad[ch] += sum_dy_xhat;
    beta_.grad[ch] += sum_dy;
    const double k = gamma_.value[ch] * inv_std_[ch] / count;
    for (std::size_t i = 0; i < n; ++i) {
      const double* dy = grad_output.data() + (i * c + ch) * inner;
      const double* xh = xhat_.data() + (i * c + ch) * inner;
      double* dx = grad_input.data() + (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) dx[j] = k * (count * dy[j] - sum_dy - xh[j] * sum_dy_xhat);
    }
  }
  xhat_ = Tensor();
  recorded_ = false;
  return grad_input;
}

std::vector<StateRef> BatchNorm::state() {
  return {{"gamma", &gamma_.value, &gamma_.grad},
          {"beta", &beta_.value, &beta_.grad},
          {"running_mean", &running_mean_, nullptr},
          {"running_var", &running_var_, nullptr}};
}

// ---------------------------------------------------------------- ReLU

Tensor ReLU::forward_train(Tensor x) {
  mask_.resize(x.size());
  double* p = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = p[i] > 0.0;
    if (!mask_[i]) p[i] = 0.0;
  }
  shape_ = x.shape();
  recorded_ = true;
  return x;
}

Tensor ReLU::forward_eval(Tensor x) const {
  for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
  return x;
}

Tensor ReLU::backward(const Tensor& grad_output) {
  require_recording("relu");
  expect_shape(grad_output, shape_, "relu backward");
  Tensor g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!mask_[i]) g[i] = 0.0;
  mask_.clear();
  mask_.shrink_to_fit();
  recorded_ = false;
  return g;
}

// ---------------------------------------------------------------- MaxPool2d

MaxPool2d::MaxPool2d(std::size_t pool_h, std::size_t pool_w) : ph_(pool_h), pw_(pool_w) {
  LayerSpec::max_pool2d(pool_h, pool_w).validate();
}

Tensor MaxPool2d::pool(const Tensor& x, std::vector<std::uint32_t>* argmax) const {
  expect_rank(x, 4, "max_pool2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h / ph_, wo = w / pw_;
  if (ho == 0 || wo == 0) throw Error(ErrorCode::ShapeMismatch, "nn", "max_pool2d: input smaller than pool");
  Tensor out({n, c, ho, wo});
  if (argmax) argmax->resize(out.size());
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = x.data() + plane * h * w;
    double* dst = out.data() + plane * ho * wo;
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        std::size_t best = oh * ph_ * w + ow * pw_;
        for (std::size_t a = 0; a < ph_; ++a)
          for (std::size_t b = 0; b < pw_; ++b) {
            const std::size_t idx = (oh * ph_ + a) * w + ow * pw_ + b;
            if (src[idx] > src[best]) best = idx;
          }
        dst[oh * wo + ow] = src[best];
        if (argmax) (*argmax)[plane * ho * wo + oh * wo + ow] = static_cast<std::uint32_t>(best);
      }
  }
  return out;
}

Tensor MaxPool2d::forward_train(Tensor input) {
  Tensor out = pool(input, &argmax_);
  input_shape_ = input.shape();
  recorded_ = true;
  return out;
}

Tensor MaxPool2d::forward_eval(Tensor input) const { return pool(input, nullptr); }

Tensor MaxPool2d::backward(const Tensor& grad_output) {
  require_recording("max_pool2d");
  const std::size_t n = input_shape_[0], c = input_shape_[1], h = input_shape_[2], w = input_shape_[3];
  const std::size_t ho = h / ph_, wo = w / pw_;
  expect_shape(grad_output, {n, c, ho, wo}, "max_pool2d backward");
  Tensor grad_input(input_shape_);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    double* dst = grad_input.data() + plane * h * w;
    const double* g = grad_output.data() + plane * ho * wo;
    const std::uint32_t* arg = argmax_.data() + plane * ho * wo;
    for (std::size_t i = 0; i < ho * wo; ++i) dst[arg[i]] += g[i];
  }
  argmax_.clear();
  argmax_.shrink_to_fit();
  recorded_ = false;
  return grad_input;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng)
    : in_(in_features), out_(out_features), weight_({out_features, in_features}), bias_({out_features}) {
  LayerSpec::linear(in_features, out_features).validate();
  fill_uniform(weight_.value, std::sqrt(3.0 / static_cast<double>(in_features)), rng);
}

Tensor Linear::compute(const Tensor& x) const {
  if (x.rank() < 1 || x.shape().back() != in_)
    throw Error(ErrorCode::ShapeMismatch, "nn",
                "linear: expected last axis " + std::to_string(in_) + ", got " + shape_string(x.shape()));
  const std::size_t rows = x.size() / in_;
  Shape shape = x.shape();
  shape.back() = out_;
  Tensor y(shape);
  const auto fi = static_cast<Eigen::Index>(in_), fo = static_cast<Eigen::Index>(out_);
  CMapMat w(weight_.value.data(), fo, fi);
  CMapVec b(bias_.value.data(), fo);
  // One matrix-vector product per row: a GEMM over the batch would pick kernels
  // by row count, so a row's result would depend on what else is in the batch.
  for (std::size_t r = 0; r < rows; ++r) {
    MapVec yr(y.data() + r * out_, fo);
    yr.noalias() = w * CMapVec(x.data() + r * in_, fi);
    yr += b;
  }
  return y;
}

Tensor Linear::forward_train(Tensor input) {
  Tensor out = compute(input);
  input_ = std::move(input);
  recorded_ = true;
  return out;
}

Tensor Linear::forward_eval(Tensor input) const { return compute(input); }

Tensor Linear::backward(const Tensor& grad_output) {
  require_recording("linear");
  Shape expected = input_.shape();
  expected.back() = out_;
  expect_shape(grad_output, expected, "linear backward");
  const auto rows = static_cast<Eigen::Index>(input_.size() / in_);
  const auto fi = static_cast<Eigen::Index>(in_), fo = static_cast<Eigen::Index>(out_);
  CMapMat gy(grad_output.data(), rows, fo);
  CMapMat x(input_.data(), rows, fi);
  MapMat(weight_.grad.data(), fo, fi).noalias() += gy.transpose() * x;
  add_column_sums(grad_output.data(), input_.size() / in_, out_, bias_.grad.data());
  Tensor grad_input(input_.shape());
  MapMat(grad_input.data(), rows, fi).noalias() = gy * CMapMat(weight_.value.data(), fo, fi);
  input_ = Tensor();
  recorded_ = false;
  return grad_input;
}

std::vector<StateRef> Linear::state() {
  return {{"weight", &weight_.value, &weight_.grad}, {"bias", &bias_.value, &bias_.grad}};
}

// ---------------------------------------------------------------- Sigmoid

namespace {
double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor Sigmoid::forward_train(Tensor input) {
  for (double& v : input.values()) v = logistic(v);
  output_ = input;
  recorded_ = true;
  return input;
}

Tensor Sigmoid::forward_eval(Tensor input) const {
  for (double& v : input.values()) v = logistic(v);
  return input;
}

Tensor Sigmoid::backward(const Tensor& grad_output) {
  require_recording("sigmoid");
  expect_shape(grad_output, output_.shape(), "sigmoid backward");
  Tensor g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output_[i] * (1.0 - output_[i]);
  output_ = Tensor();
  recorded_ = false;
  return g;
}

// ---------------------------------------------------------------- MeanPoolTime

Tensor MeanPoolTime::forward_eval(Tensor x) const {
  expect_rank(x, 3, "mean_pool_time");
  const std::size_t n = x.dim(0), t = x.dim(1), f = x.dim(2);
  if (t == 0) throw Error(ErrorCode::ShapeMismatch, "nn", "mean_pool_time: empty sequence");
  Tensor out({n, f});
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = out.data() + i * f;
    for (std::size_t s = 0; s < t; ++s) {
      const double* src = x.data() + (i * t + s) * f;
      for (std::size_t k = 0; k < f; ++k) dst[k] += src[k];
    }
    for (std::size_t k = 0; k < f; ++k) dst[k] /= static_cast<double>(t);
  }
  return out;
}

Tensor MeanPoolTime::forward_train(Tensor x) {
  input_shape_ = x.shape();
  Tensor out = forward_eval(std::move(x));
  recorded_ = true;
  return out;
}

Tensor MeanPoolTime::backward(const Tensor& grad_output) {
  require_recording("mean_pool_time");
  const std::size_t n = input_shape_[0], t = input_shape_[1], f = input_shape_[2];
  expect_shape(grad_output, {n, f}, "mean_pool_time backward");
  Tensor g(input_shape_);
  const double scale = 1.0 / static_cast<double>(t);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < t; ++s)
      for (std::size_t k = 0; k < f; ++k) g[(i * t + s) * f + k] = grad_output[i * f + k] * scale;
  recorded_ = false;
  return g;
}

// ---------------------------------------------------------------- factory / Sequential

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  switch (spec.kind) {
    case LayerKind::conv2d: return std::make_unique<Conv2d>(spec.in, spec.out, spec.kernel, spec.stride, rng);
    case LayerKind::batch_norm: return std::make_unique<BatchNorm>(spec.in);
    case LayerKind::relu: return std::make_unique<ReLU>();
    case LayerKind::max_pool2d: return std::make_unique<MaxPool2d>(spec.pool_h, spec.pool_w);
    case LayerKind::linear: return std::make_unique<Linear>(spec.in, spec.out, rng);
    case LayerKind::bilstm: return std::make_unique<BiLSTM>(spec.in, spec.hidden, rng);
    case LayerKind::sigmoid: return std::make_unique<Sigmoid>();
    case LayerKind::mean_pool_time: return std::make_unique<MeanPoolTime>();
  }
  throw Error(ErrorCode::ConfigInvalid, "nn", "unknown layer kind");
}

void Sequential::add(std::string name, std::unique_ptr<Layer> layer) {
  layers_.emplace_back(std::move(name), std::move(layer));
}

Tensor Sequential::forward_train(Tensor x) {
  for (auto& [name, layer] : layers_) {
    x = layer->forward_train(std::move(x));
    check_finite(x, name);
  }
  return x;
}

Tensor Sequential::forward_eval(Tensor x) const {
  for (const auto& [name, layer] : layers_) {
    x = layer->forward_eval(std::move(x));
    check_finite(x, name);
  }
  return x;
}

Tensor Sequential::backward(Tensor g) {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = it->second->backward(g);
    check_finite(g, it->first + " gradient");
  }
  return g;
}

std::vector<StateRef> Sequential::state(const std::string& prefix) {
  std::vector<StateRef> out;
  for (auto& [name, layer] : layers_) append_state(out, prefix.empty() ? name : prefix + "." + name, *layer);
  return out;
}

void append_state(std::vector<StateRef>& out, const std::string& prefix, Layer& layer) {
  for (StateRef ref : layer.state()) {
    ref.name = prefix + "." + ref.name;
    out.push_back(std::move(ref));
  }
}

void zero_grad(const std::vector<StateRef>& state) {
  for (const StateRef& ref : state)
    if (ref.grad) ref.grad->fill(0.0);
}

}  // namespace apnea::nn
