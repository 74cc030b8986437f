#include <cmath>

#include <Eigen/Dense>

#include "apnea/error.hpp"
#include "apnea/nn/layers.hpp"
#include "reduce.hpp"

namespace apnea::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Vec = Eigen::VectorXd;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

double sigm(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void init_direction(Parameter& w_ih, Parameter& w_hh, std::size_t hidden, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w_ih.value.values()) v = dist(rng);
  for (double& v : w_hh.value.values()) v = dist(rng);
}

}  // namespace

BiLSTM::BiLSTM(std::size_t input_size, std::size_t hidden_size, std::mt19937_64& rng)
    : input_(input_size),
      hidden_(hidden_size),
      fwd_{Parameter({4 * hidden_size, input_size}), Parameter({4 * hidden_size, hidden_size}),
           Parameter({4 * hidden_size})},
      bwd_{Parameter({4 * hidden_size, input_size}), Parameter({4 * hidden_size, hidden_size}),
           Parameter({4 * hidden_size})} {
  LayerSpec::bilstm(input_size, hidden_size).validate();
  init_direction(fwd_.w_ih, fwd_.w_hh, hidden_size, rng);
  init_direction(bwd_.w_ih, bwd_.w_hh, hidden_size, rng);
  // Forget-gate bias of one keeps early gradients flowing through the cell.
  for (std::size_t k = hidden_size; k < 2 * hidden_size; ++k) {
    fwd_.bias.value[k] = 1.0;
    bwd_.bias.value[k] = 1.0;
  }
}

void BiLSTM::run_direction(const Direction& d, bool reverse, const double* x, std::size_t steps, double* y,
                           std::size_t y_stride, Trace* trace) const {
  const auto H = static_cast<Eigen::Index>(hidden_);
  const auto G = 4 * H;
  const auto T = static_cast<Eigen::Index>(steps);
  RowMat zx = CMapMat(x, T, static_cast<Eigen::Index>(input_)) *
              CMapMat(d.w_ih.value.data(), G, static_cast<Eigen::Index>(input_)).transpose();
  zx.rowwise() += CMapVec(d.bias.value.data(), G).transpose();
  CMapMat w_hh(d.w_hh.value.data(), G, H);

  if (trace) {
    trace->gates.assign(steps * static_cast<std::size_t>(G), 0.0);
    trace->cell.assign(steps * hidden_, 0.0);
    trace->hidden.assign(steps * hidden_, 0.0);
  }
  Vec h = Vec::Zero(H), c = Vec::Zero(H), z(G);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    z.noalias() = zx.row(static_cast<Eigen::Index>(t)).transpose();
    z.noalias() += w_hh * h;
    for (Eigen::Index k = 0; k < H; ++k) {
      const double ig = sigm(z[k]);
      const double fg = sigm(z[H + k]);
      const double gg = std::tanh(z[2 * H + k]);
      const double og = sigm(z[3 * H + k]);
      c[k] = fg * c[k] + ig * gg;
      h[k] = og * std::tanh(c[k]);
      z[k] = ig;
      z[H + k] = fg;
      z[2 * H + k] = gg;
      z[3 * H + k] = og;
    }
    double* out = y + t * y_stride;
    for (Eigen::Index k = 0; k < H; ++k) out[k] = h[k];
    if (trace) {
      std::copy(z.data(), z.data() + G, trace->gates.data() + t * static_cast<std::size_t>(G));
      std::copy(c.data(), c.data() + H, trace->cell.data() + t * hidden_);
      std::copy(h.data(), h.data() + H, trace->hidden.data() + t * hidden_);
    }
  }
}

void BiLSTM::backprop_direction(Direction& d, bool reverse, const double* x, std::size_t steps, const double* dy,
                                std::size_t dy_stride, const Trace& trace, double* dx) const {
  const auto H = static_cast<Eigen::Index>(hidden_);
  const auto G = 4 * H;
  const auto T = static_cast<Eigen::Index>(steps);
  const auto F = static_cast<Eigen::Index>(input_);
  RowMat dz(T, G);
  RowMat h_prev = RowMat::Zero(T, H);
  CMapMat w_hh(d.w_hh.value.data(), G, H);
  Vec dh_next = Vec::Zero(H), dc_next = Vec::Zero(H), dh(H);

  for (std::size_t s = 0; s < steps; ++s) {
    // Undo the processing order: last processed step first.
    const std::size_t t = reverse ? s : steps - 1 - s;
    const bool has_prev = reverse ? t + 1 < steps : t > 0;
    const std::size_t prev = reverse ? t + 1 : t - 1;
    const double* gates = trace.gates.data() + t * static_cast<std::size_t>(G);
    const double* cell = trace.cell.data() + t * hidden_;
    const double* c_prev = has_prev ? trace.cell.data() + prev * hidden_ : nullptr;
    if (has_prev)
      h_prev.row(static_cast<Eigen::Index>(t)) = CMapVec(trace.hidden.data() + prev * hidden_, H).transpose();
    const double* g_out = dy + t * dy_stride;
    double* dzr = dz.data() + t * static_cast<std::size_t>(G);
    for (Eigen::Index k = 0; k < H; ++k) {
      const double ig = gates[k], fg = gates[H + k], gg = gates[2 * H + k], og = gates[3 * H + k];
      const double tc = std::tanh(cell[k]);
      const double dhk = g_out[k] + dh_next[k];
      const double dc = dhk * og * (1.0 - tc * tc) + dc_next[k];
      const double cp = c_prev ? c_prev[k] : 0.0;
      dzr[k] = dc * gg * ig * (1.0 - ig);
      dzr[H + k] = dc * cp * fg * (1.0 - fg);
      dzr[2 * H + k] = dc * ig * (1.0 - gg * gg);
      dzr[3 * H + k] = dhk * tc * og * (1.0 - og);
      dc_next[k] = dc * fg;
    }
    dh_next.noalias() = w_hh.transpose() * dz.row(static_cast<Eigen::Index>(t)).transpose();
  }
  MapMat(d.w_hh.grad.data(), G, H).noalias() += dz.transpose() * h_prev;
  CMapMat xm(x, T, F);
  MapMat(d.w_ih.grad.data(), G, F).noalias() += dz.transpose() * xm;
  add_column_sums(dz.data(), steps, static_cast<std::size_t>(G), d.bias.grad.data());
  MapMat(dx, T, F).noalias() += dz * CMapMat(d.w_ih.value.data(), G, F);
}

Tensor BiLSTM::forward_eval(Tensor input) const {
  if (input.rank() != 3 || input.dim(2) != input_)
    throw Error(ErrorCode::ShapeMismatch, "nn",
                "bilstm: expected [N, T, " + std::to_string(input_) + "], got " + shape_string(input.shape()));
  const std::size_t n = input.dim(0), t = input.dim(1);
  Tensor out({n, t, 2 * hidden_});
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = input.data() + i * t * input_;
    double* y = out.data() + i * t * 2 * hidden_;
    run_direction(fwd_, false, x, t, y, 2 * hidden_, nullptr);
    run_direction(bwd_, true, x, t, y + hidden_, 2 * hidden_, nullptr);
  }
  return out;
}

Tensor BiLSTM::forward_train(Tensor input) {
  if (input.rank() != 3 || input.dim(2) != input_)
    throw Error(ErrorCode::ShapeMismatch, "nn",
                "bilstm: expected [N, T, " + std::to_string(input_) + "], got " + shape_string(input.shape()));
  const std::size_t n = input.dim(0), t = input.dim(1);
  Tensor out({n, t, 2 * hidden_});
  traces_.assign(2 * n, Trace{});
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = input.data() + i * t * input_;
    double* y = out.data() + i * t * 2 * hidden_;
    run_direction(fwd_, false, x, t, y, 2 * hidden_, &traces_[2 * i]);
    run_direction(bwd_, true, x, t, y + hidden_, 2 * hidden_, &traces_[2 * i + 1]);
  }
  input_cache_ = std::move(input);
  recorded_ = true;
  return out;
}

Tensor BiLSTM::backward(const Tensor& grad_output) {
  require_recording("bilstm");
  const std::size_t n = input_cache_.dim(0), t = input_cache_.dim(1);
  expect_shape(grad_output, {n, t, 2 * hidden_}, "bilstm backward");
  Tensor grad_input(input_cache_.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = input_cache_.data() + i * t * input_;
    const double* dy = grad_output.data() + i * t * 2 * hidden_;
    double* dx = grad_input.data() + i * t * input_;
    backprop_direction(fwd_, false, x, t, dy, 2 * hidden_, traces_[2 * i], dx);
    backprop_direction(bwd_, true, x, t, dy + hidden_, 2 * hidden_, traces_[2 * i + 1], dx);
  }
  traces_.clear();
  input_cache_ = Tensor();
  recorded_ = false;
  return grad_input;
}

std::vector<StateRef> BiLSTM::state() {
  return {{"fwd.w_ih", &fwd_.w_ih.value, &fwd_.w_ih.grad}, {"fwd.w_hh", &fwd_.w_hh.value, &fwd_.w_hh.grad},
          {"fwd.bias", &fwd_.bias.value, &fwd_.bias.grad}, {"bwd.w_ih", &bwd_.w_ih.value, &bwd_.w_ih.grad},
          {"bwd.w_hh", &bwd_.w_hh.value, &bwd_.w_hh.grad}, {"bwd.bias", &bwd_.bias.value, &bwd_.bias.grad}};
}

}  // namespace apnea::nn
