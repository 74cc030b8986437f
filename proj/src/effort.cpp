#include "apnea/effort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "apnea/error.hpp"
#include "apnea/hash.hpp"
#include "apnea/nn/adam.hpp"

namespace apnea::effort {

namespace {

constexpr const char* kModule = "effort";

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(ErrorCode::ShapeMismatch, kModule,
                "sequences differ in length (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  if (x.size() < 2) throw Error(ErrorCode::EmptyInput, kModule, "need at least two points");
}

}  // namespace

MomentStats moments(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const double n = static_cast<double>(x.size());
  MomentStats m;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.mu_x += x[i];
    m.mu_y += y[i];
  }
  m.mu_x /= n;
  m.mu_y /= n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - m.mu_x, dy = y[i] - m.mu_y;
    m.var_x += dx * dx;
    m.var_y += dy * dy;
    m.cov_xy += dx * dy;
  }
  m.var_x /= n;
  m.var_y /= n;
  m.cov_xy /= n;
  return m;
}

double ccc(std::span<const double> x, std::span<const double> y) {
  const MomentStats m = moments(x, y);
  const double gap = m.mu_x - m.mu_y;
  const double den = m.var_x + m.var_y + gap * gap;
  if (den < 1e-12) throw Error(ErrorCode::DegenerateInput, kModule, "both sequences constant with equal means");
  return 2.0 * m.cov_xy / den;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const MomentStats m = moments(x, y);
  if (m.var_x <= 0.0 || m.var_y <= 0.0) throw Error(ErrorCode::DegenerateInput, kModule, "zero variance");
  return m.cov_xy / std::sqrt(m.var_x * m.var_y);
}

LossResult ccc_loss(std::span<const double> pred, std::span<const double> ref, double eps) {
  const MomentStats m = moments(pred, ref);
  const double gap = m.mu_x - m.mu_y;
  const double raw_den = m.var_x + m.var_y + gap * gap;
  if (raw_den < 1e-12) throw Error(ErrorCode::DegenerateInput, kModule, "both sequences constant with equal means");
  // Sum form: eps is added to N times the moment denominator.
  const double n = static_cast<double>(pred.size());
  const double den = n * raw_den + eps;
  const double num = 2.0 * n * m.cov_xy;

  LossResult r;
  r.value = 1.0 - num / den;
  r.grad.resize(pred.size());
  const double inv_den2 = num / (den * den);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d_num = 2.0 * (ref[i] - m.mu_y);
    const double d_den = 2.0 * (pred[i] - m.mu_x) + 2.0 * gap;
    r.grad[i] = -(d_num / den - inv_den2 * d_den);
  }
  return r;
}

EffortTrace z_normalize(std::span<const double> raw, SegmentIndex segment, double min_std) {
  if (raw.empty()) throw Error(ErrorCode::EmptyInput, kModule, "empty effort trace");
  EffortTrace t;
  t.segment = segment;
  const double n = static_cast<double>(raw.size());
  double mean = 0.0;
  for (double v : raw) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : raw) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / n);
  if (!(sd >= min_std)) sd = 1.0;
  t.mean = mean;
  t.std = sd;
  t.values.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) t.values[i] = (raw[i] - mean) / sd;
  nn::check_finite(t.values, "effort reference");
  return t;
}

EffortTrace reference_segment(std::span<const float> night_effort, SegmentIndex segment, int rate_hz) {
  const auto first = static_cast<std::size_t>(std::llround(segment.start_s * rate_hz));
  const auto count = static_cast<std::size_t>(std::llround(segment.duration_s * rate_hz));
  if (first + count > night_effort.size())
    throw Error(ErrorCode::ShapeMismatch, kModule, "segment runs past the end of the effort trace");
  std::vector<double> raw(night_effort.begin() + static_cast<std::ptrdiff_t>(first),
                          night_effort.begin() + static_cast<std::ptrdiff_t>(first + count));
  return z_normalize(raw, segment);
}

std::vector<double> interpolate_linear(std::span<const double> in, std::size_t out_len) {
  if (in.empty() || out_len == 0) throw Error(ErrorCode::EmptyInput, kModule, "interpolation of an empty sequence");
  std::vector<double> out(out_len);
  if (in.size() == 1 || out_len == 1) {
    std::fill(out.begin(), out.end(), in.front());
    if (out_len > 1) out.back() = in.back();
    return out;
  }
  const std::size_t last = in.size() - 1;
  for (std::size_t j = 0; j < out_len; ++j) {
    const double pos = static_cast<double>(j * last) / static_cast<double>(out_len - 1);
    const auto i0 = std::min(static_cast<std::size_t>(pos), last);
    if (i0 == last) {
      out[j] = in[last];
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out[j] = in[i0] + frac * (in[i0 + 1] - in[i0]);
  }
  return out;
}

std::vector<double> interpolate_linear_adjoint(std::span<const double> grad_out, std::size_t in_len) {
  if (grad_out.empty() || in_len == 0) throw Error(ErrorCode::EmptyInput, kModule, "interpolation of an empty sequence");
  std::vector<double> g(in_len, 0.0);
  const std::size_t out_len = grad_out.size();
  if (in_len == 1 || out_len == 1) {
    if (out_len == 1) {
      g.front() += grad_out.front();
    } else {
      for (std::size_t j = 0; j + 1 < out_len; ++j) g.front() += grad_out[j];
      g.back() += grad_out.back();
    }
    return g;
  }
  const std::size_t last = in_len - 1;
  for (std::size_t j = 0; j < out_len; ++j) {
    const double pos = static_cast<double>(j * last) / static_cast<double>(out_len - 1);
    const auto i0 = std::min(static_cast<std::size_t>(pos), last);
    if (i0 == last) {
      g[last] += grad_out[j];
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    g[i0] += (1.0 - frac) * grad_out[j];
    g[i0 + 1] += frac * grad_out[j];
  }
  return g;
}

// ---------------------------------------------------------------------------

std::size_t EffortArch::steps() const {
  std::size_t t = frames;
  for (std::size_t i = 0; i < channels.size(); ++i) t /= pool_time;
  return t;
}

void EffortArch::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, "effort", what); };
  if (frames == 0 || mel_bins == 0) bad("frames and mel_bins must be positive");
  if (channels.empty()) bad("at least one convolutional block is required");
  for (std::size_t c : channels)
    if (c == 0) bad("channel counts must be positive");
  if (pool_time == 0 || pool_freq == 0) bad("pooling extents must be positive");
  if (hidden == 0) bad("hidden size must be positive");
  if (trace_points < 2) bad("trace_points must be at least 2");
  std::size_t f = mel_bins;
  for (std::size_t i = 0; i < channels.size(); ++i) f /= pool_freq;
  if (f == 0 || steps() == 0) bad("pooling collapses the feature map to nothing");
}

nlohmann::json EffortArch::to_json() const {
  return {{"frames", frames},
          {"mel_bins", mel_bins},
          {"channels", channels},
          {"pool_time", pool_time},
          {"pool_freq", pool_freq},
          {"hidden", hidden},
          {"trace_points", trace_points},
          {"embedding", embedding == EmbeddingMode::mean ? "mean" : "final_state"}};
}

EffortArch EffortArch::from_json(const nlohmann::json& j) {
  EffortArch a;
  a.frames = j.value("frames", a.frames);
  a.mel_bins = j.value("mel_bins", a.mel_bins);
  a.channels = j.value("channels", a.channels);
  a.pool_time = j.value("pool_time", a.pool_time);
  a.pool_freq = j.value("pool_freq", a.pool_freq);
  a.hidden = j.value("hidden", a.hidden);
  a.trace_points = j.value("trace_points", a.trace_points);
  const std::string mode = j.value("embedding", std::string("mean"));
  if (mode == "mean") a.embedding = EmbeddingMode::mean;
  else if (mode == "final_state") a.embedding = EmbeddingMode::final_state;
  else throw Error(ErrorCode::ConfigInvalid, "effort", "unknown embedding mode '" + mode + "'");
  a.validate();
  return a;
}

EffortEstimator::EffortEstimator(EffortArch arch, std::uint64_t seed) : arch_(std::move(arch)) {
  arch_.validate();
  std::mt19937_64 rng(seed);
  std::size_t in = 1, width = arch_.mel_bins;
  for (std::size_t b = 0; b < arch_.channels.size(); ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    const std::size_t out = arch_.channels[b];
    cnn_.add(p + "conv", std::make_unique<nn::Conv2d>(in, out, 3, 1, rng));
    cnn_.add(p + "bn", std::make_unique<nn::BatchNorm>(out));
    cnn_.add(p + "relu", std::make_unique<nn::ReLU>());
    cnn_.add(p + "pool", std::make_unique<nn::MaxPool2d>(arch_.pool_time, arch_.pool_freq));
    in = out;
    width /= arch_.pool_freq;
  }
  cnn_channels_ = in * width;
  lstm_ = std::make_unique<nn::BiLSTM>(cnn_channels_, arch_.hidden, rng);
  decoder_ = std::make_unique<nn::Linear>(2 * arch_.hidden, 1, rng);
}

// [N, C, T, W] -> [N, T, C*W]
nn::Tensor EffortEstimator::to_sequence(const nn::Tensor& maps) const {
  if (maps.rank() != 4) throw Error(ErrorCode::ShapeMismatch, kModule, "expected a 4-d feature map");
  const std::size_t n = maps.dim(0), c = maps.dim(1), t = maps.dim(2), w = maps.dim(3);
  if (t != arch_.steps() || c * w != cnn_channels_)
    throw Error(ErrorCode::ShapeMismatch, kModule, "CNN produced " + nn::shape_string(maps.shape()));
  nn::Tensor seq({n, t, c * w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t wi = 0; wi < w; ++wi)
          seq[(b * t + ti) * c * w + ci * w + wi] = maps[((b * c + ci) * t + ti) * w + wi];
  return seq;
}

nn::Tensor EffortEstimator::from_sequence(const nn::Tensor& seq) const {
  const std::size_t n = seq.dim(0), t = seq.dim(1);
  const std::size_t c = arch_.channels.back(), w = cnn_channels_ / c;
  nn::Tensor maps({n, c, t, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t wi = 0; wi < w; ++wi)
          maps[((b * c + ci) * t + ti) * w + wi] = seq[(b * t + ti) * c * w + ci * w + wi];
  return maps;
}

nn::Tensor EffortEstimator::forward_train(const nn::Tensor& features) {
  nn::Tensor h = lstm_->forward_train(to_sequence(cnn_.forward_train(features)));
  nn::check_finite(h, "effort bilstm");
  nn::Tensor d = decoder_->forward_train(std::move(h));
  const std::size_t n = d.dim(0), t = d.dim(1);
  nn::Tensor traces({n, arch_.trace_points});
  for (std::size_t b = 0; b < n; ++b) {
    const auto row = interpolate_linear(std::span<const double>(d.data() + b * t, t), arch_.trace_points);
    std::copy(row.begin(), row.end(), traces.data() + b * arch_.trace_points);
  }
  nn::check_finite(traces, "effort decoder");
  return traces;
}

void EffortEstimator::backward(const nn::Tensor& grad_traces) {
  const std::size_t n = grad_traces.dim(0), t = arch_.steps();
  nn::expect_shape(grad_traces, {n, arch_.trace_points}, "effort backward");
  nn::Tensor gd({n, t, 1});
  for (std::size_t b = 0; b < n; ++b) {
    const auto g = interpolate_linear_adjoint(
        std::span<const double>(grad_traces.data() + b * arch_.trace_points, arch_.trace_points), t);
    std::copy(g.begin(), g.end(), gd.data() + b * t);
  }
  nn::Tensor gh = decoder_->backward(gd);
  nn::check_finite(gh, "decoder gradient");
  nn::Tensor gs = lstm_->backward(gh);
  nn::check_finite(gs, "bilstm gradient");
  cnn_.backward(from_sequence(gs));
}

EffortEstimator::Output EffortEstimator::infer(const nn::Tensor& features) const {
  Output out;
  out.hidden = lstm_->forward_eval(to_sequence(cnn_.forward_eval(features)));
  nn::check_finite(out.hidden, "effort bilstm");
  const std::size_t n = out.hidden.dim(0), t = out.hidden.dim(1);
  const nn::Tensor d = decoder_->forward_eval(out.hidden);
  out.traces = nn::Tensor({n, arch_.trace_points});
  for (std::size_t b = 0; b < n; ++b) {
    const auto row = interpolate_linear(std::span<const double>(d.data() + b * t, t), arch_.trace_points);
    std::copy(row.begin(), row.end(), out.traces.data() + b * arch_.trace_points);
  }
  return out;
}

std::vector<double> EffortEstimator::decode_and_interpolate(const nn::Tensor& hidden) const {
  const std::size_t t = arch_.steps(), f = 2 * arch_.hidden;
  if (hidden.rank() != 2 || hidden.dim(0) != t || hidden.dim(1) != f)
    throw Error(ErrorCode::ShapeMismatch, kModule,
                "decoder expects [" + std::to_string(t) + ", " + std::to_string(f) + "], got " +
                    nn::shape_string(hidden.shape()));
  const nn::Tensor d = decoder_->forward_eval(hidden);
  return interpolate_linear(d.values(), arch_.trace_points);
}

nn::Tensor EffortEstimator::pool_embedding(const nn::Tensor& hidden) const {
  const std::size_t n = hidden.dim(0), t = hidden.dim(1), f = hidden.dim(2), h = arch_.hidden;
  nn::Tensor e({n, f});
  for (std::size_t b = 0; b < n; ++b) {
    const double* src = hidden.data() + b * t * f;
    double* dst = e.data() + b * f;
    if (arch_.embedding == EmbeddingMode::mean) {
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t k = 0; k < f; ++k) dst[k] += src[ti * f + k];
      for (std::size_t k = 0; k < f; ++k) dst[k] /= static_cast<double>(t);
    } else {
      // Each direction's last state: forward at T-1, backward at 0.
      for (std::size_t k = 0; k < h; ++k) {
        dst[k] = src[(t - 1) * f + k];
        dst[h + k] = src[h + k];
      }
    }
  }
  return e;
}

nn::Tensor EffortEstimator::embeddings(const nn::Tensor& features) const {
  return pool_embedding(lstm_->forward_eval(to_sequence(cnn_.forward_eval(features))));
}

std::vector<double> EffortEstimator::embedding(const dsp::LogMelSegment& segment) const {
  const FeaturePtr p(&segment, [](const dsp::LogMelSegment*) {});
  return embeddings(stack_features(std::span<const FeaturePtr>(&p, 1))).storage();
}

EffortTrace EffortEstimator::predict(const dsp::LogMelSegment& segment) const {
  const FeaturePtr p(&segment, [](const dsp::LogMelSegment*) {});
  EffortTrace t;
  t.values = infer(stack_features(std::span<const FeaturePtr>(&p, 1))).traces.storage();
  t.segment = segment.segment;
  return t;
}

std::vector<nn::StateRef> EffortEstimator::state() {
  auto s = cnn_.state("cnn");
  nn::append_state(s, "lstm", *lstm_);
  nn::append_state(s, "decoder", *decoder_);
  return s;
}

void EffortEstimator::save_to(nn::Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.config["effort_arch"] = arch_.to_json();
  // capture_state only reads through the refs.
  nn::capture_state(const_cast<EffortEstimator*>(this)->state(), ckpt, prefix);
}

EffortEstimator EffortEstimator::from_checkpoint(const nn::Checkpoint& ckpt, const std::string& prefix) {
  if (!ckpt.config.contains("effort_arch"))
    throw Error(ErrorCode::CorruptCheckpoint, kModule, "checkpoint has no effort architecture");
  EffortEstimator model(EffortArch::from_json(ckpt.config.at("effort_arch")), 0);
  nn::restore_state(model.state(), ckpt, prefix);
  return model;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<double>> predict_all(const EffortEstimator& model, std::span<const EffortExample> data,
                                             std::size_t batch_size) {
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  std::vector<FeaturePtr> batch;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    batch.clear();
    for (std::size_t j = i; j < std::min(data.size(), i + batch_size); ++j) batch.push_back(data[j].features);
    const nn::Tensor traces = model.infer(stack_features(batch)).traces;
    const std::size_t p = traces.dim(1);
    for (std::size_t b = 0; b < batch.size(); ++b)
      out.emplace_back(traces.data() + b * p, traces.data() + (b + 1) * p);
  }
  return out;
}

double safe_ccc(std::span<const double> x, std::span<const double> y) {
  try {
    return ccc(x, y);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateInput) throw;
    return 0.0;
  }
}

double mean_validation_ccc(const EffortEstimator& model, std::span<const EffortExample> data,
                           std::size_t batch_size) {
  const auto preds = predict_all(model, data, batch_size);
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) sum += safe_ccc(preds[i], data[i].reference.values);
  return sum / static_cast<double>(data.size());
}

}  // namespace

EffortTrainResult train_effort(std::span<const EffortExample> train, std::span<const EffortExample> validation,
                               const EffortArch& arch, const TrainConfig& config, const nlohmann::json& snapshot) {
  config.validate();
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "training split is empty");
  if (validation.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "validation split is empty");
  for (const auto& ex : train)
    if (ex.reference.values.size() != arch.trace_points)
      throw Error(ErrorCode::ShapeMismatch, kModule, "reference trace length differs from the architecture");

  EffortEstimator model(arch, derive_seed(config.seed, "effort.init"));
  nn::Adam opt(model.state(), {.learning_rate = config.learning_rate});

  EffortTrainResult result;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0, steps = 0;
  bool budget_hit = false;
  std::vector<FeaturePtr> batch;

  for (std::size_t epoch = 1; epoch <= config.max_epochs && !budget_hit; ++epoch) {
    const auto order = shuffled_order(train.size(), derive_seed(config.seed, "effort.epoch." + std::to_string(epoch)));
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < order.size(); i += config.batch_size) {
      const std::size_t end = std::min(order.size(), i + config.batch_size);
      batch.clear();
      for (std::size_t j = i; j < end; ++j) batch.push_back(train[order[j]].features);
      const nn::Tensor traces = model.forward_train(stack_features(batch));
      const std::size_t b = batch.size(), p = arch.trace_points;
      nn::Tensor grad({b, p});
      double loss = 0.0;
      for (std::size_t k = 0; k < b; ++k) {
        const auto r = ccc_loss(std::span<const double>(traces.data() + k * p, p), train[order[i + k]].reference.values);
        loss += r.value;
        for (std::size_t q = 0; q < p; ++q) grad[k * p + q] = r.grad[q] / static_cast<double>(b);
      }
      loss /= static_cast<double>(b);
      model.backward(grad);
      opt.step();
      opt.zero_grad();
      result.step_losses.push_back(loss);
      epoch_loss += loss * static_cast<double>(b);
      seen += b;
      if (config.max_steps != 0 && ++steps >= config.max_steps) {
        budget_hit = true;
        break;
      }
    }
    const double val = mean_validation_ccc(model, validation, config.batch_size);
    result.history.push_back({epoch, epoch_loss / static_cast<double>(seen), val});
    if (val > best) {
      best = val;
      since_best = 0;
      result.best_epoch = epoch;
      result.best_validation_ccc = val;
      result.checkpoint = nn::Checkpoint{};
      model.save_to(result.checkpoint);
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  nlohmann::json cfg = snapshot.is_object() ? snapshot : nlohmann::json::object();
  cfg["model"] = "effort";
  cfg["effort_arch"] = arch.to_json();
  cfg["effort_train"] = config.to_json();
  cfg["best_epoch"] = result.best_epoch;
  result.checkpoint.config = std::move(cfg);
  result.checkpoint.rng_seed = config.seed;
  return result;
}

EffortEvaluation evaluate_traces(std::span<const std::vector<double>> predictions,
                                 std::span<const std::vector<double>> references) {
  if (predictions.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "nothing to evaluate");
  if (predictions.size() != references.size())
    throw Error(ErrorCode::ShapeMismatch, kModule, "prediction and reference counts differ");
  EffortEvaluation ev;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& r = references[i];
    ev.ccc.push_back(ccc(p, r));
    if (p.size() != r.size()) throw Error(ErrorCode::ShapeMismatch, kModule, "trace lengths differ");
    double se = 0.0, ae = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      se += (p[k] - r[k]) * (p[k] - r[k]);
      ae += std::abs(p[k] - r[k]);
    }
    ev.rmse.push_back(std::sqrt(se / static_cast<double>(p.size())));
    ev.mae.push_back(ae / static_cast<double>(p.size()));
  }
  ev.ccc_summary = metrics::mean_std(ev.ccc);
  ev.rmse_summary = metrics::mean_std(ev.rmse);
  ev.mae_summary = metrics::mean_std(ev.mae);
  return ev;
}

EffortEvaluation evaluate_effort(const EffortEstimator& model, std::span<const EffortExample> dataset,
                                 std::size_t batch_size) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "nothing to evaluate");
  const auto preds = predict_all(model, dataset, std::max<std::size_t>(batch_size, 1));
  std::vector<std::vector<double>> refs;
  refs.reserve(dataset.size());
  for (const auto& ex : dataset) refs.push_back(ex.reference.values);
  return evaluate_traces(preds, refs);
}

std::string EffortEvaluation::table_row() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f | %.3f ± %.3f | %.3f ± %.3f", ccc_summary.mean,
                ccc_summary.std, rmse_summary.mean, rmse_summary.std, mae_summary.mean, mae_summary.std);
  return buf;
}

void write_effort_file(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, kModule, "cannot write " + path.string());
  out << "EFF32 " << values.size() << '\n';
  for (float v : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    const unsigned char le[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                 static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(le), 4);
  }
  if (!out) throw Error(ErrorCode::Io, kModule, "short write to " + path.string());
}

std::vector<float> read_effort_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, kModule, "cannot open " + path.string());
  std::string magic;
  std::size_t n = 0;
  in >> magic >> n;
  if (magic != "EFF32" || in.get() != '\n')
    throw Error(ErrorCode::UnsupportedFormat, kModule, path.string() + " is not an EFF32 file");
  std::vector<float> values(n);
  for (auto& v : values) {
    unsigned char le[4];
    if (!in.read(reinterpret_cast<char*>(le), 4))
      throw Error(ErrorCode::UnsupportedFormat, kModule, path.string() + " is truncated");
    const std::uint32_t bits = le[0] | (le[1] << 8) | (le[2] << 16) | (static_cast<std::uint32_t>(le[3]) << 24);
    std::memcpy(&v, &bits, 4);
  }
  return values;
}

}  // namespace apnea::effort
