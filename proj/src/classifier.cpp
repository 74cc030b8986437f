#include "apnea/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "apnea/error.hpp"
#include "apnea/hash.hpp"
#include "apnea/metrics.hpp"
#include "apnea/nn/adam.hpp"

namespace apnea::osa {

namespace {
constexpr const char* kModule = "osa";
constexpr const char* kOsaPrefix = "osa.";
constexpr const char* kEffortPrefix = "effort.";
}  // namespace

double ClassCounts::weight(int label) const {
  const std::size_t nc = label ? positive : negative;
  if (nc == 0)
    throw Error(ErrorCode::MissingClass, kModule, std::string("no ") + (label ? "positive" : "negative") + " samples");
  return static_cast<double>(total()) / (2.0 * static_cast<double>(nc));
}

ClassCounts count_classes(std::span<const int> labels) {
  ClassCounts c;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorCode::ConfigInvalid, kModule, "labels must be 0 or 1");
    (y ? c.positive : c.negative)++;
  }
  return c;
}

BceResult weighted_bce(std::span<const double> p, std::span<const int> y, const ClassCounts& counts) {
  if (p.size() != y.size()) throw Error(ErrorCode::ShapeMismatch, kModule, "probabilities and labels differ in length");
  if (p.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "empty batch");
  const double n = static_cast<double>(p.size());
  BceResult r;
  r.grad.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double w = counts.weight(y[i]);
    const double pc = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const bool clamped = pc != p[i];
    if (y[i]) {
      r.value -= w * std::log(pc);
      r.grad[i] = clamped ? 0.0 : -w / (n * pc);
    } else {
      r.value -= w * std::log(1.0 - pc);
      r.grad[i] = clamped ? 0.0 : w / (n * (1.0 - pc));
    }
  }
  r.value /= n;
  return r;
}

std::string to_string(ModelKind kind) { return kind == ModelKind::audio_only ? "audio_only" : "latent_fusion"; }

ModelKind parse_model_kind(const std::string& text) {
  if (text == "audio" || text == "audio_only") return ModelKind::audio_only;
  if (text == "fusion" || text == "latent_fusion") return ModelKind::latent_fusion;
  throw Error(ErrorCode::ConfigInvalid, kModule, "unknown model kind '" + text + "'");
}

std::size_t AudioArch::flat_features() const {
  std::size_t t = frames, f = mel_bins;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    t /= pool;
    f /= pool;
  }
  return channels.empty() ? 0 : channels.back() * t * f;
}

void AudioArch::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, "osa", what); };
  if (frames == 0 || mel_bins == 0) bad("frames and mel_bins must be positive");
  if (channels.empty()) bad("at least one convolutional block is required");
  for (std::size_t c : channels)
    if (c == 0) bad("channel counts must be positive");
  if (pool == 0) bad("pool must be positive");
  if (embedding == 0 || fusion_hidden == 0) bad("embedding widths must be positive");
  if (flat_features() == 0) bad("pooling collapses the feature map to nothing");
}

nlohmann::json AudioArch::to_json() const {
  return {{"frames", frames},       {"mel_bins", mel_bins},   {"channels", channels},
          {"pool", pool},           {"embedding", embedding}, {"fusion_hidden", fusion_hidden}};
}

AudioArch AudioArch::from_json(const nlohmann::json& j) {
  AudioArch a;
  a.frames = j.value("frames", a.frames);
  a.mel_bins = j.value("mel_bins", a.mel_bins);
  a.channels = j.value("channels", a.channels);
  a.pool = j.value("pool", a.pool);
  a.embedding = j.value("embedding", a.embedding);
  a.fusion_hidden = j.value("fusion_hidden", a.fusion_hidden);
  a.validate();
  return a;
}

OsaClassifier::OsaClassifier(ModelKind kind, AudioArch arch, std::uint64_t seed,
                             std::shared_ptr<const effort::EffortEstimator> effort)
    : kind_(kind), arch_(std::move(arch)), effort_(std::move(effort)) {
  arch_.validate();
  if (kind_ == ModelKind::latent_fusion && !effort_)
    throw Error(ErrorCode::MissingCheckpoint, kModule, "latent fusion needs a trained effort estimator");
  std::mt19937_64 rng(seed);
  std::size_t in = 1;
  for (std::size_t b = 0; b < arch_.channels.size(); ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    const std::size_t out = arch_.channels[b];
    encoder_.add(p + "conv", std::make_unique<nn::Conv2d>(in, out, 3, 1, rng));
    encoder_.add(p + "bn", std::make_unique<nn::BatchNorm>(out));
    encoder_.add(p + "relu", std::make_unique<nn::ReLU>());
    encoder_.add(p + "pool", std::make_unique<nn::MaxPool2d>(arch_.pool, arch_.pool));
    in = out;
  }
  projection_.add("linear", std::make_unique<nn::Linear>(arch_.flat_features(), arch_.embedding, rng));
  projection_.add("relu", std::make_unique<nn::ReLU>());
  if (kind_ == ModelKind::audio_only) {
    head_.add("linear", std::make_unique<nn::Linear>(arch_.embedding, 1, rng));
  } else {
    head_.add("fusion", std::make_unique<nn::Linear>(arch_.embedding + effort_dim(), arch_.fusion_hidden, rng));
    head_.add("relu", std::make_unique<nn::ReLU>());
    head_.add("linear", std::make_unique<nn::Linear>(arch_.fusion_hidden, 1, rng));
  }
  head_.add("sigmoid", std::make_unique<nn::Sigmoid>());
}

std::size_t OsaClassifier::effort_dim() const { return effort_ ? effort_->arch().embedding_dim() : 0; }

nn::Linear& OsaClassifier::output_layer() { return static_cast<nn::Linear&>(head_.at(head_.size() - 2)); }

nn::Tensor OsaClassifier::embed_audio_train(const nn::Tensor& features) {
  nn::Tensor maps = encoder_.forward_train(features);
  encoder_shape_ = maps.shape();
  const std::size_t n = maps.dim(0);
  maps.reshape({n, maps.size() / n});
  return projection_.forward_train(std::move(maps));
}

nn::Tensor OsaClassifier::embed_audio_eval(const nn::Tensor& features) const {
  nn::Tensor maps = encoder_.forward_eval(features);
  const std::size_t n = maps.dim(0);
  maps.reshape({n, maps.size() / n});
  return projection_.forward_eval(std::move(maps));
}

namespace {

nn::Tensor concat_features(const nn::Tensor& a, const nn::Tensor& b) {
  const std::size_t n = a.dim(0), fa = a.dim(1), fb = b.dim(1);
  if (b.rank() != 2 || b.dim(0) != n)
    throw Error(ErrorCode::ShapeMismatch, "osa", "effort embeddings " + nn::shape_string(b.shape()) +
                                                     " do not match audio batch " + nn::shape_string(a.shape()));
  nn::Tensor out({n, fa + fb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * fa, fa, out.data() + i * (fa + fb));
    std::copy_n(b.data() + i * fb, fb, out.data() + i * (fa + fb) + fa);
  }
  return out;
}

nn::Tensor flatten_probs(nn::Tensor p) {
  p.reshape({p.dim(0)});
  return p;
}

}  // namespace

nn::Tensor OsaClassifier::forward_train(const nn::Tensor& features, const nn::Tensor* effort_embeddings) {
  nn::Tensor audio = embed_audio_train(features);
  if (kind_ == ModelKind::latent_fusion) {
    if (!effort_embeddings) throw Error(ErrorCode::ShapeMismatch, kModule, "fusion training needs effort embeddings");
    if (effort_embeddings->dim(1) != effort_dim())
      throw Error(ErrorCode::ShapeMismatch, kModule, "effort embedding width mismatch");
    audio = concat_features(audio, *effort_embeddings);
  }
  return flatten_probs(head_.forward_train(std::move(audio)));
}

void OsaClassifier::backward(const nn::Tensor& grad_probs) {
  nn::Tensor g = grad_probs;
  g.reshape({g.size(), 1});
  nn::Tensor gh = head_.backward(std::move(g));
  if (kind_ == ModelKind::latent_fusion) {
    // Drop the columns that belong to the frozen respiratory embedding.
    const std::size_t n = gh.dim(0), f = gh.dim(1), fa = arch_.embedding;
    nn::Tensor ga({n, fa});
    for (std::size_t i = 0; i < n; ++i) std::copy_n(gh.data() + i * f, fa, ga.data() + i * fa);
    gh = std::move(ga);
  }
  nn::Tensor gm = projection_.backward(std::move(gh));
  gm.reshape(encoder_shape_);
  encoder_.backward(std::move(gm));
}

nn::Tensor OsaClassifier::predict(const nn::Tensor& features, const nn::Tensor* effort_embeddings) const {
  nn::Tensor audio = embed_audio_eval(features);
  if (kind_ == ModelKind::latent_fusion) {
    if (effort_embeddings) {
      audio = concat_features(audio, *effort_embeddings);
    } else {
      audio = concat_features(audio, effort_->embeddings(features));
    }
  }
  return flatten_probs(head_.forward_eval(std::move(audio)));
}

double OsaClassifier::classify_segment(const dsp::LogMelSegment& segment) const {
  const FeaturePtr p(&segment, [](const dsp::LogMelSegment*) {});
  return predict(stack_features(std::span<const FeaturePtr>(&p, 1)))[0];
}

std::vector<nn::StateRef> OsaClassifier::state() {
  auto s = encoder_.state("encoder");
  auto p = projection_.state("projection");
  auto h = head_.state("head");
  s.insert(s.end(), p.begin(), p.end());
  s.insert(s.end(), h.begin(), h.end());
  return s;
}

nn::Checkpoint OsaClassifier::to_checkpoint(const nlohmann::json& snapshot) {
  nn::Checkpoint ckpt;
  ckpt.config = snapshot.is_object() ? snapshot : nlohmann::json::object();
  ckpt.config["model"] = to_string(kind_);
  ckpt.config["audio_arch"] = arch_.to_json();
  nn::capture_state(state(), ckpt, kOsaPrefix);
  if (effort_) effort_->save_to(ckpt, kEffortPrefix);
  return ckpt;
}

OsaClassifier OsaClassifier::from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto& cfg = ckpt.config;
  if (!cfg.contains("model") || !cfg.contains("audio_arch"))
    throw Error(ErrorCode::CorruptCheckpoint, kModule, "checkpoint does not describe an OSA classifier");
  const ModelKind kind = parse_model_kind(cfg.at("model").get<std::string>());
  std::shared_ptr<const effort::EffortEstimator> est;
  if (kind == ModelKind::latent_fusion)
    est = std::make_shared<const effort::EffortEstimator>(effort::EffortEstimator::from_checkpoint(ckpt, kEffortPrefix));
  OsaClassifier model(kind, AudioArch::from_json(cfg.at("audio_arch")), 0, std::move(est));
  nn::restore_state(model.state(), ckpt, kOsaPrefix);
  return model;
}

// ---------------------------------------------------------------------------

namespace {

nn::Tensor gather_rows(const nn::Tensor& rows, std::span<const std::size_t> idx) {
  const std::size_t f = rows.dim(1);
  nn::Tensor out({idx.size(), f});
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(rows.data() + idx[i] * f, f, out.data() + i * f);
  return out;
}

nn::Tensor effort_embeddings_for(const effort::EffortEstimator& est, std::span<const OsaExample> data,
                                 std::size_t batch_size) {
  const std::size_t dim = est.arch().embedding_dim();
  nn::Tensor out({data.size(), dim});
  std::vector<FeaturePtr> batch;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    batch.clear();
    for (std::size_t j = i; j < std::min(data.size(), i + batch_size); ++j) batch.push_back(data[j].features);
    const nn::Tensor e = est.embeddings(stack_features(batch));
    std::copy(e.storage().begin(), e.storage().end(), out.data() + i * dim);
  }
  return out;
}

std::vector<double> predict_with(const OsaClassifier& model, std::span<const OsaExample> data,
                                 const nn::Tensor* effort_rows, std::size_t batch_size) {
  std::vector<double> probs;
  probs.reserve(data.size());
  std::vector<FeaturePtr> batch;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    batch.clear();
    idx.clear();
    for (std::size_t j = i; j < std::min(data.size(), i + batch_size); ++j) {
      batch.push_back(data[j].features);
      idx.push_back(j);
    }
    nn::Tensor p;
    if (effort_rows) {
      const nn::Tensor e = gather_rows(*effort_rows, idx);
      p = model.predict(stack_features(batch), &e);
    } else {
      p = model.predict(stack_features(batch));
    }
    probs.insert(probs.end(), p.storage().begin(), p.storage().end());
  }
  return probs;
}

double mean_log_loss(const std::vector<double>& probs, const std::vector<int>& labels) {
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    loss -= labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return loss / static_cast<double>(probs.size());
}

struct ValidationScore {
  double primary;  // AUC, or -BCE with one class
  double loss;

  // AUC saturates on small easy splits; ties then go to the lower loss.
  bool better_than(const ValidationScore& o) const {
    return primary > o.primary || (primary == o.primary && loss < o.loss);
  }
};

ValidationScore validation_score(const std::vector<double>& probs, std::span<const OsaExample> data) {
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const auto& ex : data) labels.push_back(ex.label);
  const ClassCounts c = count_classes(labels);
  const double loss = mean_log_loss(probs, labels);
  if (c.positive > 0 && c.negative > 0) return {metrics::roc_auc(probs, labels), loss};
  return {-loss, loss};
}

}  // namespace

std::vector<double> predict_examples(const OsaClassifier& model, std::span<const OsaExample> data,
                                     std::size_t batch_size) {
  return predict_with(model, data, nullptr, std::max<std::size_t>(batch_size, 1));
}

OsaTrainResult train_osa(ModelKind kind, std::span<const OsaExample> train, std::span<const OsaExample> validation,
                         const AudioArch& arch, const TrainConfig& config,
                         std::shared_ptr<const effort::EffortEstimator> effort, const nlohmann::json& snapshot) {
  config.validate();
  if (kind == ModelKind::latent_fusion && !effort)
    throw Error(ErrorCode::MissingCheckpoint, kModule, "latent fusion needs a trained effort estimator");
  if (train.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "training split is empty");
  if (validation.empty()) throw Error(ErrorCode::EmptyDataset, kModule, "validation split is empty");

  std::vector<int> train_labels;
  train_labels.reserve(train.size());
  for (const auto& ex : train) train_labels.push_back(ex.label);
  OsaTrainResult result;
  result.counts = count_classes(train_labels);
  result.counts.weight(0);
  result.counts.weight(1);

  if (kind == ModelKind::audio_only) effort.reset();
  OsaClassifier model(kind, arch, derive_seed(config.seed, "osa.init"), effort);
  nn::Adam opt(model.state(), {.learning_rate = config.learning_rate});

  // The estimator is frozen, so its embeddings are computed once per split.
  nn::Tensor train_effort, val_effort;
  if (effort) {
    train_effort = effort_embeddings_for(*effort, train, config.batch_size);
    val_effort = effort_embeddings_for(*effort, validation, config.batch_size);
  }

  nn::Checkpoint best_ckpt;
  ValidationScore best{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  std::size_t since_best = 0, steps = 0;
  bool budget_hit = false;
  std::vector<FeaturePtr> batch;
  std::vector<std::size_t> idx;
  std::vector<int> labels;
  const auto stamp = [&](nlohmann::json cfg) {
    cfg["osa_train"] = config.to_json();
    cfg["class_counts"] = {{"negative", result.counts.negative}, {"positive", result.counts.positive}};
    return cfg;
  };

  for (std::size_t epoch = 1; epoch <= config.max_epochs && !budget_hit; ++epoch) {
    const auto order = shuffled_order(train.size(), derive_seed(config.seed, "osa.epoch." + std::to_string(epoch)));
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < order.size(); i += config.batch_size) {
      batch.clear();
      idx.clear();
      labels.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + config.batch_size); ++j) {
        batch.push_back(train[order[j]].features);
        idx.push_back(order[j]);
        labels.push_back(train[order[j]].label);
      }
      nn::Tensor probs;
      if (effort) {
        const nn::Tensor e = gather_rows(train_effort, idx);
        probs = model.forward_train(stack_features(batch), &e);
      } else {
        probs = model.forward_train(stack_features(batch));
      }
      const BceResult loss = weighted_bce(probs.values(), labels, result.counts);
      model.backward(nn::Tensor({loss.grad.size()}, loss.grad));
      opt.step();
      opt.zero_grad();
      result.step_losses.push_back(loss.value);
      epoch_loss += loss.value * static_cast<double>(batch.size());
      seen += batch.size();
      if (config.max_steps != 0 && ++steps >= config.max_steps) {
        budget_hit = true;
        break;
      }
    }
    const auto probs = predict_with(model, validation, effort ? &val_effort : nullptr, config.batch_size);
    const ValidationScore score = validation_score(probs, validation);
    result.history.push_back({epoch, epoch_loss / static_cast<double>(seen), score.primary});
    if (score.better_than(best)) {
      best = score;
      since_best = 0;
      result.best_epoch = epoch;
      result.best_validation_score = score.primary;
      best_ckpt = model.to_checkpoint(stamp(snapshot));
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  best_ckpt.config["best_epoch"] = result.best_epoch;
  best_ckpt.rng_seed = config.seed;
  result.checkpoint = std::move(best_ckpt);
  return result;
}

}  // namespace apnea::osa
