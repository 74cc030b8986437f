#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "apnea/effort.hpp"
#include "apnea/nn/checkpoint.hpp"
#include "apnea/nn/layers.hpp"
#include "apnea/training.hpp"

namespace apnea::osa {

inline constexpr double kProbabilityClamp = 1e-7;

struct ClassCounts {
  std::size_t negative = 0;
  std::size_t positive = 0;

  std::size_t total() const { return negative + positive; }
  /// N / (2 N_c) for the class of `label`; Error(MissingClass) if N_c is zero.
  double weight(int label) const;
};

ClassCounts count_classes(std::span<const int> labels);

struct BceResult {
  double value = 0.0;
  std::vector<double> grad;  // d loss / d p, zero where the clamp is active
};

/// Class-weighted binary cross-entropy averaged over the batch. Weights come
/// from `counts`, which should describe the whole training split.
BceResult weighted_bce(std::span<const double> p, std::span<const int> y, const ClassCounts& counts);

enum class ModelKind { audio_only, latent_fusion };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct AudioArch {
  std::size_t frames = 1500;
  std::size_t mel_bins = 64;
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t pool = 4;
  std::size_t embedding = 512;
  std::size_t fusion_hidden = 256;

  /// Flattened width of the last convolutional block.
  std::size_t flat_features() const;

  void validate() const;
  nlohmann::json to_json() const;
  static AudioArch from_json(const nlohmann::json& j);
};

/// Audio CNN with a 512-d projection, either followed directly by a sigmoid head
/// or concatenated with the frozen respiratory embedding and passed through
/// one hidden fusion layer.
class OsaClassifier {
 public:
  OsaClassifier(ModelKind kind, AudioArch arch, std::uint64_t seed,
                std::shared_ptr<const effort::EffortEstimator> effort = nullptr);

  ModelKind kind() const { return kind_; }
  const AudioArch& arch() const { return arch_; }
  const effort::EffortEstimator* effort() const { return effort_.get(); }
  std::size_t effort_dim() const;

  /// [N, 1, frames, bins] (+ [N, effort_dim] for fusion) -> probabilities [N].
  nn::Tensor forward_train(const nn::Tensor& features, const nn::Tensor* effort_embeddings = nullptr);
  void backward(const nn::Tensor& grad_probs);

  /// Eval path; the fusion model derives the respiratory embedding from the
  /// same features unless precomputed ones are supplied.
  nn::Tensor predict(const nn::Tensor& features, const nn::Tensor* effort_embeddings = nullptr) const;
  double classify_segment(const dsp::LogMelSegment& segment) const;

  /// Final linear layer (the one feeding the sigmoid).
  nn::Linear& output_layer();

  /// Trainable classifier tensors; never includes the frozen estimator.
  std::vector<nn::StateRef> state();

  nn::Checkpoint to_checkpoint(const nlohmann::json& snapshot = nlohmann::json::object());
  static OsaClassifier from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  nn::Tensor embed_audio_train(const nn::Tensor& features);
  nn::Tensor embed_audio_eval(const nn::Tensor& features) const;

  ModelKind kind_;
  AudioArch arch_;
  std::shared_ptr<const effort::EffortEstimator> effort_;
  nn::Sequential encoder_;
  nn::Sequential projection_;
  nn::Sequential head_;
  nn::Shape encoder_shape_;
};

struct OsaExample {
  FeaturePtr features;
  int label = 0;
  std::string subject_id;
};

struct OsaTrainResult {
  nn::Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  std::vector<double> step_losses;
  std::size_t best_epoch = 0;
  double best_validation_score = 0.0;
  ClassCounts counts;
};

/// Weighted-BCE training with Adam, early-stopped on validation AUC (or on
/// negative validation loss when the validation split holds a single class).
/// Equal AUCs are separated by the lower validation loss.
/// Throws Error(MissingCheckpoint) for latent_fusion without an estimator,
/// Error(EmptyDataset) and Error(MissingClass) on unusable splits.
OsaTrainResult train_osa(ModelKind kind, std::span<const OsaExample> train, std::span<const OsaExample> validation,
                         const AudioArch& arch, const TrainConfig& config,
                         std::shared_ptr<const effort::EffortEstimator> effort = nullptr,
                         const nlohmann::json& snapshot = nlohmann::json::object());

/// Eval-mode probabilities for every example, in order.
std::vector<double> predict_examples(const OsaClassifier& model, std::span<const OsaExample> data,
                                     std::size_t batch_size = 32);

}  // namespace apnea::osa
