#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "apnea/metrics.hpp"
#include "apnea/nn/checkpoint.hpp"
#include "apnea/nn/layers.hpp"
#include "apnea/training.hpp"
#include "apnea/types.hpp"

namespace apnea::effort {

inline constexpr std::size_t kTracePoints = 960;
inline constexpr std::size_t kDecodedSteps = 187;

struct MomentStats {
  double mu_x = 0.0, mu_y = 0.0;
  double var_x = 0.0, var_y = 0.0;
  double cov_xy = 0.0;
};

/// Population (1/N) moments, two-pass.
MomentStats moments(std::span<const double> x, std::span<const double> y);

/// Concordance correlation 2 cov / (var_x + var_y + (mu_x - mu_y)^2).
/// Throws Error(DegenerateInput) when the denominator is below 1e-12.
double ccc(std::span<const double> x, std::span<const double> y);
double pearson(std::span<const double> x, std::span<const double> y);

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // d loss / d pred
};

/// 1 - ccc(pred, ref) with `eps` added to the denominator in its sum form
/// with respect to `pred`.
LossResult ccc_loss(std::span<const double> pred, std::span<const double> ref, double eps = 1e-8);

/// A 32 Hz effort sequence with the (mean, std) it was z-scored with.
struct EffortTrace {
  std::vector<double> values;
  double mean = 0.0;
  double std = 1.0;
  SegmentIndex segment;
};

/// z-scores `raw`; a standard deviation below `min_std` is replaced by 1 so
/// flat references stay finite.
EffortTrace z_normalize(std::span<const double> raw, SegmentIndex segment = {}, double min_std = 1e-8);

/// Cuts round(duration * 32) points starting at round(start * 32) out of a
/// night-long trace and z-scores them. Throws Error(ShapeMismatch) past the end.
EffortTrace reference_segment(std::span<const float> night_effort, SegmentIndex segment,
                              int rate_hz = kEffortRateHz);

/// Linear interpolation of `in` onto `out_len` uniformly spaced points that
/// keep both endpoints.
std::vector<double> interpolate_linear(std::span<const double> in, std::size_t out_len);
/// Transpose of interpolate_linear.
std::vector<double> interpolate_linear_adjoint(std::span<const double> grad_out, std::size_t in_len);

enum class EmbeddingMode { mean, final_state };

/// Widths of the estimator. Defaults are the full-size model; tests shrink them.
struct EffortArch {
  std::size_t frames = 1500;
  std::size_t mel_bins = 64;
  std::vector<std::size_t> channels{32, 64, 128};
  std::size_t pool_time = 2;
  std::size_t pool_freq = 4;
  std::size_t hidden = 64;
  std::size_t trace_points = kTracePoints;
  EmbeddingMode embedding = EmbeddingMode::mean;

  /// Sequence length after the convolutional stack.
  std::size_t steps() const;
  std::size_t embedding_dim() const { return 2 * hidden; }

  void validate() const;
  nlohmann::json to_json() const;
  static EffortArch from_json(const nlohmann::json& j);
};

/// CNN -> BiLSTM -> per-step linear decoder -> interpolation to trace length.
class EffortEstimator {
 public:
  explicit EffortEstimator(EffortArch arch = {}, std::uint64_t seed = 0);

  const EffortArch& arch() const { return arch_; }

  /// [N, 1, frames, bins] -> [N, trace_points], recording for backward().
  nn::Tensor forward_train(const nn::Tensor& features);
  void backward(const nn::Tensor& grad_traces);

  struct Output {
    nn::Tensor hidden;  // [N, steps, 2H]
    nn::Tensor traces;  // [N, trace_points]
  };
  Output infer(const nn::Tensor& features) const;

  /// Projects one [steps, 2H] hidden sequence and interpolates it.
  /// Throws Error(ShapeMismatch) unless it has exactly steps() rows.
  std::vector<double> decode_and_interpolate(const nn::Tensor& hidden) const;

  /// [N, 1, frames, bins] -> [N, 2H] respiratory embeddings.
  nn::Tensor embeddings(const nn::Tensor& features) const;
  std::vector<double> embedding(const dsp::LogMelSegment& segment) const;
  EffortTrace predict(const dsp::LogMelSegment& segment) const;

  std::vector<nn::StateRef> state();

  void save_to(nn::Checkpoint& ckpt, const std::string& prefix = {}) const;
  /// Builds the estimator described by ckpt.config["effort_arch"] and loads the
  /// tensors stored under `prefix`.
  static EffortEstimator from_checkpoint(const nn::Checkpoint& ckpt, const std::string& prefix = {});

 private:
  nn::Tensor to_sequence(const nn::Tensor& maps) const;
  nn::Tensor from_sequence(const nn::Tensor& seq) const;
  nn::Tensor pool_embedding(const nn::Tensor& hidden) const;

  EffortArch arch_;
  nn::Sequential cnn_;
  std::unique_ptr<nn::BiLSTM> lstm_;
  std::unique_ptr<nn::Linear> decoder_;
  std::size_t cnn_channels_ = 0;
};

struct EffortExample {
  FeaturePtr features;
  EffortTrace reference;
  std::string subject_id;
};

struct EffortTrainResult {
  nn::Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  std::vector<double> step_losses;
  std::size_t best_epoch = 0;
  double best_validation_ccc = 0.0;
};

/// Mini-batch Adam on mean (1 - CCC), early-stopped on mean validation CCC.
/// The returned checkpoint holds the best-validation weights and `snapshot`
/// merged into its config. Throws Error(EmptyDataset) on an empty split.
EffortTrainResult train_effort(std::span<const EffortExample> train, std::span<const EffortExample> validation,
                               const EffortArch& arch, const TrainConfig& config,
                               const nlohmann::json& snapshot = nlohmann::json::object());

struct EffortEvaluation {
  std::vector<double> ccc, rmse, mae;
  metrics::MetricSummary ccc_summary, rmse_summary, mae_summary;

  /// "CCC ± std | RMSE ± std | MAE ± std" with three decimals.
  std::string table_row() const;
};

EffortEvaluation evaluate_traces(std::span<const std::vector<double>> predictions,
                                 std::span<const std::vector<double>> references);
EffortEvaluation evaluate_effort(const EffortEstimator& model, std::span<const EffortExample> dataset,
                                 std::size_t batch_size = 32);

/// Effort file: "EFF32 <n>\n" then n little-endian float32 samples at 32 Hz.
void write_effort_file(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_effort_file(const std::filesystem::path& path);

}  // namespace apnea::effort
