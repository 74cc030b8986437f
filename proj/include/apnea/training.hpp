#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "json.hpp"

#include "apnea/dsp.hpp"
#include "apnea/nn/tensor.hpp"

namespace apnea {

using FeaturePtr = std::shared_ptr<const dsp::LogMelSegment>;

/// Optimisation settings shared by both training stages.
struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::size_t max_steps = 0;  // 0 = unlimited
  std::uint64_t seed = 0;  // set per run from the run seed; not part of the JSON form

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  /// Fields missing from `j` keep their value in `defaults`.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& defaults);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_score = 0.0;
};

/// Stacks log-Mel matrices into a [N, 1, frames, bins] tensor.
/// Throws Error(ShapeMismatch) if the matrices differ in size.
nn::Tensor stack_features(std::span<const FeaturePtr> features);

/// Deterministic permutation of 0..n-1.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

}  // namespace apnea
