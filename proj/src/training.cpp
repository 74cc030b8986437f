#include "apnea/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "apnea/error.hpp"

namespace apnea {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || learning_rate > 1.0)
    throw Error(ErrorCode::ConfigInvalid, "config", "learning_rate must be in (0, 1]");
  if (batch_size == 0) throw Error(ErrorCode::ConfigInvalid, "config", "batch_size must be positive");
  if (max_epochs == 0) throw Error(ErrorCode::ConfigInvalid, "config", "max_epochs must be positive");
  if (patience == 0) throw Error(ErrorCode::ConfigInvalid, "config", "patience must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size}, {"max_epochs", max_epochs},
          {"patience", patience},           {"max_steps", max_steps}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& defaults) {
  TrainConfig c = defaults;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.max_steps = j.value("max_steps", c.max_steps);
  return c;
}

nn::Tensor stack_features(std::span<const FeaturePtr> features) {
  if (features.empty()) throw Error(ErrorCode::EmptyDataset, "training", "no segments to stack");
  const std::size_t frames = features.front()->frames, bins = features.front()->bins;
  nn::Tensor out({features.size(), 1, frames, bins});
  double* dst = out.data();
  for (const auto& f : features) {
    if (f->frames != frames || f->bins != bins)
      throw Error(ErrorCode::ShapeMismatch, "training", "segments in one batch differ in shape");
    dst = std::copy(f->values.begin(), f->values.end(), dst);
  }
  return out;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

}  // namespace apnea
