#pragma once

#include <cstdint>
#include <vector>

#include "apnea/nn/layers.hpp"

namespace apnea::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every entry in `params` that has a gradient.
/// Entries without a gradient (buffers) are skipped.
void adam_step(const std::vector<StateRef>& params, AdamState& state, const AdamConfig& config);

class Adam {
 public:
  Adam(std::vector<StateRef> params, AdamConfig config);

  void step() { adam_step(params_, state_, config_); }
  void zero_grad() { nn::zero_grad(params_); }
  const AdamState& state() const { return state_; }

 private:
  std::vector<StateRef> params_;
  AdamConfig config_;
  AdamState state_;
};

}  // namespace apnea::nn
