#include "apnea/nn/adam.hpp"

#include <cmath>

#include "apnea/error.hpp"

namespace apnea::nn {

void adam_step(const std::vector<StateRef>& params, AdamState& state, const AdamConfig& config) {
  if (!(config.learning_rate > 0.0)) throw Error(ErrorCode::ConfigInvalid, "nn", "learning rate must be positive");
  if (state.m.empty()) {
    for (const StateRef& p : params) {
      const std::size_t n = p.grad ? p.value->size() : 0;
      state.m.emplace_back(n, 0.0);
      state.v.emplace_back(n, 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw Error(ErrorCode::ShapeMismatch, "nn", "optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const StateRef& p = params[i];
    if (!p.grad) continue;
    if (p.grad->shape() != p.value->shape() || state.m[i].size() != p.value->size())
      throw Error(ErrorCode::ShapeMismatch, "nn", "gradient shape mismatch for " + p.name);
    check_finite(*p.grad, p.name + " gradient");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const StateRef& p = params[i];
    if (!p.grad) continue;
    double* w = p.value->data();
    const double* g = p.grad->data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (std::size_t k = 0; k < p.value->size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      w[k] -= config.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.eps);
    }
  }
}

Adam::Adam(std::vector<StateRef> params, AdamConfig config) : config_(config) {
  for (StateRef& p : params)
    if (p.grad) params_.push_back(std::move(p));
}

}  // namespace apnea::nn
