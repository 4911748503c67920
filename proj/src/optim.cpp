#include "gcpl/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "gcpl/errors.hpp"

namespace gcpl {

AdamW::AdamW(AdamWConfig config) : config_(config) {
  if (!(config_.lr >= 0.0)) throw std::invalid_argument("AdamW: lr must be non-negative");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw std::invalid_argument("AdamW: betas must lie in [0, 1)");
  }
  if (!(config_.eps >= 0.0) || !(config_.weight_decay >= 0.0)) {
    throw std::invalid_argument("AdamW: eps and weight_decay must be non-negative");
  }
  if (config_.grad_clip && !(*config_.grad_clip > 0.0)) {
    throw std::invalid_argument("AdamW: grad_clip must be positive");
  }
}

void AdamW::step(const ParameterRefs& params, const GradientRecord& grads) {
  if (grads.size() != params.size()) {
    throw ShapeError("AdamW: gradient record does not cover exactly the trainable parameters");
  }
  double norm_sq = 0.0;
  for (const auto& [name, param] : params) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw ShapeError("AdamW: missing gradient for '" + name + "'");
    if (it->second.shape() != param->shape()) {
      throw ShapeError("AdamW: gradient shape " + shape_string(it->second.shape()) + " does not match '" +
                       name + "' " + shape_string(param->shape()));
    }
    if (!all_finite(it->second.data())) throw NumericalError("AdamW: non-finite gradient for '" + name + "'");
    norm_sq += squared_norm(it->second.data());
  }

  double clip_scale = 1.0;
  if (config_.grad_clip) {
    const double norm = std::sqrt(norm_sq);
    if (norm > *config_.grad_clip) clip_scale = *config_.grad_clip / norm;
  }

  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(steps_));

  for (const auto& [name, param] : params) {
    const Tensor& g = grads.at(name);
    auto [m_it, m_new] = first_.try_emplace(name, param->shape());
    auto [v_it, v_new] = second_.try_emplace(name, param->shape());
    if (m_it->second.shape() != param->shape()) throw ShapeError("AdamW: parameter '" + name + "' changed shape");
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < param->size(); ++i) {
      const double gi = clip_scale == 1.0 ? static_cast<double>(g[i]) : g[i] * clip_scale;
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * gi);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * gi * gi);
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      const double p = (*param)[i];
      const double update = m_hat / (std::sqrt(v_hat) + config_.eps) + config_.weight_decay * p;
      (*param)[i] = static_cast<float>(p - config_.lr * update);
    }
    if (!all_finite(param->data())) throw NumericalError("AdamW: parameter '" + name + "' became non-finite");
  }
}

}  // namespace gcpl
