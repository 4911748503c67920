#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gcpl/tensor.hpp"

namespace gcpl {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // Global-norm clipping of the gradients passed to one step; off when unset.
  std::optional<double> grad_clip;
};

/// Named, non-owning references to the tensors one step updates.
using ParameterRefs = std::vector<std::pair<std::string, Tensor*>>;

/// AdamW with decoupled weight decay and bias-corrected moments:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
///
/// Moments are created lazily per parameter name, and the step counter is
/// shared. A step may update a subset of the parameters the state has seen;
/// the others keep their moments and are not touched.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {});

  /// `grads` must hold exactly the names in `params` with matching shapes.
  void step(const ParameterRefs& params, const GradientRecord& grads);

  const AdamWConfig& config() const noexcept { return config_; }
  std::int64_t steps() const noexcept { return steps_; }
  const Tensor& first_moment(const std::string& name) const { return first_.at(name); }
  const Tensor& second_moment(const std::string& name) const { return second_.at(name); }

 private:
  AdamWConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Tensor> first_;
  std::map<std::string, Tensor> second_;
};

}  // namespace gcpl
