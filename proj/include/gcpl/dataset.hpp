#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gcpl/tensor.hpp"

namespace gcpl {

/// Latent vectors with integer class labels in [0, class_names.size()).
struct LabeledLatents {
  std::vector<Tensor> latents;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return latents.size(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
};

}  // namespace gcpl
