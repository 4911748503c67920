#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcpl/denoiser.hpp"
#include "gcpl/prompt_learning.hpp"
#include "gcpl/schedule.hpp"
#include "gcpl/tensor.hpp"

namespace gcpl {

struct ClassifierConfig {
  std::size_t n_mc = 128;
  // Reuse one (t, eps) set for every candidate class (paired estimates).
  bool shared_pairs = true;
  std::uint64_t seed = 0;
};

/// Squared denoising errors per (candidate class, MC pair), row-major.
struct ErrorMatrix {
  std::size_t classes = 0;
  std::size_t pairs = 0;
  std::vector<double> errors;

  double at(std::size_t c, std::size_t i) const { return errors[c * pairs + i]; }
  std::vector<double> means() const;
};

struct ClassifierReport {
  std::size_t predicted = 0;
  std::vector<double> posterior;
  std::vector<double> mean_errors;
  std::uint64_t pairs_seed = 0;
};

/// Mean over pairs of mse(eps_i, eps_theta(x_t_i, t_i, prompt)).
double class_error(const Tensor& x, const ConditionEmbedding& prompt, std::span<const TimestepNoisePair> pairs,
                   const NoisePredictor& model, const NoiseSchedule& schedule);

/// p_i = 1 / sum_j exp(err_i - err_j), assuming a uniform class prior.
std::vector<double> posterior(std::span<const double> mean_errors);

/// softmax(-err) through a max-shifted log-sum-exp. Kept for cross-checking
/// the relative form above.
std::vector<double> posterior_log_sum_exp(std::span<const double> mean_errors);

/// Lowest index among the minimal errors.
std::size_t argmin_error(std::span<const double> mean_errors);

ErrorMatrix error_matrix(const Tensor& x, std::span<const ConditionEmbedding> prompts, const ClassifierConfig& config,
                         const NoisePredictor& model, const NoiseSchedule& schedule);

ClassifierReport classify(const Tensor& x, std::span<const ConditionEmbedding> prompts,
                          const ClassifierConfig& config, const NoisePredictor& model,
                          const NoiseSchedule& schedule);

/// Per-query seed, independent of evaluation order.
std::uint64_t query_seed(std::uint64_t seed, std::size_t query_index);

/// One JSON object per line: query_id, true_label, predicted_label, errors, posterior.
std::string report_json_line(std::size_t query_id, long long true_label, const ClassifierReport& report);

}  // namespace gcpl
