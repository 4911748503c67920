#include "gcpl/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "gcpl/errors.hpp"

namespace gcpl {

namespace {

void require_finite_errors(std::span<const double> errors) {
  if (errors.empty()) throw std::invalid_argument("posterior: no classes");
  if (!all_finite(errors)) throw NumericalError("posterior: non-finite error estimate");
}

}  // namespace

std::vector<double> ErrorMatrix::means() const {
  std::vector<double> out(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pairs; ++i) acc += at(c, i);
    out[c] = acc / static_cast<double>(pairs);
  }
  return out;
}

double class_error(const Tensor& x, const ConditionEmbedding& prompt, std::span<const TimestepNoisePair> pairs,
                   const NoisePredictor& model, const NoiseSchedule& schedule) {
  if (!model.frozen()) throw ContractError("class_error: the backbone must be frozen");
  if (pairs.empty()) throw std::invalid_argument("class_error: no Monte-Carlo pairs");
  if (x.size() != model.latent_dim()) throw ShapeError("class_error: query size does not match latent_dim");
  std::vector<double> pred(model.latent_dim());
  double total = 0.0;
  for (const auto& pair : pairs) {
    const Tensor xt = noise_latent(x, pair.eps, schedule.alpha_bar(pair.t));
    model.predict(xt.data(), pair.t, prompt.data(), pred);
    total += mse(pair.eps.data(), pred);
  }
  return total / static_cast<double>(pairs.size());
}

std::vector<double> posterior(std::span<const double> mean_errors) {
  require_finite_errors(mean_errors);
  std::vector<double> p(mean_errors.size());
  for (std::size_t i = 0; i < mean_errors.size(); ++i) {
    double denom = 0.0;
    for (double e : mean_errors) denom += std::exp(mean_errors[i] - e);
    p[i] = 1.0 / denom;
  }
  return p;
}

std::vector<double> posterior_log_sum_exp(std::span<const double> mean_errors) {
  require_finite_errors(mean_errors);
  const double best = *std::min_element(mean_errors.begin(), mean_errors.end());
  double sum = 0.0;
  for (double e : mean_errors) sum += std::exp(-(e - best));
  const double log_z = std::log(sum) - best;
  std::vector<double> p(mean_errors.size());
  for (std::size_t i = 0; i < mean_errors.size(); ++i) p[i] = std::exp(-mean_errors[i] - log_z);
  return p;
}

std::size_t argmin_error(std::span<const double> mean_errors) {
  if (mean_errors.empty()) throw std::invalid_argument("argmin_error: no classes");
  return static_cast<std::size_t>(std::min_element(mean_errors.begin(), mean_errors.end()) - mean_errors.begin());
}

ErrorMatrix error_matrix(const Tensor& x, std::span<const ConditionEmbedding> prompts, const ClassifierConfig& config,
                         const NoisePredictor& model, const NoiseSchedule& schedule) {
  if (!model.frozen()) throw ContractError("classify: the backbone must be frozen");
  if (prompts.empty()) throw std::invalid_argument("classify: no class prompts");
  if (config.n_mc < 1) throw std::invalid_argument("classify: n_mc must be >= 1");
  if (x.size() != model.latent_dim()) throw ShapeError("classify: query size does not match latent_dim");
  for (const auto& p : prompts) {
    if (p.size() != model.cond_dim()) throw ShapeError("classify: prompt length does not match cond_dim");
  }

  const std::size_t n = model.latent_dim();
  ErrorMatrix m{prompts.size(), config.n_mc, std::vector<double>(prompts.size() * config.n_mc)};
  if (config.shared_pairs) {
    Rng rng = derive_stream(config.seed, StreamTag::kClassifierPairs);
    const auto pairs = sample_pairs(config.n_mc, schedule.timesteps(), x.shape(), rng);
    std::vector<double> preds(prompts.size() * n);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Tensor xt = noise_latent(x, pairs[i].eps, schedule.alpha_bar(pairs[i].t));
      model.predict_conditions(xt.data(), pairs[i].t, prompts, preds);
      for (std::size_t c = 0; c < prompts.size(); ++c) {
        m.errors[c * m.pairs + i] = mse(pairs[i].eps.data(), std::span<const double>(preds).subspan(c * n, n));
      }
    }
  } else {
    std::vector<double> pred(n);
    for (std::size_t c = 0; c < prompts.size(); ++c) {
      Rng rng = derive_stream(config.seed, StreamTag::kClassifierPairs, c + 1);
      const auto pairs = sample_pairs(config.n_mc, schedule.timesteps(), x.shape(), rng);
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Tensor xt = noise_latent(x, pairs[i].eps, schedule.alpha_bar(pairs[i].t));
        model.predict(xt.data(), pairs[i].t, prompts[c].data(), pred);
        m.errors[c * m.pairs + i] = mse(pairs[i].eps.data(), pred);
      }
    }
  }
  if (!all_finite(std::span<const double>(m.errors))) throw NumericalError("classify: non-finite denoising error");
  return m;
}

ClassifierReport classify(const Tensor& x, std::span<const ConditionEmbedding> prompts,
                          const ClassifierConfig& config, const NoisePredictor& model,
                          const NoiseSchedule& schedule) {
  const ErrorMatrix m = error_matrix(x, prompts, config, model, schedule);
  ClassifierReport report;
  report.mean_errors = m.means();
  report.posterior = posterior(report.mean_errors);
  report.predicted = argmin_error(report.mean_errors);
  report.pairs_seed = config.seed;
  return report;
}

std::uint64_t query_seed(std::uint64_t seed, std::size_t query_index) {
  return mix_seed(seed, static_cast<std::uint64_t>(StreamTag::kQuery), query_index);
}

std::string report_json_line(std::size_t query_id, long long true_label, const ClassifierReport& report) {
  nlohmann::ordered_json j;
  j["query_id"] = query_id;
  if (true_label >= 0) {
    j["true_label"] = true_label;
  } else {
    j["true_label"] = nullptr;
  }
  j["predicted_label"] = report.predicted;
  j["errors"] = report.mean_errors;
  j["posterior"] = report.posterior;
  j["pairs_seed"] = report.pairs_seed;
  return j.dump();
}

}  // namespace gcpl
