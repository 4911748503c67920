#include "gcpl/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gcpl/errors.hpp"

namespace gcpl {

NoiseSchedule NoiseSchedule::linear(int timesteps, double beta_start, double beta_end) {
  if (timesteps < 1) throw std::invalid_argument("noise schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("noise schedule needs 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(timesteps));
  for (int i = 0; i < timesteps; ++i) {
    const double frac = timesteps == 1 ? 0.0 : static_cast<double>(i) / (timesteps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("noise schedule needs T >= 1");
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("every beta must lie in (0, 1)");
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  alphas_.reserve(betas_.size());
  alpha_bars_.reserve(betas_.size());
  double running = 1.0;
  for (double b : betas_) {
    alphas_.push_back(1.0 - b);
    running *= 1.0 - b;
    alpha_bars_.push_back(running);
  }
}

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > timesteps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " + std::to_string(timesteps()) +
                            "]");
  }
  return static_cast<std::size_t>(t - 1);
}

Tensor noise_latent(const Tensor& x0, const Tensor& eps, double alpha_bar) {
  if (x0.shape() != eps.shape()) {
    throw ShapeError("add_noise: latent " + shape_string(x0.shape()) + " vs noise " + shape_string(eps.shape()));
  }
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw std::invalid_argument("alpha_bar must lie in [0, 1]");
  const double signal = std::sqrt(alpha_bar);
  const double noise = std::sqrt(1.0 - alpha_bar);
  Tensor xt(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    xt[i] = static_cast<float>(signal * x0[i] + noise * eps[i]);
  }
  return xt;
}

NoisedSample add_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& schedule) {
  const double ab = schedule.alpha_bar(t);
  return NoisedSample{x0, eps, t, noise_latent(x0, eps, ab)};
}

std::vector<TimestepNoisePair> sample_pairs(std::size_t n, int timesteps, const Shape& shape, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample_pairs: n must be at least 1");
  if (timesteps < 1) throw std::invalid_argument("sample_pairs: T must be at least 1");
  std::vector<TimestepNoisePair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int t = uniform_int(rng, 1, timesteps);
    pairs.push_back({t, standard_normal(shape, rng)});
  }
  return pairs;
}

}  // namespace gcpl
