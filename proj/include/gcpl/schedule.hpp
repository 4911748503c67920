#pragma once

#include <cstddef>
#include <vector>

#include "gcpl/rng.hpp"
#include "gcpl/tensor.hpp"

namespace gcpl {

/// Forward-process noise schedule over timesteps t = 1..T.
/// Tables are stored in double precision and indexed 1-based.
class NoiseSchedule {
 public:
  /// betas interpolated linearly from beta_start (t = 1) to beta_end (t = T).
  static NoiseSchedule linear(int timesteps, double beta_start, double beta_end);
  static NoiseSchedule from_betas(std::vector<double> betas);

  int timesteps() const noexcept { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(index(t)); }
  double alpha(int t) const { return alphas_.at(index(t)); }
  double alpha_bar(int t) const { return alpha_bars_.at(index(t)); }

  const std::vector<double>& betas() const noexcept { return betas_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }

 private:
  explicit NoiseSchedule(std::vector<double> betas);
  std::size_t index(int t) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

struct NoisedSample {
  Tensor x0;
  Tensor eps;
  int t = 0;
  Tensor xt;
};

/// x_t = sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps for an explicit alpha_bar in [0, 1].
Tensor noise_latent(const Tensor& x0, const Tensor& eps, double alpha_bar);

NoisedSample add_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& schedule);

struct TimestepNoisePair {
  int t = 1;
  Tensor eps;
};

/// n draws of t ~ U{1..T} and eps ~ N(0, I) of the given shape. Each pair draws t first.
std::vector<TimestepNoisePair> sample_pairs(std::size_t n, int timesteps, const Shape& shape, Rng& rng);

}  // namespace gcpl
