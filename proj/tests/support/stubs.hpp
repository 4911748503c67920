#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "gcpl/denoiser.hpp"
#include "gcpl/rng.hpp"

namespace gcpl::testing {

// eps_hat = A x_t + E c + b, independent of t. Lets the GCPL optimum be solved
// in closed form.
class LinearPredictor final : public NoisePredictor {
 public:
  LinearPredictor(std::size_t latent, std::size_t cond, int timesteps)
      : latent_(latent), cond_(cond), timesteps_(timesteps), a(latent * latent, 0.0), e(latent * cond, 0.0),
        b(latent, 0.0) {}

  static LinearPredictor random(std::size_t latent, std::size_t cond, int timesteps, Rng& rng) {
    LinearPredictor p(latent, cond, timesteps);
    for (auto& v : p.a) v = 0.1 * standard_normal(rng);
    for (std::size_t i = 0; i < latent; ++i) {
      for (std::size_t j = 0; j < cond; ++j) p.e[i * cond + j] = (i == j ? 1.0 : 0.0) + 0.3 * standard_normal(rng);
    }
    for (auto& v : p.b) v = 0.2 * standard_normal(rng);
    return p;
  }

  std::size_t latent_dim() const override { return latent_; }
  std::size_t cond_dim() const override { return cond_; }
  int timesteps() const override { return timesteps_; }
  bool frozen() const override { return true; }

  void predict(std::span<const float> xt, int, std::span<const float> c, std::span<double> out) const override {
    for (std::size_t i = 0; i < latent_; ++i) {
      double acc = b[i];
      for (std::size_t j = 0; j < latent_; ++j) acc += a[i * latent_ + j] * xt[j];
      for (std::size_t j = 0; j < cond_; ++j) acc += e[i * cond_ + j] * c[j];
      out[i] = acc;
    }
  }

  void predict_and_backprop(std::span<const float> xt, int t, std::span<const float> c, std::span<double> pred,
                            const UpstreamFn& upstream, std::span<double> grad_cond) const override {
    predict(xt, t, c, pred);
    std::vector<double> up(latent_);
    upstream(pred, up);
    for (std::size_t j = 0; j < cond_; ++j) {
      for (std::size_t i = 0; i < latent_; ++i) grad_cond[j] += e[i * cond_ + j] * up[i];
    }
  }

 private:
  std::size_t latent_, cond_;
  int timesteps_;

 public:
  std::vector<double> a;  // latent x latent, row-major
  std::vector<double> e;  // latent x cond
  std::vector<double> b;
};

// Always predicts zero noise.
class ZeroPredictor final : public NoisePredictor {
 public:
  ZeroPredictor(std::size_t latent, std::size_t cond, int timesteps)
      : latent_(latent), cond_(cond), timesteps_(timesteps) {}
  std::size_t latent_dim() const override { return latent_; }
  std::size_t cond_dim() const override { return cond_; }
  int timesteps() const override { return timesteps_; }
  bool frozen() const override { return true; }
  void predict(std::span<const float>, int, std::span<const float>, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  void predict_and_backprop(std::span<const float> xt, int t, std::span<const float> c, std::span<double> pred,
                            const UpstreamFn& upstream, std::span<double>) const override {
    predict(xt, t, c, pred);
    std::vector<double> up(latent_);
    upstream(pred, up);
  }

 private:
  std::size_t latent_, cond_;
  int timesteps_;
};

// Treats the condition as the clean latent and inverts the forward process:
// with c = x0 the prediction is the exact noise.
class PrototypeOracle final : public NoisePredictor {
 public:
  PrototypeOracle(std::size_t dim, const NoiseSchedule& schedule) : dim_(dim), schedule_(schedule) {}
  std::size_t latent_dim() const override { return dim_; }
  std::size_t cond_dim() const override { return dim_; }
  int timesteps() const override { return schedule_.timesteps(); }
  bool frozen() const override { return true; }
  void predict(std::span<const float> xt, int t, std::span<const float> c, std::span<double> out) const override {
    const double ab = schedule_.alpha_bar(t);
    for (std::size_t i = 0; i < dim_; ++i) {
      out[i] = (static_cast<double>(xt[i]) - std::sqrt(ab) * c[i]) / std::sqrt(1.0 - ab);
    }
  }
  void predict_and_backprop(std::span<const float> xt, int t, std::span<const float> c, std::span<double> pred,
                            const UpstreamFn& upstream, std::span<double> grad_cond) const override {
    predict(xt, t, c, pred);
    std::vector<double> up(dim_);
    upstream(pred, up);
    const double ab = schedule_.alpha_bar(t);
    for (std::size_t i = 0; i < dim_; ++i) grad_cond[i] += -std::sqrt(ab) / std::sqrt(1.0 - ab) * up[i];
  }

 private:
  std::size_t dim_;
  const NoiseSchedule& schedule_;
};

}  // namespace gcpl::testing
