#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gcpl/dataset.hpp"
#include "gcpl/optim.hpp"
#include "gcpl/schedule.hpp"
#include "gcpl/tensor.hpp"

namespace gcpl {

/// Conditioning vector fed to the noise predictor. At this scale the
/// learnable class prompt is used directly as the conditioning embedding.
using ConditionEmbedding = Tensor;

/// Sinusoidal embedding of an integer timestep: dim/2 sine and dim/2 cosine
/// channels with angular frequencies T^(-k/(dim/2 - 1)), k = 0..dim/2-1,
/// i.e. geometrically spaced from 1 down to 1/T. Requires an even dim >= 2.
std::vector<double> time_embedding(int t, std::size_t dim, int timesteps);

/// Backend interface for eps_theta(x_t, t, c). The built-in MLP implements it;
/// an adapter for an external pretrained backbone would too.
class NoisePredictor {
 public:
  /// Receives the prediction and writes d(loss)/d(prediction).
  using UpstreamFn = std::function<void(std::span<const double> prediction, std::span<double> upstream)>;

  virtual ~NoisePredictor() = default;

  virtual std::size_t latent_dim() const = 0;
  virtual std::size_t cond_dim() const = 0;
  virtual int timesteps() const = 0;
  virtual bool frozen() const = 0;

  virtual void predict(std::span<const float> xt, int t, std::span<const float> cond,
                       std::span<double> out) const = 0;

  /// One forward pass followed by a backward pass; adds d(loss)/d(cond) into grad_cond.
  virtual void predict_and_backprop(std::span<const float> xt, int t, std::span<const float> cond,
                                    std::span<double> prediction, const UpstreamFn& upstream,
                                    std::span<double> grad_cond) const = 0;

  /// Predictions for several conditions sharing (x_t, t); out is row-major conds x latent_dim.
  virtual void predict_conditions(std::span<const float> xt, int t, std::span<const Tensor> conds,
                                  std::span<double> out) const;
};

struct DenoiserArch {
  static constexpr std::size_t kHiddenLayers = 2;

  std::size_t latent_dim = 16;
  std::size_t time_embed_dim = 16;
  std::size_t cond_dim = 16;
  std::size_t hidden_dim = 128;
  int timesteps = 1000;

  std::size_t input_dim() const noexcept { return latent_dim + time_embed_dim + cond_dim; }
  void validate() const;
  bool operator==(const DenoiserArch&) const = default;
};

/// eps_theta: input concat(x_t, time_embedding(t), c) -> SiLU(W1 . + b1)
/// -> SiLU(W2 . + b2) -> W3 . + b3. Forward and backward run in double
/// precision over float32 parameters.
class DenoiserModel final : public NoisePredictor {
 public:
  /// Parameter ids in declaration (and file) order.
  static const std::vector<std::string>& parameter_names();

  /// All-zero parameters, not frozen.
  explicit DenoiserModel(DenoiserArch arch);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static DenoiserModel initialized(DenoiserArch arch, Rng& rng);

  const DenoiserArch& arch() const noexcept { return arch_; }
  std::size_t latent_dim() const override { return arch_.latent_dim; }
  std::size_t cond_dim() const override { return arch_.cond_dim; }
  int timesteps() const override { return arch_.timesteps; }
  bool frozen() const override { return frozen_; }
  void freeze() noexcept { frozen_ = true; }

  const Tensor& parameter(const std::string& name) const;
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  /// Throws ContractError on a frozen model.
  ParameterRefs mutable_parameters();

  void predict(std::span<const float> xt, int t, std::span<const float> cond, std::span<double> out) const override;
  void predict_and_backprop(std::span<const float> xt, int t, std::span<const float> cond,
                            std::span<double> prediction, const UpstreamFn& upstream,
                            std::span<double> grad_cond) const override;
  void predict_conditions(std::span<const float> xt, int t, std::span<const Tensor> conds,
                          std::span<double> out) const override;

  /// Backward pass for d<upstream, prediction>. Adds into the given double
  /// buffers (same layout as parameters()) when param_grads is non-empty.
  void backward(std::span<const float> xt, int t, std::span<const float> cond, std::span<const double> upstream,
                std::span<double> grad_cond, std::span<std::vector<double>> param_grads) const;

 private:
  struct Activations;

  void check_inputs(std::span<const float> xt, int t, std::span<const float> cond) const;
  void forward(std::span<const float> xt, int t, std::span<const float> cond, Activations& act) const;
  void backward_from(const Activations& act, std::span<const double> upstream, std::span<double> grad_cond,
                     std::span<std::vector<double>> param_grads) const;

  DenoiserArch arch_;
  std::vector<Tensor> params_;
  bool frozen_ = false;
};

Tensor predict_noise(const NoisePredictor& model, const Tensor& xt, int t, const ConditionEmbedding& c);

enum class GradientScope {
  kAuto,                    // condition always, parameters only if the model is not frozen
  kConditionOnly,
  kConditionAndParameters,  // rejected on a frozen model
};

/// Gradient of <upstream, predict_noise(model, xt, t, c)>. Entry "cond" is always
/// present; parameter entries use the ids from DenoiserModel::parameter_names().
GradientRecord predict_noise_backward(const DenoiserModel& model, const Tensor& xt, int t,
                                      const ConditionEmbedding& c, const Tensor& upstream,
                                      GradientScope scope = GradientScope::kAuto);

struct PretrainConfig {
  std::size_t steps = 5000;
  std::size_t batch_size = 32;
  AdamWConfig optimizer{};
  std::size_t log_every = 100;
  std::uint64_t seed = 0;
};

struct LossSample {
  std::size_t step = 0;  // number of optimizer steps completed
  double loss = 0.0;     // mean training loss over the window ending at `step`
};

struct PretrainResult {
  DenoiserModel model;
  std::vector<LossSample> log;
  // Denoising loss on one fixed evaluation batch before and after training.
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Trains eps_theta to predict the added noise from (x_t, t, true condition of
/// the sample's class), then freezes it.
PretrainResult pretrain_backbone(const LabeledLatents& data, std::span<const ConditionEmbedding> true_conditions,
                                 const NoiseSchedule& schedule, const DenoiserArch& arch,
                                 const PretrainConfig& config);

/// Mean denoising MSE with each sample conditioned on conditions[label];
/// the (t, eps) draws depend only on `seed`.
double denoising_loss(const NoisePredictor& model, const LabeledLatents& data,
                      std::span<const ConditionEmbedding> conditions, const NoiseSchedule& schedule,
                      std::size_t draws_per_sample, std::uint64_t seed);

/// Stand-in for the image autoencoder: maps images to latents and back.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual Tensor encode(const Tensor& image) const = 0;
  virtual Tensor decode(const Tensor& latent) const = 0;
};

class IdentityCodec final : public LatentCodec {
 public:
  Tensor encode(const Tensor& image) const override { return image; }
  Tensor decode(const Tensor& latent) const override { return latent; }
};

Tensor codec_roundtrip(const LatentCodec& codec, const Tensor& x);

// Model file: "GCPLDNZ", u32 version, u32 latent_dim, time_embed_dim, cond_dim,
// hidden_dim, hidden layer count, timesteps, u32 flags (bit 0 = frozen),
// then every parameter tensor as little-endian float32 in declaration order.
inline constexpr char kModelMagic[] = "GCPLDNZ";
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const DenoiserModel& model, std::ostream& os);
DenoiserModel load_model(std::istream& is);
void save_model(const DenoiserModel& model, const std::filesystem::path& path);
DenoiserModel load_model(const std::filesystem::path& path);

}  // namespace gcpl
