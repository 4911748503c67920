#include "gcpl/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "gcpl/binary_io.hpp"
#include "gcpl/errors.hpp"

namespace gcpl {

namespace {

enum ParamIndex : std::size_t { kW1 = 0, kB1, kW2, kB2, kW3, kB3, kParamCount };

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

// out[i] += sum_j w[i, j] * x[j] for a row-major w with `stride` columns,
// reading only columns [col0, col0 + x.size()).
void gemv_add(const float* w, std::size_t rows, std::size_t stride, std::size_t col0, const double* x,
              std::size_t n, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const float* row = w + i * stride + col0;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] += acc;
  }
}

// out[j] += sum_i w[i, col0 + j] * g[i]
void gemv_transpose_add(const float* w, std::size_t rows, std::size_t stride, std::size_t col0, const double* g,
                        std::size_t n, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const float* row = w + i * stride + col0;
    const double gi = g[i];
    for (std::size_t j = 0; j < n; ++j) out[j] += row[j] * gi;
  }
}

void outer_add(const double* g, std::size_t rows, const double* x, std::size_t cols, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double gi = g[i];
    double* row = out + i * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += gi * x[j];
  }
}

}  // namespace

std::vector<double> time_embedding(int t, std::size_t dim, int timesteps) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time embedding dimension must be even and >= 2");
  if (timesteps < 1) throw std::invalid_argument("time embedding needs T >= 1");
  const std::size_t half = dim / 2;
  std::vector<double> emb(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double exponent = half == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(half - 1);
    const double freq = std::pow(static_cast<double>(timesteps), -exponent);
    const double angle = t * freq;
    emb[k] = std::sin(angle);
    emb[half + k] = std::cos(angle);
  }
  return emb;
}

void NoisePredictor::predict_conditions(std::span<const float> xt, int t, std::span<const Tensor> conds,
                                        std::span<double> out) const {
  const std::size_t n = latent_dim();
  if (out.size() != conds.size() * n) throw ShapeError("predict_conditions: output buffer size mismatch");
  for (std::size_t k = 0; k < conds.size(); ++k) predict(xt, t, conds[k].data(), out.subspan(k * n, n));
}

void DenoiserArch::validate() const {
  if (latent_dim == 0 || cond_dim == 0 || hidden_dim == 0) {
    throw std::invalid_argument("denoiser dimensions must be positive");
  }
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
    throw std::invalid_argument("time_embed_dim must be even and >= 2");
  }
  if (timesteps < 1) throw std::invalid_argument("denoiser timesteps must be >= 1");
}

const std::vector<std::string>& DenoiserModel::parameter_names() {
  static const std::vector<std::string> names{"w1", "b1", "w2", "b2", "w3", "b3"};
  return names;
}

DenoiserModel::DenoiserModel(DenoiserArch arch) : arch_(arch) {
  arch_.validate();
  const std::size_t h = arch_.hidden_dim;
  params_.emplace_back(Shape{h, arch_.input_dim()});
  params_.emplace_back(Shape{h});
  params_.emplace_back(Shape{h, h});
  params_.emplace_back(Shape{h});
  params_.emplace_back(Shape{arch_.latent_dim, h});
  params_.emplace_back(Shape{arch_.latent_dim});
}

DenoiserModel DenoiserModel::initialized(DenoiserArch arch, Rng& rng) {
  DenoiserModel model(arch);
  const std::size_t fan_in[] = {arch.input_dim(), arch.input_dim(), arch.hidden_dim,
                                arch.hidden_dim,  arch.hidden_dim,  arch.hidden_dim};
  for (std::size_t p = 0; p < kParamCount; ++p) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in[p]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : model.params_[p].data()) v = static_cast<float>(dist(rng));
  }
  return model;
}

const Tensor& DenoiserModel::parameter(const std::string& name) const {
  const auto& names = parameter_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("unknown denoiser parameter '" + name + "'");
  return params_[static_cast<std::size_t>(it - names.begin())];
}

ParameterRefs DenoiserModel::mutable_parameters() {
  if (frozen_) throw ContractError("denoiser is frozen; its parameters cannot be modified");
  ParameterRefs refs;
  for (std::size_t p = 0; p < kParamCount; ++p) refs.emplace_back(parameter_names()[p], &params_[p]);
  return refs;
}

struct DenoiserModel::Activations {
  std::vector<double> input, a1, h1, a2, h2;
};

void DenoiserModel::check_inputs(std::span<const float> xt, int t, std::span<const float> cond) const {
  if (xt.size() != arch_.latent_dim) {
    throw ShapeError("denoiser: x_t has " + std::to_string(xt.size()) + " values, expected " +
                     std::to_string(arch_.latent_dim));
  }
  if (cond.size() != arch_.cond_dim) {
    throw ShapeError("denoiser: condition has " + std::to_string(cond.size()) + " values, expected " +
                     std::to_string(arch_.cond_dim));
  }
  if (t < 1 || t > arch_.timesteps) {
    throw std::out_of_range("denoiser: timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(arch_.timesteps) + "]");
  }
}

void DenoiserModel::forward(std::span<const float> xt, int t, std::span<const float> cond,
                            Activations& act) const {
  const std::size_t h = arch_.hidden_dim;
  const std::size_t in = arch_.input_dim();
  act.input.resize(in);
  std::copy(xt.begin(), xt.end(), act.input.begin());
  const auto temb = time_embedding(t, arch_.time_embed_dim, arch_.timesteps);
  std::copy(temb.begin(), temb.end(), act.input.begin() + static_cast<std::ptrdiff_t>(arch_.latent_dim));
  std::copy(cond.begin(), cond.end(),
            act.input.begin() + static_cast<std::ptrdiff_t>(arch_.latent_dim + arch_.time_embed_dim));

  act.a1.assign(params_[kB1].values().begin(), params_[kB1].values().end());
  gemv_add(params_[kW1].data().data(), h, in, 0, act.input.data(), in, act.a1.data());
  act.h1.resize(h);
  for (std::size_t i = 0; i < h; ++i) act.h1[i] = silu(act.a1[i]);

  act.a2.assign(params_[kB2].values().begin(), params_[kB2].values().end());
  gemv_add(params_[kW2].data().data(), h, h, 0, act.h1.data(), h, act.a2.data());
  act.h2.resize(h);
  for (std::size_t i = 0; i < h; ++i) act.h2[i] = silu(act.a2[i]);
}

void DenoiserModel::predict(std::span<const float> xt, int t, std::span<const float> cond,
                            std::span<double> out) const {
  check_inputs(xt, t, cond);
  if (out.size() != arch_.latent_dim) throw ShapeError("denoiser: output buffer size mismatch");
  Activations act;
  forward(xt, t, cond, act);
  std::copy(params_[kB3].values().begin(), params_[kB3].values().end(), out.begin());
  gemv_add(params_[kW3].data().data(), arch_.latent_dim, arch_.hidden_dim, 0, act.h2.data(), arch_.hidden_dim,
           out.data());
}

void DenoiserModel::predict_conditions(std::span<const float> xt, int t, std::span<const Tensor> conds,
                                       std::span<double> out) const {
  const std::size_t n = arch_.latent_dim;
  const std::size_t h = arch_.hidden_dim;
  const std::size_t in = arch_.input_dim();
  const std::size_t cond_col = arch_.latent_dim + arch_.time_embed_dim;
  if (out.size() != conds.size() * n) throw ShapeError("predict_conditions: output buffer size mismatch");
  if (conds.empty()) return;
  check_inputs(xt, t, conds[0].data());

  // The x_t and time-embedding columns of the first layer are shared by every condition.
  std::vector<double> shared_input(cond_col);
  std::copy(xt.begin(), xt.end(), shared_input.begin());
  const auto temb = time_embedding(t, arch_.time_embed_dim, arch_.timesteps);
  std::copy(temb.begin(), temb.end(), shared_input.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<double> shared(params_[kB1].values().begin(), params_[kB1].values().end());
  gemv_add(params_[kW1].data().data(), h, in, 0, shared_input.data(), cond_col, shared.data());

  std::vector<double> cond(arch_.cond_dim), h1(h), h2(h);
  for (std::size_t k = 0; k < conds.size(); ++k) {
    if (conds[k].size() != arch_.cond_dim) throw ShapeError("predict_conditions: condition size mismatch");
    std::copy(conds[k].values().begin(), conds[k].values().end(), cond.begin());
    std::copy(shared.begin(), shared.end(), h1.begin());
    gemv_add(params_[kW1].data().data(), h, in, cond_col, cond.data(), arch_.cond_dim, h1.data());
    for (auto& v : h1) v = silu(v);
    std::copy(params_[kB2].values().begin(), params_[kB2].values().end(), h2.begin());
    gemv_add(params_[kW2].data().data(), h, h, 0, h1.data(), h, h2.data());
    for (auto& v : h2) v = silu(v);
    double* o = out.data() + k * n;
    std::copy(params_[kB3].values().begin(), params_[kB3].values().end(), o);
    gemv_add(params_[kW3].data().data(), n, h, 0, h2.data(), h, o);
  }
}

void DenoiserModel::backward_from(const Activations& act, std::span<const double> upstream,
                                  std::span<double> grad_cond, std::span<std::vector<double>> param_grads) const {
  const std::size_t n = arch_.latent_dim;
  const std::size_t h = arch_.hidden_dim;
  const std::size_t in = arch_.input_dim();
  const std::size_t cond_col = arch_.latent_dim + arch_.time_embed_dim;
  const bool with_params = !param_grads.empty();

  std::vector<double> g_h2(h, 0.0);
  gemv_transpose_add(params_[kW3].data().data(), n, h, 0, upstream.data(), h, g_h2.data());
  std::vector<double> g_a2(h);
  for (std::size_t i = 0; i < h; ++i) g_a2[i] = g_h2[i] * silu_grad(act.a2[i]);

  std::vector<double> g_h1(h, 0.0);
  gemv_transpose_add(params_[kW2].data().data(), h, h, 0, g_a2.data(), h, g_h1.data());
  std::vector<double> g_a1(h);
  for (std::size_t i = 0; i < h; ++i) g_a1[i] = g_h1[i] * silu_grad(act.a1[i]);

  gemv_transpose_add(params_[kW1].data().data(), h, in, cond_col, g_a1.data(), arch_.cond_dim, grad_cond.data());

  if (with_params) {
    outer_add(upstream.data(), n, act.h2.data(), h, param_grads[kW3].data());
    for (std::size_t i = 0; i < n; ++i) param_grads[kB3][i] += upstream[i];
    outer_add(g_a2.data(), h, act.h1.data(), h, param_grads[kW2].data());
    for (std::size_t i = 0; i < h; ++i) param_grads[kB2][i] += g_a2[i];
    outer_add(g_a1.data(), h, act.input.data(), in, param_grads[kW1].data());
    for (std::size_t i = 0; i < h; ++i) param_grads[kB1][i] += g_a1[i];
  }
}

void DenoiserModel::predict_and_backprop(std::span<const float> xt, int t, std::span<const float> cond,
                                         std::span<double> prediction, const UpstreamFn& upstream_fn,
                                         std::span<double> grad_cond) const {
  check_inputs(xt, t, cond);
  const std::size_t n = arch_.latent_dim;
  if (prediction.size() != n || grad_cond.size() != arch_.cond_dim) {
    throw ShapeError("denoiser: buffer size mismatch");
  }
  Activations act;
  forward(xt, t, cond, act);
  std::copy(params_[kB3].values().begin(), params_[kB3].values().end(), prediction.begin());
  gemv_add(params_[kW3].data().data(), n, arch_.hidden_dim, 0, act.h2.data(), arch_.hidden_dim,
           prediction.data());
  std::vector<double> upstream(n, 0.0);
  upstream_fn(prediction, upstream);
  backward_from(act, upstream, grad_cond, {});
}

void DenoiserModel::backward(std::span<const float> xt, int t, std::span<const float> cond,
                             std::span<const double> upstream, std::span<double> grad_cond,
                             std::span<std::vector<double>> param_grads) const {
  check_inputs(xt, t, cond);
  if (upstream.size() != arch_.latent_dim || grad_cond.size() != arch_.cond_dim) {
    throw ShapeError("denoiser: buffer size mismatch");
  }
  if (!param_grads.empty()) {
    if (frozen_) throw ContractError("parameter gradients requested on a frozen denoiser");
    if (param_grads.size() != kParamCount) throw ShapeError("denoiser: parameter gradient buffer count mismatch");
    for (std::size_t p = 0; p < kParamCount; ++p) {
      if (param_grads[p].size() != params_[p].size()) throw ShapeError("denoiser: parameter gradient size mismatch");
    }
  }
  Activations act;
  forward(xt, t, cond, act);
  backward_from(act, upstream, grad_cond, param_grads);
}

Tensor predict_noise(const NoisePredictor& model, const Tensor& xt, int t, const ConditionEmbedding& c) {
  std::vector<double> out(model.latent_dim());
  model.predict(xt.data(), t, c.data(), out);
  if (!all_finite(std::span<const double>(out))) throw NumericalError("predict_noise: non-finite output");
  Tensor result(xt.shape());
  if (result.size() != out.size()) throw ShapeError("predict_noise: x_t shape does not match latent_dim");
  for (std::size_t i = 0; i < out.size(); ++i) result[i] = static_cast<float>(out[i]);
  return result;
}

GradientRecord predict_noise_backward(const DenoiserModel& model, const Tensor& xt, int t,
                                      const ConditionEmbedding& c, const Tensor& upstream, GradientScope scope) {
  if (upstream.size() != model.latent_dim()) throw ShapeError("predict_noise_backward: upstream size mismatch");
  bool with_params = false;
  switch (scope) {
    case GradientScope::kAuto:
      with_params = !model.frozen();
      break;
    case GradientScope::kConditionOnly:
      break;
    case GradientScope::kConditionAndParameters:
      if (model.frozen()) throw ContractError("parameter gradients requested on a frozen denoiser");
      with_params = true;
      break;
  }
  std::vector<double> up(upstream.values().begin(), upstream.values().end());
  std::vector<double> g_cond(model.cond_dim(), 0.0);
  std::vector<std::vector<double>> g_params;
  if (with_params) {
    for (const auto& p : model.parameters()) g_params.emplace_back(p.size(), 0.0);
  }
  model.backward(xt.data(), t, c.data(), up, g_cond, g_params);

  GradientRecord record;
  Tensor gc(c.shape());
  for (std::size_t i = 0; i < gc.size(); ++i) gc[i] = static_cast<float>(g_cond[i]);
  record.emplace("cond", std::move(gc));
  for (std::size_t p = 0; p < g_params.size(); ++p) {
    Tensor g(model.parameters()[p].shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(g_params[p][i]);
    record.emplace(DenoiserModel::parameter_names()[p], std::move(g));
  }
  return record;
}

namespace {

void check_training_inputs(const LabeledLatents& data, std::span<const ConditionEmbedding> conditions,
                           std::size_t latent_dim, std::size_t cond_dim) {
  if (data.size() == 0) throw std::invalid_argument("pretraining dataset is empty");
  if (data.labels.size() != data.size()) throw std::invalid_argument("dataset labels do not match latents");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] >= conditions.size()) {
      throw std::invalid_argument("sample " + std::to_string(i) + " has label " + std::to_string(data.labels[i]) +
                                  " without a condition");
    }
    if (data.latents[i].size() != latent_dim) throw ShapeError("dataset latent size does not match the model");
  }
  for (const auto& c : conditions) {
    if (c.size() != cond_dim) throw ShapeError("condition size does not match the model");
  }
}

}  // namespace

double denoising_loss(const NoisePredictor& model, const LabeledLatents& data,
                      std::span<const ConditionEmbedding> conditions, const NoiseSchedule& schedule,
                      std::size_t draws_per_sample, std::uint64_t seed) {
  check_training_inputs(data, conditions, model.latent_dim(), model.cond_dim());
  Rng rng(seed);
  std::vector<double> pred(model.latent_dim());
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t d = 0; d < draws_per_sample; ++d) {
      const int t = uniform_int(rng, 1, schedule.timesteps());
      const Tensor eps = standard_normal(data.latents[i].shape(), rng);
      const Tensor xt = noise_latent(data.latents[i], eps, schedule.alpha_bar(t));
      model.predict(xt.data(), t, conditions[data.labels[i]].data(), pred);
      total += mse(eps.data(), pred);
    }
  }
  return total / static_cast<double>(data.size() * draws_per_sample);
}

PretrainResult pretrain_backbone(const LabeledLatents& data, std::span<const ConditionEmbedding> true_conditions,
                                 const NoiseSchedule& schedule, const DenoiserArch& arch,
                                 const PretrainConfig& config) {
  arch.validate();
  check_training_inputs(data, true_conditions, arch.latent_dim, arch.cond_dim);
  if (arch.timesteps != schedule.timesteps()) throw std::invalid_argument("model and schedule disagree on T");
  if (config.batch_size == 0) throw std::invalid_argument("pretraining batch size must be >= 1");

  Rng init_rng = derive_stream(config.seed, StreamTag::kModelInit);
  DenoiserModel model = DenoiserModel::initialized(arch, init_rng);
  AdamW optimizer(config.optimizer);

  const std::uint64_t eval_seed = mix_seed(config.seed, 0xE7A1);
  PretrainResult result{model, {}, 0.0, 0.0};
  result.initial_loss = denoising_loss(model, data, true_conditions, schedule, 1, eval_seed);

  const std::size_t n = arch.latent_dim;
  std::vector<std::vector<double>> grads;
  for (const auto& p : model.parameters()) grads.emplace_back(p.size(), 0.0);
  std::vector<double> pred(n), upstream(n), g_cond(arch.cond_dim);
  double window_loss = 0.0;
  std::size_t window_count = 0;

  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng = derive_stream(config.seed, StreamTag::kPretrainBatch, step);
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t idx = uniform_index(rng, data.size());
      const int t = uniform_int(rng, 1, schedule.timesteps());
      const Tensor& x0 = data.latents[idx];
      const Tensor eps = standard_normal(x0.shape(), rng);
      const Tensor xt = noise_latent(x0, eps, schedule.alpha_bar(t));
      const auto& cond = true_conditions[data.labels[idx]];
      model.predict(xt.data(), t, cond.data(), pred);
      const double scale = 2.0 / static_cast<double>(n * config.batch_size);
      for (std::size_t i = 0; i < n; ++i) upstream[i] = scale * (pred[i] - eps[i]);
      batch_loss += mse(eps.data(), pred);
      model.backward(xt.data(), t, cond.data(), upstream, g_cond, grads);
    }
    batch_loss /= static_cast<double>(config.batch_size);
    if (!std::isfinite(batch_loss)) {
      throw NumericalError("pretraining diverged: non-finite loss at step " + std::to_string(step));
    }
    GradientRecord record;
    for (std::size_t p = 0; p < grads.size(); ++p) {
      Tensor g(model.parameters()[p].shape());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(grads[p][i]);
      record.emplace(DenoiserModel::parameter_names()[p], std::move(g));
    }
    optimizer.step(model.mutable_parameters(), record);

    window_loss += batch_loss;
    ++window_count;
    if (config.log_every > 0 && ((step + 1) % config.log_every == 0 || step + 1 == config.steps)) {
      result.log.push_back({step + 1, window_loss / static_cast<double>(window_count)});
      window_loss = 0.0;
      window_count = 0;
    }
  }

  model.freeze();
  result.final_loss = denoising_loss(model, data, true_conditions, schedule, 1, eval_seed);
  result.model = std::move(model);
  return result;
}

Tensor codec_roundtrip(const LatentCodec& codec, const Tensor& x) { return codec.decode(codec.encode(x)); }

void save_model(const DenoiserModel& model, std::ostream& os) {
  const auto& a = model.arch();
  binio::write_magic(os, kModelMagic);
  binio::write_u32(os, kModelFormatVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(a.latent_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(a.time_embed_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(a.cond_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(a.hidden_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(DenoiserArch::kHiddenLayers));
  binio::write_u32(os, static_cast<std::uint32_t>(a.timesteps));
  binio::write_u32(os, model.frozen() ? 1u : 0u);
  for (const auto& p : model.parameters()) binio::write_f32s(os, p.data());
}

DenoiserModel load_model(std::istream& is) {
  binio::expect_magic(is, kModelMagic, "denoiser model");
  const std::uint32_t version = binio::read_u32(is);
  if (version != kModelFormatVersion) {
    throw FormatError("denoiser model format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  }
  DenoiserArch arch;
  arch.latent_dim = binio::read_u32(is);
  arch.time_embed_dim = binio::read_u32(is);
  arch.cond_dim = binio::read_u32(is);
  arch.hidden_dim = binio::read_u32(is);
  const std::uint32_t layers = binio::read_u32(is);
  arch.timesteps = static_cast<int>(binio::read_u32(is));
  const std::uint32_t flags = binio::read_u32(is);
  if (layers != DenoiserArch::kHiddenLayers) {
    throw FormatError("denoiser model has " + std::to_string(layers) + " hidden layers; only 2 are supported");
  }
  if (flags > 1u) throw FormatError("denoiser model has unknown flags");
  constexpr std::size_t kMaxDim = 1u << 16;
  if (arch.latent_dim > kMaxDim || arch.cond_dim > kMaxDim || arch.hidden_dim > kMaxDim ||
      arch.time_embed_dim > kMaxDim) {
    throw FormatError("denoiser model dimensions are implausibly large");
  }
  try {
    arch.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid denoiser architecture: ") + e.what());
  }
  DenoiserModel model(arch);
  auto refs = model.mutable_parameters();
  for (auto& [name, tensor] : refs) binio::read_f32s(is, tensor->data());
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after denoiser parameters");
  if (flags & 1u) model.freeze();
  return model;
}

void save_model(const DenoiserModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  save_model(model, out);
}

DenoiserModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  return load_model(in);
}

}  // namespace gcpl
