#include "gcpl/prompt_learning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "gcpl/binary_io.hpp"
#include "gcpl/errors.hpp"

namespace gcpl {

namespace {

void require_frozen(const NoisePredictor& model, const char* where) {
  if (!model.frozen()) throw ContractError(std::string(where) + ": the backbone must be frozen");
}

Tensor to_tensor(const std::vector<double>& values, const Shape& shape) {
  Tensor out(shape);
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i]);
  return out;
}

DrawnSample draw_sample(std::size_t class_index, const Tensor& x0, int timesteps, Rng& rng) {
  const int t = uniform_int(rng, 1, timesteps);
  return DrawnSample{class_index, x0, t, standard_normal(x0.shape(), rng)};
}

// Picks one exemplar and its noise draw for a support set.
DrawnSample draw_exemplar(std::size_t class_index, std::span<const Tensor> support, int timesteps, Rng& rng) {
  const std::size_t idx = uniform_index(rng, support.size());
  return draw_sample(class_index, support[idx], timesteps, rng);
}

AdamWConfig with_lr(AdamWConfig cfg, double lr) {
  cfg.lr = lr;
  return cfg;
}

}  // namespace

ConditionEmbedding mean_embedding(std::span<const ConditionEmbedding> embeddings) {
  if (embeddings.empty()) throw std::invalid_argument("mean_embedding: no embeddings");
  std::vector<double> acc(embeddings[0].size(), 0.0);
  for (const auto& e : embeddings) {
    if (e.size() != acc.size()) throw ShapeError("mean_embedding: embeddings differ in length");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += e[i];
  }
  for (auto& v : acc) v /= static_cast<double>(embeddings.size());
  return to_tensor(acc, embeddings[0].shape());
}

ConditionEmbedding initial_prompt(const PromptInitializer& init, std::size_t cond_dim, std::size_t class_id,
                                  std::uint64_t seed) {
  Rng rng = derive_stream(seed, StreamTag::kPromptInit, class_id);
  if (init.mode == PromptInit::kRandomNormal) return standard_normal({cond_dim}, rng);
  if (init.concept_embedding.size() != cond_dim) {
    throw ShapeError("prompt initializer has " + std::to_string(init.concept_embedding.size()) +
                     " values, backbone expects " + std::to_string(cond_dim));
  }
  Tensor out = init.concept_embedding;
  if (init.sigma > 0.0) {
    for (auto& v : out.data()) v = static_cast<float>(v + init.sigma * standard_normal(rng));
  }
  return out;
}

PromptLoss gcpl_loss(std::span<const DrawnSample> samples, const ConditionEmbedding& prompt,
                     const NoisePredictor& model, const NoiseSchedule& schedule) {
  require_frozen(model, "gcpl_loss");
  if (samples.empty()) throw std::invalid_argument("gcpl_loss: no exemplars");
  if (prompt.size() != model.cond_dim()) throw ShapeError("gcpl_loss: prompt length does not match cond_dim");
  const std::size_t n = model.latent_dim();
  const double scale = 2.0 / static_cast<double>(n * samples.size());
  std::vector<double> pred(n), grad(prompt.size(), 0.0);
  double loss = 0.0;
  for (const auto& s : samples) {
    if (s.x0.size() != n || s.eps.size() != n) throw ShapeError("gcpl_loss: exemplar size does not match latent_dim");
    const Tensor xt = noise_latent(s.x0, s.eps, schedule.alpha_bar(s.t));
    model.predict_and_backprop(
        xt.data(), s.t, prompt.data(), pred,
        [&](std::span<const double> p, std::span<double> up) {
          for (std::size_t i = 0; i < n; ++i) up[i] = scale * (p[i] - s.eps[i]);
        },
        grad);
    loss += mse(s.eps.data(), pred);
  }
  return {loss / static_cast<double>(samples.size()), to_tensor(grad, prompt.shape())};
}

PromptLoss gcpl_loss(std::span<const Tensor> exemplars, const ConditionEmbedding& prompt,
                     const NoisePredictor& model, const NoiseSchedule& schedule, Rng& rng) {
  std::vector<DrawnSample> samples;
  samples.reserve(exemplars.size());
  for (const auto& x : exemplars) samples.push_back(draw_sample(0, x, schedule.timesteps(), rng));
  return gcpl_loss(samples, prompt, model, schedule);
}

ContrastiveLoss comple_loss(std::span<const DrawnSample> samples, std::span<const ConditionEmbedding> prompts,
                            double lambda, const NoisePredictor& model, const NoiseSchedule& schedule,
                            std::optional<double> negative_margin) {
  require_frozen(model, "comple_loss");
  if (samples.empty()) throw std::invalid_argument("comple_loss: empty batch");
  if (!(lambda >= 0.0)) throw std::invalid_argument("comple_loss: lambda must be >= 0");
  const std::size_t n = model.latent_dim();
  const std::size_t batch = samples.size();
  for (const auto& s : samples) {
    if (s.class_index >= prompts.size()) {
      throw std::invalid_argument("comple_loss: unknown class label " + std::to_string(s.class_index));
    }
    if (s.x0.size() != n || s.eps.size() != n) throw ShapeError("comple_loss: sample size does not match latent_dim");
  }
  for (const auto& p : prompts) {
    if (p.size() != model.cond_dim()) throw ShapeError("comple_loss: prompt length does not match cond_dim");
  }

  const double pos_scale = 2.0 / static_cast<double>(n * batch);
  const bool has_negative = batch > 1;
  const double pair_norm = has_negative ? 1.0 / static_cast<double>(batch * (batch - 1)) : 0.0;
  const double neg_scale = 2.0 * pair_norm / static_cast<double>(n);

  std::vector<std::vector<double>> grads(prompts.size(), std::vector<double>(model.cond_dim(), 0.0));
  std::vector<bool> touched(prompts.size(), false);
  std::vector<double> pred(n);
  double positive = 0.0;
  double negative = 0.0;

  for (std::size_t j = 0; j < batch; ++j) {
    const auto& s = samples[j];
    touched[s.class_index] = true;
    const Tensor xt = noise_latent(s.x0, s.eps, schedule.alpha_bar(s.t));
    model.predict_and_backprop(
        xt.data(), s.t, prompts[s.class_index].data(), pred,
        [&](std::span<const double> p, std::span<double> up) {
          for (std::size_t k = 0; k < n; ++k) up[k] = pos_scale * (p[k] - s.eps[k]);
          positive += mse(s.eps.data(), p);
          if (!has_negative) return;
          for (std::size_t i = 0; i < batch; ++i) {
            if (i == j || samples[i].class_index == s.class_index) continue;
            const double err = mse(samples[i].eps.data(), p);
            const bool capped = negative_margin && err > *negative_margin;
            negative += capped ? *negative_margin : err;
            if (capped || lambda == 0.0) continue;
            for (std::size_t k = 0; k < n; ++k) up[k] -= lambda * neg_scale * (p[k] - samples[i].eps[k]);
          }
        },
        grads[s.class_index]);
  }

  ContrastiveLoss out;
  out.positive = positive / static_cast<double>(batch);
  out.negative = negative * pair_norm;
  out.loss = out.positive - lambda * out.negative;
  out.touched = std::move(touched);
  for (std::size_t c = 0; c < prompts.size(); ++c) out.grads.push_back(to_tensor(grads[c], prompts[c].shape()));
  return out;
}

ContrastiveLoss comple_loss(std::span<const LabeledExemplar> batch, std::span<const ConditionEmbedding> prompts,
                            double lambda, const NoisePredictor& model, const NoiseSchedule& schedule, Rng& rng,
                            std::optional<double> negative_margin) {
  std::vector<DrawnSample> samples;
  samples.reserve(batch.size());
  for (const auto& b : batch) samples.push_back(draw_sample(b.class_index, b.x0, schedule.timesteps(), rng));
  return comple_loss(samples, prompts, lambda, model, schedule, negative_margin);
}

GCPLResult train_gcpl(std::span<const Tensor> support, std::size_t class_id, const std::string& class_name,
                      const PromptInitializer& init, const GCPLConfig& config, const NoisePredictor& model,
                      const NoiseSchedule& schedule) {
  require_frozen(model, "train_gcpl");
  if (support.empty()) throw std::invalid_argument("train_gcpl: support set is empty");
  if (config.epochs < 1) throw std::invalid_argument("train_gcpl: epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("train_gcpl: batch_size must be >= 1");

  GCPLResult result;
  result.prompt = ClassPrompt{class_id, class_name, initial_prompt(init, model.cond_dim(), class_id, config.seed),
                              init.word};
  result.losses.reserve(config.epochs);
  AdamW optimizer(with_lr(config.optimizer, config.lr));
  std::vector<DrawnSample> batch(config.batch_size);

  for (std::size_t step = 0; step < config.epochs; ++step) {
    Rng rng = derive_stream(config.seed, StreamTag::kPromptSample, class_id, step);
    for (auto& s : batch) s = draw_exemplar(0, support, schedule.timesteps(), rng);
    PromptLoss l = gcpl_loss(batch, result.prompt.embedding, model, schedule);
    if (!std::isfinite(l.loss)) {
      throw NumericalError("GCPL diverged: non-finite loss at step " + std::to_string(step) + " for class " +
                           std::to_string(class_id));
    }
    result.losses.push_back(l.loss);
    GradientRecord grads;
    grads.emplace("prompt", std::move(l.grad));
    optimizer.step({{"prompt", &result.prompt.embedding}}, grads);
  }
  return result;
}

CoMPLeResult train_comple(std::span<const std::vector<Tensor>> support_sets, std::span<const std::string> class_names,
                          const PromptInitializer& init, const CoMPLeConfig& config, const NoisePredictor& model,
                          const NoiseSchedule& schedule) {
  require_frozen(model, "train_comple");
  const std::size_t classes = support_sets.size();
  if (classes == 0) throw std::invalid_argument("train_comple: no classes");
  if (class_names.size() != classes) throw std::invalid_argument("train_comple: one name per class required");
  for (const auto& s : support_sets) {
    if (s.empty()) throw std::invalid_argument("train_comple: empty support set");
  }
  if (config.epochs < 1) throw std::invalid_argument("train_comple: epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("train_comple: batch_size must be >= 1");
  if (!(config.lambda >= 0.0)) throw std::invalid_argument("train_comple: lambda must be >= 0");

  CoMPLeResult result;
  for (std::size_t c = 0; c < classes; ++c) {
    result.prompts.push_back(
        ClassPrompt{c, class_names[c], initial_prompt(init, model.cond_dim(), c, config.seed), init.word});
  }
  std::vector<std::string> param_names;
  for (std::size_t c = 0; c < classes; ++c) param_names.push_back("prompt/" + std::to_string(c));

  AdamW optimizer(with_lr(config.optimizer, config.lr));
  const std::size_t batch = config.batch_size;
  std::vector<std::size_t> order(classes);
  std::vector<std::size_t> slots(batch);
  std::vector<DrawnSample> samples(batch);
  std::vector<ConditionEmbedding> current(classes);
  result.losses.reserve(config.epochs);

  for (std::size_t step = 0; step < config.epochs; ++step) {
    Rng compose = derive_stream(config.seed, StreamTag::kBatchComposition, 0, step);
    if (classes >= batch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t j = 0; j < batch; ++j) {
        const std::size_t pick = j + uniform_index(compose, classes - j);
        std::swap(order[j], order[pick]);
        slots[j] = order[j];
      }
    } else {
      for (std::size_t j = 0; j < batch; ++j) slots[j] = j < classes ? j : uniform_index(compose, classes);
    }

    std::vector<std::optional<Rng>> class_streams(classes);
    for (std::size_t j = 0; j < batch; ++j) {
      const std::size_t c = slots[j];
      if (!class_streams[c]) class_streams[c] = derive_stream(config.seed, StreamTag::kPromptSample, c, step);
      samples[j] = draw_exemplar(c, support_sets[c], schedule.timesteps(), *class_streams[c]);
    }

    for (std::size_t c = 0; c < classes; ++c) current[c] = result.prompts[c].embedding;
    ContrastiveLoss l = comple_loss(samples, current, config.lambda, model, schedule, config.negative_margin);
    if (!std::isfinite(l.loss)) {
      throw NumericalError("CoMPLe diverged: non-finite loss at step " + std::to_string(step));
    }
    result.losses.push_back(l.loss);

    ParameterRefs params;
    GradientRecord grads;
    for (std::size_t c = 0; c < classes; ++c) {
      if (!l.touched[c]) continue;
      params.emplace_back(param_names[c], &result.prompts[c].embedding);
      grads.emplace(param_names[c], std::move(l.grads[c]));
    }
    optimizer.step(params, grads);
  }
  return result;
}

double mean_pairwise_cosine_distance(std::span<const ClassPrompt> prompts) {
  if (prompts.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    for (std::size_t j = i + 1; j < prompts.size(); ++j) {
      total += 1.0 - cosine_similarity(prompts[i].embedding.data(), prompts[j].embedding.data());
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

void save_prompts(std::span<const ClassPrompt> prompts, std::ostream& os) {
  const std::size_t dim = prompts.empty() ? 0 : prompts[0].embedding.size();
  for (const auto& p : prompts) {
    if (p.embedding.size() != dim) throw ShapeError("save_prompts: embeddings differ in length");
  }
  binio::write_magic(os, kEmbeddingMagic);
  binio::write_u32(os, kEmbeddingFormatVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(dim));
  binio::write_u32(os, static_cast<std::uint32_t>(prompts.size()));
  for (const auto& p : prompts) {
    binio::write_string(os, p.name);
    binio::write_f32s(os, p.embedding.data());
  }
}

std::vector<ClassPrompt> load_prompts(std::istream& is) {
  binio::expect_magic(is, kEmbeddingMagic, "embedding store");
  const std::uint32_t version = binio::read_u32(is);
  if (version != kEmbeddingFormatVersion) {
    throw FormatError("embedding store format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kEmbeddingFormatVersion) + ")");
  }
  const std::uint32_t dim = binio::read_u32(is);
  const std::uint32_t count = binio::read_u32(is);
  if (dim > (1u << 20) || count > (1u << 20)) throw FormatError("embedding store header is implausible");
  std::vector<ClassPrompt> prompts;
  prompts.reserve(count);
  for (std::uint32_t c = 0; c < count; ++c) {
    ClassPrompt p;
    p.class_id = c;
    p.name = binio::read_string(is);
    p.embedding = Tensor({dim});
    binio::read_f32s(is, p.embedding.data());
    prompts.push_back(std::move(p));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after embedding store");
  return prompts;
}

void save_prompts(std::span<const ClassPrompt> prompts, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  save_prompts(prompts, out);
}

std::vector<ClassPrompt> load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding store " + path.string());
  return load_prompts(in);
}

std::vector<ConditionEmbedding> embeddings_of(std::span<const ClassPrompt> prompts) {
  std::vector<ConditionEmbedding> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(p.embedding);
  return out;
}

}  // namespace gcpl
