#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcpl/denoiser.hpp"
#include "gcpl/optim.hpp"
#include "gcpl/rng.hpp"
#include "gcpl/schedule.hpp"
#include "gcpl/tensor.hpp"

namespace gcpl {

/// Learnable per-class conditioning embedding (the [CLASS] token stand-in).
struct ClassPrompt {
  std::size_t class_id = 0;
  std::string name;
  ConditionEmbedding embedding;
  std::string initializer;
};

enum class PromptInit {
  kConcept,       // concept embedding + N(0, sigma^2) noise
  kRandomNormal,  // N(0, 1) per coordinate
};

/// Where prompt optimisation starts. The concept embedding plays the role of
/// an initializer word: a generic, class-agnostic starting point.
struct PromptInitializer {
  PromptInit mode = PromptInit::kConcept;
  ConditionEmbedding concept_embedding;
  double sigma = 0.02;
  std::string word;
};

/// Mean of the given embeddings, used as the generic concept.
ConditionEmbedding mean_embedding(std::span<const ConditionEmbedding> embeddings);

/// Initial embedding for one class; depends only on (seed, class_id).
ConditionEmbedding initial_prompt(const PromptInitializer& init, std::size_t cond_dim, std::size_t class_id,
                                  std::uint64_t seed);

struct GCPLConfig {
  double lr = 5e-4;
  std::size_t epochs = 2000;  // one epoch = one optimizer step on a sampled mini-batch
  std::size_t batch_size = 4;  // exemplars drawn with replacement per step
  AdamWConfig optimizer{};     // lr is taken from the field above
  std::uint64_t seed = 0;
};

struct CoMPLeConfig {
  double lr = 1e-3;
  std::size_t epochs = 4000;
  std::size_t batch_size = 4;
  double lambda = 0.001;
  // Caps each negative pair's squared error; unset means no cap.
  std::optional<double> negative_margin;
  AdamWConfig optimizer{};
  std::uint64_t seed = 0;
};

/// A noised training example with its draw made explicit.
struct DrawnSample {
  std::size_t class_index = 0;  // index into the prompt list
  Tensor x0;
  int t = 1;
  Tensor eps;
};

struct PromptLoss {
  double loss = 0.0;
  Tensor grad;  // d loss / d prompt
};

/// Mean over exemplars of mse(eps, eps_theta(x_t, t, prompt)) for explicit
/// draws. The gradient flows only to the prompt.
PromptLoss gcpl_loss(std::span<const DrawnSample> samples, const ConditionEmbedding& prompt,
                     const NoisePredictor& model, const NoiseSchedule& schedule);

/// Draws one (t, eps) per exemplar from `rng` (t first, then eps) and
/// evaluates the loss above.
PromptLoss gcpl_loss(std::span<const Tensor> exemplars, const ConditionEmbedding& prompt,
                     const NoisePredictor& model, const NoiseSchedule& schedule, Rng& rng);

struct ContrastiveLoss {
  double loss = 0.0;      // positive - lambda * negative
  double positive = 0.0;  // (1/B) sum_j mse(eps_j, pred_j)
  double negative = 0.0;  // (1/(B(B-1))) sum_{i != j, c_i != c_j} mse(eps_i, pred_j)
  std::vector<Tensor> grads;  // one per prompt; zero for prompts not in the batch
  std::vector<bool> touched;
};

/// Contrastive multi-class loss over explicit draws. Prediction j uses
/// prompts[samples[j].class_index]. Pairs from the same class never enter the
/// negative term; with B = 1 the negative term is 0.
ContrastiveLoss comple_loss(std::span<const DrawnSample> samples, std::span<const ConditionEmbedding> prompts,
                            double lambda, const NoisePredictor& model, const NoiseSchedule& schedule,
                            std::optional<double> negative_margin = std::nullopt);

struct LabeledExemplar {
  std::size_t class_index = 0;
  Tensor x0;
};

/// Draws (t, eps) per batch element in order from `rng` and evaluates the loss above.
ContrastiveLoss comple_loss(std::span<const LabeledExemplar> batch, std::span<const ConditionEmbedding> prompts,
                            double lambda, const NoisePredictor& model, const NoiseSchedule& schedule, Rng& rng,
                            std::optional<double> negative_margin = std::nullopt);

struct GCPLResult {
  ClassPrompt prompt;
  std::vector<double> losses;  // per step
};

/// Learns one class prompt against a frozen backbone. Step k draws its batch
/// from the stream (seed, class_id, k), so runs for different classes are
/// independent and reproducible.
GCPLResult train_gcpl(std::span<const Tensor> support, std::size_t class_id, const std::string& class_name,
                      const PromptInitializer& init, const GCPLConfig& config, const NoisePredictor& model,
                      const NoiseSchedule& schedule);

struct CoMPLeResult {
  std::vector<ClassPrompt> prompts;
  std::vector<double> losses;  // per step
};

/// Learns all class prompts jointly with one optimizer state. Each step picks
/// B distinct classes (all classes plus uniform extras when fewer than B
/// exist) and one exemplar per batch slot. A class's exemplar and noise draws
/// come from the same per-(seed, class, step) stream GCPL uses.
CoMPLeResult train_comple(std::span<const std::vector<Tensor>> support_sets, std::span<const std::string> class_names,
                          const PromptInitializer& init, const CoMPLeConfig& config, const NoisePredictor& model,
                          const NoiseSchedule& schedule);

double mean_pairwise_cosine_distance(std::span<const ClassPrompt> prompts);

// Embedding store: "GCPLEMB", u32 version, u32 cond_dim, u32 class count, then
// per class u32 name length, UTF-8 name bytes, cond_dim little-endian float32.
inline constexpr char kEmbeddingMagic[] = "GCPLEMB";
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

void save_prompts(std::span<const ClassPrompt> prompts, std::ostream& os);
std::vector<ClassPrompt> load_prompts(std::istream& is);
void save_prompts(std::span<const ClassPrompt> prompts, const std::filesystem::path& path);
std::vector<ClassPrompt> load_prompts(const std::filesystem::path& path);

std::vector<ConditionEmbedding> embeddings_of(std::span<const ClassPrompt> prompts);

}  // namespace gcpl
