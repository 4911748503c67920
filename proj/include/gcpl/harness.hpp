#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcpl/classifier.hpp"
#include "gcpl/dataset.hpp"
#include "gcpl/denoiser.hpp"
#include "gcpl/prompt_learning.hpp"
#include "gcpl/schedule.hpp"

namespace gcpl {

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::size_t n_classes = 4;
  std::size_t latent_dim = 16;
  double prototype_scale = 1.0;  // prototypes ~ N(0, scale^2) per coordinate
  double sigma_class = 0.3;      // samples = prototype + N(0, sigma^2)
  std::size_t train_per_class = 64;
  std::size_t test_per_class = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

/// C = 4, sigma = 0.3: the reference task.
SyntheticSpec reference_spec();
/// C = 8, sigma = 0.5: harder task for comparing the two learners.
SyntheticSpec hard_spec();

struct SyntheticDataset {
  std::vector<Tensor> prototypes;
  LabeledLatents train;
  LabeledLatents test;
};

/// Deterministic per seed; sigma_class = 0 is accepted and yields samples equal
/// to their prototypes.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Per-class conditions the backbone is pretrained with, N(0, scale^2).
std::vector<ConditionEmbedding> make_true_conditions(std::size_t n_classes, std::size_t cond_dim, std::uint64_t seed,
                                                     double scale = 1.0);

std::vector<std::string> default_class_names(std::size_t n_classes);

// ---------------------------------------------------------------------------
// Episodes

/// N-way K-shot task. Labels inside the episode run over 0..n_way-1;
/// `classes[k]` is the dataset class behind episode label k.
struct Episode {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::vector<std::size_t> classes;
  std::vector<std::string> class_names;
  std::vector<std::vector<Tensor>> support;
  std::vector<std::vector<std::size_t>> support_indices;  // into the train split
  LabeledLatents queries;
  std::vector<std::size_t> query_indices;  // into the test split
};

/// Support drawn from `train`, queries from `test`. queries_per_class = 0
/// takes every test sample of the chosen classes.
Episode build_episode(const LabeledLatents& train, const LabeledLatents& test, std::size_t n_way,
                      std::size_t k_shot, std::uint64_t seed, std::size_t queries_per_class = 0);

// ---------------------------------------------------------------------------
// Prompt templates

struct PromptTemplate {
  std::string dataset;
  std::string text;  // contains "[CLASS]" exactly once
  std::string initializer_word;

  std::string render(const std::string& class_name) const;
};

const std::vector<PromptTemplate>& known_templates();
/// Throws std::out_of_range listing the known dataset names.
PromptTemplate resolve_template(const std::string& dataset_name);

// ---------------------------------------------------------------------------
// Benchmark

enum class Method {
  kGCPL,
  kCoMPLe,
  kTrueConditions,  // backbone's own pretraining conditions (upper bound)
  kRandomPrompts,   // untrained random prompts, redrawn per query (null control)
};

std::string method_name(Method m);
Method parse_method(const std::string& name);

struct LearnedPrompts {
  std::vector<ClassPrompt> prompts;
  std::vector<double> losses;  // per step; GCPL runs are concatenated class by class
};

/// Trains prompts for every support set with GCPL or CoMPLe; `seed` replaces
/// the seed in both configs. Other methods are rejected.
LearnedPrompts learn_prompts(Method method, std::span<const std::vector<Tensor>> support,
                             std::span<const std::string> class_names, const PromptInitializer& init,
                             const GCPLConfig& gcpl, const CoMPLeConfig& comple, std::uint64_t seed,
                             const NoisePredictor& model, const NoiseSchedule& schedule);

struct EvaluationResult {
  double accuracy = 0.0;
  std::vector<ClassifierReport> reports;
};

/// Classifies every query with fixed prompts. Query i uses seed query_seed(seed, i).
EvaluationResult evaluate_prompts(const LabeledLatents& queries, std::span<const ConditionEmbedding> prompts,
                                  const ClassifierConfig& config, const NoisePredictor& model,
                                  const NoiseSchedule& schedule);

/// Null control: each query is classified against freshly drawn N(0, 1)
/// prompts, so the predicted index is exchangeable across classes.
EvaluationResult evaluate_random_prompts(const LabeledLatents& queries, std::size_t n_classes,
                                         const ClassifierConfig& config, const NoisePredictor& model,
                                         const NoiseSchedule& schedule);

struct BenchmarkConfig {
  std::vector<Method> methods{Method::kGCPL};
  std::vector<std::size_t> shots{1, 4, 8, 16};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t n_way = 0;  // 0 = all classes
  std::size_t queries_per_class = 0;
  GCPLConfig gcpl;
  CoMPLeConfig comple;
  ClassifierConfig classifier;
  PromptInitializer initializer;
  std::string template_dataset = "Fractals";
  bool record_timing = false;  // off keeps reports bit-reproducible
};

struct BenchmarkCell {
  Method method = Method::kGCPL;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double wall_clock_s = 0.0;
  std::vector<ClassPrompt> prompts;  // empty for the null control
};

struct ShotSummary {
  Method method = Method::kGCPL;
  std::size_t shots = 0;
  double mean = 0.0;
  std::optional<double> stddev;  // sample std, present with >= 2 seeds
};

struct BenchmarkReport {
  std::vector<Method> methods;
  std::vector<std::size_t> shots;
  std::vector<std::uint64_t> seeds;
  PromptTemplate prompt_template;
  std::vector<BenchmarkCell> cells;
  std::vector<ShotSummary> summary;
  double wall_clock_s = 0.0;

  const ShotSummary& at(Method method, std::size_t shots) const;
};

/// For every (method, shot, seed): build an episode, obtain prompts, classify
/// the queries. Training and classifier seeds are derived from the cell seed.
/// `true_conditions` are indexed by dataset class.
BenchmarkReport run_benchmark(const SyntheticDataset& data, std::span<const ConditionEmbedding> true_conditions,
                              const NoisePredictor& model, const NoiseSchedule& schedule,
                              const BenchmarkConfig& config);

std::vector<ShotSummary> summarize(std::span<const BenchmarkCell> cells, std::span<const Method> methods,
                                   std::span<const std::size_t> shots);

std::string benchmark_csv(const BenchmarkReport& report);
std::string benchmark_json(const BenchmarkReport& report);
/// Mean accuracy against shots, one polyline per method.
std::string benchmark_svg(const BenchmarkReport& report);

// ---------------------------------------------------------------------------
// Latent files

// Single sample: "GCPLLAT", u32 version, u32 dim, dim little-endian float32.
// Latent set:    "GCPLSET", u32 version, u32 dim, u32 count, u32 class count,
//                class names (u32 length + bytes), then per sample i32 label
//                (-1 = unlabeled) and dim float32.
inline constexpr char kLatentMagic[] = "GCPLLAT";
inline constexpr char kLatentSetMagic[] = "GCPLSET";
inline constexpr std::uint32_t kLatentFormatVersion = 1;

void save_latent(const Tensor& latent, const std::filesystem::path& path);
Tensor load_latent(const std::filesystem::path& path);

void save_latent_set(const LabeledLatents& set, const std::filesystem::path& path,
                     std::span<const bool> labeled = {});
/// Labels of unlabeled samples load as SIZE_MAX.
LabeledLatents load_latent_set(const std::filesystem::path& path);

/// Folder of latents: one subdirectory per class (sorted by name), one
/// GCPLLAT file per sample (sorted by file name).
LabeledLatents load_latent_folder(const std::filesystem::path& root);

}  // namespace gcpl
