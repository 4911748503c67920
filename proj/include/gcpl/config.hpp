#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gcpl/classifier.hpp"
#include "gcpl/denoiser.hpp"
#include "gcpl/harness.hpp"
#include "gcpl/prompt_learning.hpp"

namespace gcpl {

struct ScheduleParams {
  std::string family = "linear";
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct PathParams {
  std::string output_dir = "gcpl_out";
  // Empty paths resolve to fixed names inside output_dir.
  std::string backbone;
  std::string conditions;
  std::string embeddings;
  std::string queries;
  std::string support_dir;  // optional folder-of-latents training source
};

struct TrainParams {
  std::size_t shots = 16;
  std::size_t n_way = 0;
  std::size_t queries_per_class = 0;
};

struct BenchmarkParams {
  std::vector<std::string> methods{"gcpl"};
  std::vector<std::size_t> shots{1, 4, 8, 16};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t n_way = 0;
  std::size_t queries_per_class = 0;
  bool record_timing = false;
};

/// Every tunable of the pipeline. Keys are `section.name`; see config_keys().
struct RunConfig {
  std::uint64_t seed = 0;  // training and classification; GCPL_SEED overrides
  PathParams paths;
  ScheduleParams schedule;
  DenoiserArch arch;
  PretrainConfig pretrain;
  double condition_scale = 1.0;
  SyntheticSpec data;  // data.seed also seeds the true conditions and pretraining
  std::string prompt_init = "concept";
  double prompt_init_sigma = 0.02;
  std::string template_dataset = "Fractals";
  GCPLConfig gcpl;
  CoMPLeConfig comple;
  ClassifierConfig classifier;
  TrainParams train;
  BenchmarkParams benchmark;

  std::filesystem::path output_dir() const { return paths.output_dir; }
  std::filesystem::path backbone_path() const;
  std::filesystem::path conditions_path() const;
  std::filesystem::path embeddings_path() const;
  std::filesystem::path queries_path() const;

  NoiseSchedule make_schedule() const;
  SyntheticSpec synthetic_spec() const;
  PromptInitializer initializer(const ConditionEmbedding& concept_embedding) const;
  BenchmarkConfig benchmark_config(const ConditionEmbedding& concept_embedding) const;
};

/// "section.name" for every accepted key, in echo order.
std::vector<std::string> config_keys();

/// Parses sectioned key = value text. Unknown sections or keys, malformed
/// values and inconsistent settings raise ConfigError; absent keys keep
/// their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Applies one "section.name=value" assignment and revalidates.
void apply_override(RunConfig& config, const std::string& assignment);

/// Applies GCPL_SEED from the environment, if set.
void apply_environment(RunConfig& config);

/// Fully resolved config as text; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& config);

}  // namespace gcpl
