// gcpl: pretrain a desk-scale backbone, learn class prompts, classify and benchmark.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gcpl/binary_io.hpp"
#include "gcpl/config.hpp"
#include "gcpl/errors.hpp"

namespace fs = std::filesystem;
using namespace gcpl;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigFailure = 2, kDivergence = 3, kIoFailure = 4 };

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir = cfg.output_dir();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_text(dir / "resolved_config.ini", to_ini(cfg));
  return dir;
}

DenoiserModel load_backbone(const RunConfig& cfg) {
  const fs::path path = cfg.backbone_path();
  if (!fs::exists(path)) throw IoError("backbone file " + path.string() + " not found; run `gcpl pretrain` first");
  DenoiserModel model = load_model(path);
  if (!model.frozen()) throw FormatError("backbone " + path.string() + " is not marked frozen");
  if (model.timesteps() != cfg.schedule.timesteps) {
    throw ConfigError("backbone was trained with T=" + std::to_string(model.timesteps()) + " but schedule.T=" +
                      std::to_string(cfg.schedule.timesteps));
  }
  return model;
}

std::vector<ConditionEmbedding> load_conditions(const RunConfig& cfg) {
  const fs::path path = cfg.conditions_path();
  if (!fs::exists(path)) throw IoError("conditions file " + path.string() + " not found; run `gcpl pretrain` first");
  return embeddings_of(load_prompts(path));
}

// ---------------------------------------------------------------------------

int cmd_pretrain(const RunConfig& cfg) {
  const fs::path dir = prepare_output(cfg);
  const SyntheticDataset data = generate_synthetic(cfg.synthetic_spec());
  const auto conditions = make_true_conditions(cfg.data.n_classes, cfg.arch.cond_dim, cfg.data.seed, cfg.condition_scale);
  PretrainConfig pc = cfg.pretrain;
  pc.seed = cfg.data.seed;
  const PretrainResult result = pretrain_backbone(data.train, conditions, cfg.make_schedule(), cfg.arch, pc);

  save_model(result.model, cfg.backbone_path());
  std::vector<ClassPrompt> named;
  const auto names = default_class_names(conditions.size());
  for (std::size_t c = 0; c < conditions.size(); ++c) named.push_back(ClassPrompt{c, names[c], conditions[c], "true"});
  save_prompts(named, cfg.conditions_path());

  std::ostringstream log;
  log << std::setprecision(9) << "step,loss\n";
  for (const auto& s : result.log) log << s.step << ',' << s.loss << '\n';
  write_text(dir / "pretrain_log.csv", log.str());

  std::cout << "backbone " << cfg.backbone_path().string() << ": eval loss " << result.initial_loss << " -> "
            << result.final_loss << '\n';
  return kOk;
}

int cmd_train(const RunConfig& cfg, const std::string& method_text) {
  const Method method = parse_method(method_text);
  if (method != Method::kGCPL && method != Method::kCoMPLe) {
    throw ConfigError("train --method must be gcpl or comple");
  }
  const DenoiserModel model = load_backbone(cfg);
  const NoiseSchedule schedule = cfg.make_schedule();

  ConditionEmbedding concept_embedding;
  if (cfg.prompt_init == "concept") {
    const auto conditions = load_conditions(cfg);
    concept_embedding = mean_embedding(conditions);
  }
  const PromptInitializer init = cfg.initializer(concept_embedding);

  std::vector<std::vector<Tensor>> support;
  std::vector<std::string> names;
  std::optional<LabeledLatents> queries;
  if (!cfg.paths.support_dir.empty()) {
    const LabeledLatents folder = load_latent_folder(cfg.paths.support_dir);
    support.resize(folder.num_classes());
    for (std::size_t i = 0; i < folder.size(); ++i) {
      if (support[folder.labels[i]].size() < cfg.train.shots) support[folder.labels[i]].push_back(folder.latents[i]);
    }
    for (std::size_t c = 0; c < support.size(); ++c) {
      if (support[c].size() < cfg.train.shots) {
        throw std::invalid_argument("class '" + folder.class_names[c] + "' has fewer than " +
                                    std::to_string(cfg.train.shots) + " support latents");
      }
    }
    names = folder.class_names;
  } else {
    const SyntheticDataset data = generate_synthetic(cfg.synthetic_spec());
    const std::size_t n_way = cfg.train.n_way == 0 ? data.train.num_classes() : cfg.train.n_way;
    Episode ep = build_episode(data.train, data.test, n_way, cfg.train.shots, cfg.seed, cfg.train.queries_per_class);
    support = std::move(ep.support);
    names = std::move(ep.class_names);
    queries = std::move(ep.queries);
  }

  const fs::path dir = prepare_output(cfg);
  const LearnedPrompts learned =
      learn_prompts(method, support, names, init, cfg.gcpl, cfg.comple, cfg.seed, model, schedule);
  save_prompts(learned.prompts, cfg.embeddings_path());
  if (queries) save_latent_set(*queries, cfg.queries_path());

  std::ostringstream log;
  log << std::setprecision(9) << "step,loss\n";
  for (std::size_t i = 0; i < learned.losses.size(); ++i) log << i + 1 << ',' << learned.losses[i] << '\n';
  write_text(dir / "train_log.csv", log.str());

  std::cout << method_name(method) << ": " << learned.prompts.size() << " prompts -> "
            << cfg.embeddings_path().string() << '\n';
  return kOk;
}

LabeledLatents load_queries(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("query file " + path.string() + " not found");
  const std::string magic = binio::peek_magic(path, 7);
  if (magic == kLatentSetMagic) return load_latent_set(path);
  if (magic == kLatentMagic) {
    LabeledLatents single;
    single.latents.push_back(load_latent(path));
    single.labels.push_back(std::numeric_limits<std::size_t>::max());
    return single;
  }
  throw FormatError(path.string() + " is neither a latent nor a latent set file");
}

int cmd_classify(const RunConfig& cfg) {
  const DenoiserModel model = load_backbone(cfg);
  const auto prompts = load_prompts(cfg.embeddings_path());
  const LabeledLatents queries = load_queries(cfg.queries_path());
  const fs::path dir = prepare_output(cfg);

  ClassifierConfig clf = cfg.classifier;
  clf.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(StreamTag::kClassifierPairs));
  const auto embeddings = embeddings_of(prompts);
  const EvaluationResult result = evaluate_prompts(queries, embeddings, clf, model, cfg.make_schedule());

  std::ostringstream out;
  std::size_t labeled = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const bool has_label = queries.labels[i] != std::numeric_limits<std::size_t>::max();
    out << report_json_line(i, has_label ? static_cast<long long>(queries.labels[i]) : -1, result.reports[i]) << '\n';
    if (has_label) {
      ++labeled;
      correct += result.reports[i].predicted == queries.labels[i];
    }
  }
  write_text(dir / "classify.jsonl", out.str());
  std::cout << queries.size() << " queries classified -> " << (dir / "classify.jsonl").string() << '\n';
  if (labeled > 0) {
    std::cout << "accuracy " << static_cast<double>(correct) / static_cast<double>(labeled) << " (" << correct << '/'
              << labeled << ")\n";
  }
  return kOk;
}

int cmd_benchmark(const RunConfig& cfg) {
  const DenoiserModel model = load_backbone(cfg);
  const auto conditions = load_conditions(cfg);
  const fs::path dir = prepare_output(cfg);
  const SyntheticDataset data = generate_synthetic(cfg.synthetic_spec());
  const auto start = std::chrono::steady_clock::now();
  const BenchmarkReport report =
      run_benchmark(data, conditions, model, cfg.make_schedule(), cfg.benchmark_config(mean_embedding(conditions)));
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_text(dir / "benchmark.csv", benchmark_csv(report));
  write_text(dir / "benchmark.json", benchmark_json(report));
  write_text(dir / "benchmark.svg", benchmark_svg(report));
  for (const auto& s : report.summary) {
    std::cout << std::left << std::setw(16) << method_name(s.method) << std::right << std::setw(4) << s.shots
              << " shots  " << std::fixed << std::setprecision(4) << s.mean;
    if (s.stddev) std::cout << " +- " << *s.stddev;
    std::cout << '\n';
  }
  std::cerr << "benchmark finished in " << std::setprecision(1) << elapsed << " s\n";
  return kOk;
}

// ---------------------------------------------------------------------------

void print_values(std::ostream& os, std::span<const float> v) {
  os << std::setprecision(9);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  os << '\n';
}

int cmd_inspect(const fs::path& path) {
  if (!fs::exists(path)) throw IoError(path.string() + " not found");
  const std::string magic = binio::peek_magic(path, 7);
  std::ostream& os = std::cout;
  if (magic == kModelMagic) {
    const DenoiserModel m = load_model(path);
    const DenoiserArch& a = m.arch();
    os << "denoiser model v" << kModelFormatVersion << "\n  latent_dim " << a.latent_dim << "\n  time_embed_dim "
       << a.time_embed_dim << "\n  cond_dim " << a.cond_dim << "\n  hidden_dim " << a.hidden_dim << "\n  timesteps "
       << a.timesteps << "\n  frozen " << (m.frozen() ? "yes" : "no") << '\n';
    const auto& names = DenoiserModel::parameter_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      const Tensor& p = m.parameters()[i];
      os << "  " << std::left << std::setw(4) << names[i] << std::right << " shape " << shape_string(p.shape())
         << "  l2 " << std::sqrt(squared_norm(p.data())) << '\n';
    }
  } else if (magic == kEmbeddingMagic) {
    const auto prompts = load_prompts(path);
    os << "embedding store v" << kEmbeddingFormatVersion << ", " << prompts.size() << " classes, dim "
       << (prompts.empty() ? 0 : prompts[0].embedding.size()) << '\n';
    for (const auto& p : prompts) {
      os << "[" << p.class_id << "] " << p.name << ": ";
      print_values(os, p.embedding.data());
    }
  } else if (magic == kLatentMagic) {
    const Tensor t = load_latent(path);
    os << "latent v" << kLatentFormatVersion << ", dim " << t.size() << '\n';
    print_values(os, t.data());
  } else if (magic == kLatentSetMagic) {
    const LabeledLatents set = load_latent_set(path);
    os << "latent set v" << kLatentFormatVersion << ", " << set.size() << " samples, dim "
       << (set.latents.empty() ? 0 : set.latents[0].size()) << ", classes";
    for (const auto& n : set.class_names) os << ' ' << n;
    os << '\n';
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set.labels[i] == std::numeric_limits<std::size_t>::max()) {
        os << "[" << i << "] unlabeled: ";
      } else {
        os << "[" << i << "] label " << set.labels[i] << ": ";
      }
      print_values(os, set.latents[i].data());
    }
  } else {
    throw FormatError(path.string() + " is not a recognised gcpl file (bad magic bytes)");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot classification with diffusion-model class prompts (desk-scale)"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  app.add_option("-c,--config", config_path, "INI config file (defaults apply when omitted)");
  app.add_option("-s,--set", overrides, "Override a key, e.g. --set comple.lambda=0")->take_all();
  app.add_option("-o,--output-dir", output_dir, "Shortcut for --set paths.output_dir=DIR");

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain and freeze the synthetic backbone");
  std::string method = "gcpl";
  auto* train = app.add_subcommand("train", "Learn class prompts against the frozen backbone");
  train->add_option("-m,--method", method, "gcpl or comple")->check(CLI::IsMember({"gcpl", "comple"}));
  auto* classify_cmd = app.add_subcommand("classify", "Classify queries with learned prompts (JSON lines)");
  auto* benchmark = app.add_subcommand("benchmark", "Shot/seed sweep with CSV, JSON and SVG output");
  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Dump a gcpl binary file as text");
  inspect->add_option("file", inspect_path, "Model, embedding store or latent file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }

  try {
    if (inspect->parsed()) return cmd_inspect(inspect_path);

    RunConfig cfg = config_path.empty() ? parse_config("") : load_config(config_path);
    for (const auto& o : overrides) apply_override(cfg, o);
    if (!output_dir.empty()) apply_override(cfg, "paths.output_dir=" + output_dir);
    apply_environment(cfg);

    if (pretrain->parsed()) return cmd_pretrain(cfg);
    if (train->parsed()) return cmd_train(cfg, method);
    if (classify_cmd->parsed()) return cmd_classify(cfg);
    if (benchmark->parsed()) return cmd_benchmark(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const NumericalError& e) {
    std::cerr << "numerical divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
