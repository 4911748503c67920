#include "gcpl/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <type_traits>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gcpl/errors.hpp"

namespace gcpl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  const std::string t = trim(s);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') return t.substr(1, t.size() - 2);
  return t;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(unquote(s));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename Int>
Int parse_integer(const std::string& text) {
  const std::string t = unquote(text);
  Int value{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("expected an integer, got '" + t + "'");
  }
  return value;
}

double parse_double(const std::string& text) {
  const std::string t = unquote(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("expected a number, got '" + t + "'");
  }
  return value;
}

bool is_unset(const std::string& text) {
  const std::string t = unquote(text);
  return t.empty() || t == "off" || t == "none";
}

void parse_value(const std::string& v, double& out) { out = parse_double(v); }
void parse_value(const std::string& v, int& out) { out = parse_integer<int>(v); }
void parse_value(const std::string& v, std::size_t& out) { out = parse_integer<std::size_t>(v); }
void parse_value(const std::string& v, std::string& out) { out = unquote(v); }
void parse_value(const std::string& v, bool& out) {
  const std::string t = unquote(v);
  if (t == "true" || t == "1" || t == "yes") {
    out = true;
  } else if (t == "false" || t == "0" || t == "no") {
    out = false;
  } else {
    throw ConfigError("expected true or false, got '" + t + "'");
  }
}
void parse_value(const std::string& v, std::optional<double>& out) {
  if (is_unset(v)) {
    out.reset();
  } else {
    out = parse_double(v);
  }
}
template <typename T>
void parse_value(const std::string& v, std::vector<T>& out) {
  out.clear();
  for (const auto& item : split_list(v)) {
    T value{};
    parse_value(item, value);
    out.push_back(value);
  }
}
static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed keys are parsed as size_t");

std::string format_value(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::size_t v) { return std::to_string(v); }
std::string format_value(const std::string& v) { return v; }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::optional<double>& v) { return v ? format_value(*v) : "off"; }
template <typename T>
std::string format_value(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_value(v[i]);
  return out;
}

struct KeySpec {
  std::string section;
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
KeySpec key(std::string section, std::string name, Access access) {
  return KeySpec{std::move(section), std::move(name),
                 [access](RunConfig& c, const std::string& v) { parse_value(v, access(c)); },
                 [access](const RunConfig& c) { return format_value(access(const_cast<RunConfig&>(c))); }};
}

template <typename Config>
void optimizer_keys(std::vector<KeySpec>& keys, const std::string& section, Config RunConfig::*cfg) {
  keys.push_back(key(section, "beta1", [cfg](RunConfig& c) -> double& { return (c.*cfg).optimizer.beta1; }));
  keys.push_back(key(section, "beta2", [cfg](RunConfig& c) -> double& { return (c.*cfg).optimizer.beta2; }));
  keys.push_back(key(section, "weight_decay", [cfg](RunConfig& c) -> double& { return (c.*cfg).optimizer.weight_decay; }));
  keys.push_back(key(section, "eps", [cfg](RunConfig& c) -> double& { return (c.*cfg).optimizer.eps; }));
  keys.push_back(key(section, "grad_clip", [cfg](RunConfig& c) -> std::optional<double>& { return (c.*cfg).optimizer.grad_clip; }));
}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = [] {
    std::vector<KeySpec> k;
    k.push_back(key("run", "seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));

    k.push_back(key("paths", "output_dir", [](RunConfig& c) -> std::string& { return c.paths.output_dir; }));
    k.push_back(key("paths", "backbone", [](RunConfig& c) -> std::string& { return c.paths.backbone; }));
    k.push_back(key("paths", "conditions", [](RunConfig& c) -> std::string& { return c.paths.conditions; }));
    k.push_back(key("paths", "embeddings", [](RunConfig& c) -> std::string& { return c.paths.embeddings; }));
    k.push_back(key("paths", "queries", [](RunConfig& c) -> std::string& { return c.paths.queries; }));
    k.push_back(key("paths", "support_dir", [](RunConfig& c) -> std::string& { return c.paths.support_dir; }));

    k.push_back(key("schedule", "schedule", [](RunConfig& c) -> std::string& { return c.schedule.family; }));
    k.push_back(key("schedule", "T", [](RunConfig& c) -> int& { return c.schedule.timesteps; }));
    k.push_back(key("schedule", "beta_start", [](RunConfig& c) -> double& { return c.schedule.beta_start; }));
    k.push_back(key("schedule", "beta_end", [](RunConfig& c) -> double& { return c.schedule.beta_end; }));

    k.push_back(key("backbone", "latent_dim", [](RunConfig& c) -> std::size_t& { return c.arch.latent_dim; }));
    k.push_back(key("backbone", "time_embed_dim", [](RunConfig& c) -> std::size_t& { return c.arch.time_embed_dim; }));
    k.push_back(key("backbone", "cond_dim", [](RunConfig& c) -> std::size_t& { return c.arch.cond_dim; }));
    k.push_back(key("backbone", "hidden_dim", [](RunConfig& c) -> std::size_t& { return c.arch.hidden_dim; }));
    k.push_back(key("backbone", "condition_scale", [](RunConfig& c) -> double& { return c.condition_scale; }));
    k.push_back(key("backbone", "steps", [](RunConfig& c) -> std::size_t& { return c.pretrain.steps; }));
    k.push_back(key("backbone", "batch_size", [](RunConfig& c) -> std::size_t& { return c.pretrain.batch_size; }));
    k.push_back(key("backbone", "lr", [](RunConfig& c) -> double& { return c.pretrain.optimizer.lr; }));
    optimizer_keys(k, "backbone", &RunConfig::pretrain);
    k.push_back(key("backbone", "log_every", [](RunConfig& c) -> std::size_t& { return c.pretrain.log_every; }));

    k.push_back(key("data", "seed", [](RunConfig& c) -> std::uint64_t& { return c.data.seed; }));
    k.push_back(key("data", "n_classes", [](RunConfig& c) -> std::size_t& { return c.data.n_classes; }));
    k.push_back(key("data", "prototype_scale", [](RunConfig& c) -> double& { return c.data.prototype_scale; }));
    k.push_back(key("data", "sigma_class", [](RunConfig& c) -> double& { return c.data.sigma_class; }));
    k.push_back(key("data", "train_per_class", [](RunConfig& c) -> std::size_t& { return c.data.train_per_class; }));
    k.push_back(key("data", "test_per_class", [](RunConfig& c) -> std::size_t& { return c.data.test_per_class; }));

    k.push_back(key("prompt", "init", [](RunConfig& c) -> std::string& { return c.prompt_init; }));
    k.push_back(key("prompt", "init_sigma", [](RunConfig& c) -> double& { return c.prompt_init_sigma; }));
    k.push_back(key("prompt", "template_dataset", [](RunConfig& c) -> std::string& { return c.template_dataset; }));

    k.push_back(key("gcpl", "lr", [](RunConfig& c) -> double& { return c.gcpl.lr; }));
    k.push_back(key("gcpl", "epochs", [](RunConfig& c) -> std::size_t& { return c.gcpl.epochs; }));
    k.push_back(key("gcpl", "batch_size", [](RunConfig& c) -> std::size_t& { return c.gcpl.batch_size; }));
    optimizer_keys(k, "gcpl", &RunConfig::gcpl);

    k.push_back(key("comple", "lr", [](RunConfig& c) -> double& { return c.comple.lr; }));
    k.push_back(key("comple", "epochs", [](RunConfig& c) -> std::size_t& { return c.comple.epochs; }));
    k.push_back(key("comple", "batch_size", [](RunConfig& c) -> std::size_t& { return c.comple.batch_size; }));
    k.push_back(key("comple", "lambda", [](RunConfig& c) -> double& { return c.comple.lambda; }));
    k.push_back(key("comple", "margin", [](RunConfig& c) -> std::optional<double>& { return c.comple.negative_margin; }));
    optimizer_keys(k, "comple", &RunConfig::comple);

    k.push_back(key("classifier", "n_mc", [](RunConfig& c) -> std::size_t& { return c.classifier.n_mc; }));
    k.push_back(key("classifier", "shared_pairs", [](RunConfig& c) -> bool& { return c.classifier.shared_pairs; }));

    k.push_back(key("train", "shots", [](RunConfig& c) -> std::size_t& { return c.train.shots; }));
    k.push_back(key("train", "n_way", [](RunConfig& c) -> std::size_t& { return c.train.n_way; }));
    k.push_back(key("train", "queries_per_class", [](RunConfig& c) -> std::size_t& { return c.train.queries_per_class; }));

    k.push_back(key("benchmark", "methods", [](RunConfig& c) -> std::vector<std::string>& { return c.benchmark.methods; }));
    k.push_back(key("benchmark", "shots", [](RunConfig& c) -> std::vector<std::size_t>& { return c.benchmark.shots; }));
    k.push_back(key("benchmark", "seeds", [](RunConfig& c) -> std::vector<std::uint64_t>& { return c.benchmark.seeds; }));
    k.push_back(key("benchmark", "n_way", [](RunConfig& c) -> std::size_t& { return c.benchmark.n_way; }));
    k.push_back(key("benchmark", "queries_per_class", [](RunConfig& c) -> std::size_t& { return c.benchmark.queries_per_class; }));
    k.push_back(key("benchmark", "record_timing", [](RunConfig& c) -> bool& { return c.benchmark.record_timing; }));
    return k;
  }();
  return table;
}

void set_key(RunConfig& config, const std::string& section, const std::string& name, const std::string& value) {
  const KeySpec* spec = nullptr;
  for (const auto& k : key_table()) {
    if (k.section == section && k.name == name) spec = &k;
  }
  if (!spec) throw ConfigError("unknown config key '" + section + "." + name + "'");
  try {
    spec->set(config, value);
  } catch (const ConfigError& e) {
    throw ConfigError(section + "." + name + ": " + e.what());
  }
}

void validate(RunConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.schedule.family != "linear") fail("schedule.schedule must be \"linear\"");
  c.arch.timesteps = c.schedule.timesteps;
  c.data.latent_dim = c.arch.latent_dim;
  try {
    (void)c.make_schedule();
    c.arch.validate();
    c.data.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (c.prompt_init != "concept" && c.prompt_init != "random") fail("prompt.init must be concept or random");
  if (!(c.prompt_init_sigma >= 0.0)) fail("prompt.init_sigma must be >= 0");
  try {
    (void)resolve_template(c.template_dataset);
  } catch (const std::out_of_range& e) {
    fail(std::string("prompt.template_dataset: ") + e.what());
  }
  if (c.gcpl.epochs < 1 || c.comple.epochs < 1) fail("epochs must be >= 1");
  if (c.gcpl.batch_size < 1 || c.comple.batch_size < 1 || c.pretrain.batch_size < 1) fail("batch_size must be >= 1");
  if (!(c.comple.lambda >= 0.0)) fail("comple.lambda must be >= 0");
  if (c.classifier.n_mc < 1) fail("classifier.n_mc must be >= 1");
  if (c.train.shots < 1) fail("train.shots must be >= 1");
  if (c.benchmark.methods.empty() || c.benchmark.shots.empty() || c.benchmark.seeds.empty()) {
    fail("benchmark needs methods, shots and seeds");
  }
  for (const auto& m : c.benchmark.methods) {
    try {
      (void)parse_method(m);
    } catch (const std::invalid_argument& e) {
      fail(std::string("benchmark.methods: ") + e.what());
    }
  }
  for (std::size_t s : c.benchmark.shots) {
    if (s < 1) fail("benchmark.shots entries must be >= 1");
  }
}

}  // namespace

std::filesystem::path RunConfig::backbone_path() const {
  return paths.backbone.empty() ? output_dir() / "backbone.gcpl" : std::filesystem::path(paths.backbone);
}

std::filesystem::path RunConfig::conditions_path() const {
  return paths.conditions.empty() ? output_dir() / "conditions.emb" : std::filesystem::path(paths.conditions);
}

std::filesystem::path RunConfig::embeddings_path() const {
  return paths.embeddings.empty() ? output_dir() / "prompts.emb" : std::filesystem::path(paths.embeddings);
}

std::filesystem::path RunConfig::queries_path() const {
  return paths.queries.empty() ? output_dir() / "queries.lat" : std::filesystem::path(paths.queries);
}

NoiseSchedule RunConfig::make_schedule() const {
  return NoiseSchedule::linear(schedule.timesteps, schedule.beta_start, schedule.beta_end);
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec spec = data;
  spec.latent_dim = arch.latent_dim;
  return spec;
}

PromptInitializer RunConfig::initializer(const ConditionEmbedding& concept_embedding) const {
  PromptInitializer init;
  init.mode = prompt_init == "random" ? PromptInit::kRandomNormal : PromptInit::kConcept;
  init.concept_embedding = concept_embedding;
  init.sigma = prompt_init_sigma;
  init.word = resolve_template(template_dataset).initializer_word;
  return init;
}

BenchmarkConfig RunConfig::benchmark_config(const ConditionEmbedding& concept_embedding) const {
  BenchmarkConfig b;
  b.methods.clear();
  for (const auto& m : benchmark.methods) b.methods.push_back(parse_method(m));
  b.shots = benchmark.shots;
  b.seeds = benchmark.seeds;
  b.n_way = benchmark.n_way;
  b.queries_per_class = benchmark.queries_per_class;
  b.gcpl = gcpl;
  b.comple = comple;
  b.classifier = classifier;
  b.initializer = initializer(concept_embedding);
  b.template_dataset = template_dataset;
  b.record_timing = benchmark.record_timing;
  return b;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.push_back(k.section + "." + k.name);
  return out;
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' must appear inside a [section]");
    for (const auto& [name, value] : body) set_key(config, section, name, value.data());
  }
  validate(config);
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const std::string lhs = trim(assignment.substr(0, eq));
  const auto dot = lhs.find('.');
  if (eq == std::string::npos || dot == std::string::npos) {
    throw ConfigError("override must look like section.name=value, got '" + assignment + "'");
  }
  set_key(config, lhs.substr(0, dot), lhs.substr(dot + 1), assignment.substr(eq + 1));
  validate(config);
}

void apply_environment(RunConfig& config) {
  if (const char* env = std::getenv("GCPL_SEED")) {
    try {
      config.seed = parse_integer<std::uint64_t>(env);
    } catch (const ConfigError&) {
      throw ConfigError(std::string("GCPL_SEED must be a non-negative integer, got '") + env + "'");
    }
  }
}

std::string to_ini(const RunConfig& config) {
  std::ostringstream os;
  std::string current;
  for (const auto& k : key_table()) {
    if (k.section != current) {
      if (!current.empty()) os << '\n';
      os << '[' << k.section << "]\n";
      current = k.section;
    }
    os << k.name << " = " << k.get(config) << '\n';
  }
  return os.str();
}

}  // namespace gcpl
