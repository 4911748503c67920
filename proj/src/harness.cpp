#include "gcpl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "gcpl/binary_io.hpp"
#include "gcpl/errors.hpp"

namespace gcpl {

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw std::invalid_argument("synthetic spec needs at least 2 classes");
  if (latent_dim == 0) throw std::invalid_argument("synthetic spec needs latent_dim >= 1");
  if (!(sigma_class >= 0.0)) throw std::invalid_argument("synthetic spec needs sigma_class >= 0");
  if (!(prototype_scale > 0.0)) throw std::invalid_argument("synthetic spec needs prototype_scale > 0");
  if (train_per_class == 0 || test_per_class == 0) {
    throw std::invalid_argument("synthetic spec needs train and test samples for every class");
  }
}

SyntheticSpec reference_spec() { return SyntheticSpec{}; }

SyntheticSpec hard_spec() {
  SyntheticSpec spec;
  spec.n_classes = 8;
  spec.sigma_class = 0.5;
  return spec;
}

std::vector<std::string> default_class_names(std::size_t n_classes) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < n_classes; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset out;
  Rng proto_rng = derive_stream(spec.seed, StreamTag::kData, 0);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    out.prototypes.push_back(scale(standard_normal({spec.latent_dim}, proto_rng), static_cast<float>(spec.prototype_scale)));
  }
  const auto names = default_class_names(spec.n_classes);
  auto fill = [&](LabeledLatents& split, std::size_t per_class, std::uint64_t split_id) {
    split.class_names = names;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      Rng rng = derive_stream(spec.seed, StreamTag::kData, split_id, c);
      for (std::size_t i = 0; i < per_class; ++i) {
        Tensor x = out.prototypes[c];
        for (auto& v : x.data()) v = static_cast<float>(v + spec.sigma_class * standard_normal(rng));
        split.latents.push_back(std::move(x));
        split.labels.push_back(c);
      }
    }
  };
  fill(out.train, spec.train_per_class, 1);
  fill(out.test, spec.test_per_class, 2);
  return out;
}

std::vector<ConditionEmbedding> make_true_conditions(std::size_t n_classes, std::size_t cond_dim, std::uint64_t seed,
                                                     double scale_factor) {
  Rng rng = derive_stream(seed, StreamTag::kConditions);
  std::vector<ConditionEmbedding> conds;
  for (std::size_t c = 0; c < n_classes; ++c) {
    conds.push_back(scale(standard_normal({cond_dim}, rng), static_cast<float>(scale_factor)));
  }
  return conds;
}

namespace {

std::vector<std::size_t> indices_of_class(const LabeledLatents& split, std::size_t c) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split.labels[i] == c) idx.push_back(i);
  }
  return idx;
}

void partial_shuffle(std::vector<std::size_t>& v, std::size_t k, Rng& rng) {
  for (std::size_t j = 0; j < k && j < v.size(); ++j) {
    const std::size_t pick = j + uniform_index(rng, v.size() - j);
    std::swap(v[j], v[pick]);
  }
}

}  // namespace

Episode build_episode(const LabeledLatents& train, const LabeledLatents& test, std::size_t n_way,
                      std::size_t k_shot, std::uint64_t seed, std::size_t queries_per_class) {
  const std::size_t classes = train.num_classes();
  if (n_way < 1 || k_shot < 1) throw std::invalid_argument("episode needs n_way >= 1 and k_shot >= 1");
  if (n_way > classes) {
    throw std::invalid_argument("episode asks for " + std::to_string(n_way) + " classes but the dataset has " +
                                std::to_string(classes));
  }
  if (test.num_classes() != classes) throw std::invalid_argument("train and test splits disagree on classes");

  Rng rng = derive_stream(seed, StreamTag::kEpisode);
  std::vector<std::size_t> all(classes);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  if (n_way == classes) {
    ep.classes = all;
  } else {
    partial_shuffle(all, n_way, rng);
    ep.classes.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_way));
    std::sort(ep.classes.begin(), ep.classes.end());
  }

  for (std::size_t k = 0; k < n_way; ++k) {
    const std::size_t c = ep.classes[k];
    ep.class_names.push_back(train.class_names[c]);
    auto train_idx = indices_of_class(train, c);
    if (train_idx.size() < k_shot) {
      throw std::invalid_argument("class '" + train.class_names[c] + "' has " + std::to_string(train_idx.size()) +
                                  " training samples, fewer than k_shot = " + std::to_string(k_shot));
    }
    partial_shuffle(train_idx, k_shot, rng);
    train_idx.resize(k_shot);
    std::vector<Tensor> support;
    for (std::size_t i : train_idx) support.push_back(train.latents[i]);
    ep.support.push_back(std::move(support));
    ep.support_indices.push_back(train_idx);
  }

  ep.queries.class_names = ep.class_names;
  for (std::size_t k = 0; k < n_way; ++k) {
    auto test_idx = indices_of_class(test, ep.classes[k]);
    if (test_idx.empty()) throw std::invalid_argument("class '" + ep.class_names[k] + "' has no test samples");
    if (queries_per_class > 0 && queries_per_class < test_idx.size()) {
      partial_shuffle(test_idx, queries_per_class, rng);
      test_idx.resize(queries_per_class);
      std::sort(test_idx.begin(), test_idx.end());
    }
    for (std::size_t i : test_idx) {
      ep.queries.latents.push_back(test.latents[i]);
      ep.queries.labels.push_back(k);
      ep.query_indices.push_back(i);
    }
  }
  return ep;
}

std::string PromptTemplate::render(const std::string& class_name) const {
  std::string out = text;
  const auto pos = out.find("[CLASS]");
  if (pos != std::string::npos) out.replace(pos, 7, class_name);
  return out;
}

const std::vector<PromptTemplate>& known_templates() {
  static const std::vector<PromptTemplate> templates{
      {"StanfordCars", "A photo of [CLASS], a type of car.", "car"},
      {"Cornseeds", "A photo of [CLASS] corn seed.", "seed"},
      {"CRC5k", "[CLASS] tissue.", "tissue"},
      {"ISIC2018", "[CLASS] skin lesion.", "skin"},
      {"LC25000", "[CLASS] tissue.", "tissue"},
      {"Fractals", "[CLASS] fractal.", "fractal"},
  };
  return templates;
}

PromptTemplate resolve_template(const std::string& dataset_name) {
  for (const auto& t : known_templates()) {
    if (t.dataset == dataset_name) return t;
  }
  std::string known;
  for (const auto& t : known_templates()) known += (known.empty() ? "" : ", ") + t.dataset;
  throw std::out_of_range("unknown dataset '" + dataset_name + "'; known datasets: " + known);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kGCPL:
      return "gcpl";
    case Method::kCoMPLe:
      return "comple";
    case Method::kTrueConditions:
      return "true_conditions";
    case Method::kRandomPrompts:
      return "random_prompts";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kGCPL, Method::kCoMPLe, Method::kTrueConditions, Method::kRandomPrompts}) {
    if (method_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + name + "' (expected gcpl, comple, true_conditions or random_prompts)");
}

EvaluationResult evaluate_prompts(const LabeledLatents& queries, std::span<const ConditionEmbedding> prompts,
                                  const ClassifierConfig& config, const NoisePredictor& model,
                                  const NoiseSchedule& schedule) {
  EvaluationResult result;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    ClassifierConfig cfg = config;
    cfg.seed = query_seed(config.seed, i);
    auto report = classify(queries.latents[i], prompts, cfg, model, schedule);
    if (report.predicted == queries.labels[i]) ++correct;
    result.reports.push_back(std::move(report));
  }
  result.accuracy = queries.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(queries.size());
  return result;
}

EvaluationResult evaluate_random_prompts(const LabeledLatents& queries, std::size_t n_classes,
                                         const ClassifierConfig& config, const NoisePredictor& model,
                                         const NoiseSchedule& schedule) {
  EvaluationResult result;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    Rng rng = derive_stream(config.seed, StreamTag::kNullPrompts, i);
    std::vector<ConditionEmbedding> prompts;
    for (std::size_t c = 0; c < n_classes; ++c) prompts.push_back(standard_normal({model.cond_dim()}, rng));
    ClassifierConfig cfg = config;
    cfg.seed = query_seed(config.seed, i);
    auto report = classify(queries.latents[i], prompts, cfg, model, schedule);
    if (report.predicted == queries.labels[i]) ++correct;
    result.reports.push_back(std::move(report));
  }
  result.accuracy = queries.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(queries.size());
  return result;
}

LearnedPrompts learn_prompts(Method method, std::span<const std::vector<Tensor>> support,
                             std::span<const std::string> class_names, const PromptInitializer& init,
                             const GCPLConfig& gcpl, const CoMPLeConfig& comple, std::uint64_t seed,
                             const NoisePredictor& model, const NoiseSchedule& schedule) {
  if (support.size() != class_names.size()) throw std::invalid_argument("learn_prompts: one name per class required");
  LearnedPrompts out;
  if (method == Method::kGCPL) {
    GCPLConfig cfg = gcpl;
    cfg.seed = seed;
    for (std::size_t k = 0; k < support.size(); ++k) {
      GCPLResult r = train_gcpl(support[k], k, class_names[k], init, cfg, model, schedule);
      out.prompts.push_back(std::move(r.prompt));
      out.losses.insert(out.losses.end(), r.losses.begin(), r.losses.end());
    }
  } else if (method == Method::kCoMPLe) {
    CoMPLeConfig cfg = comple;
    cfg.seed = seed;
    CoMPLeResult r = train_comple(support, class_names, init, cfg, model, schedule);
    out.prompts = std::move(r.prompts);
    out.losses = std::move(r.losses);
  } else {
    throw std::invalid_argument("learn_prompts: " + method_name(method) + " does not learn prompts");
  }
  return out;
}

const ShotSummary& BenchmarkReport::at(Method method, std::size_t n_shots) const {
  for (const auto& s : summary) {
    if (s.method == method && s.shots == n_shots) return s;
  }
  throw std::out_of_range("no benchmark summary for " + method_name(method) + " at " + std::to_string(n_shots) +
                          " shots");
}

std::vector<ShotSummary> summarize(std::span<const BenchmarkCell> cells, std::span<const Method> methods,
                                   std::span<const std::size_t> shots) {
  std::vector<ShotSummary> out;
  for (Method m : methods) {
    for (std::size_t k : shots) {
      std::vector<double> acc;
      for (const auto& c : cells) {
        if (c.method == m && c.shots == k) acc.push_back(c.accuracy);
      }
      if (acc.empty()) continue;
      ShotSummary s{m, k, std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size()), {}};
      if (acc.size() >= 2) {
        double ss = 0.0;
        for (double a : acc) ss += (a - s.mean) * (a - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(acc.size() - 1));
      }
      out.push_back(s);
    }
  }
  return out;
}

BenchmarkReport run_benchmark(const SyntheticDataset& data, std::span<const ConditionEmbedding> true_conditions,
                              const NoisePredictor& model, const NoiseSchedule& schedule,
                              const BenchmarkConfig& config) {
  if (config.methods.empty() || config.shots.empty() || config.seeds.empty()) {
    throw std::invalid_argument("benchmark needs at least one method, shot count and seed");
  }
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const std::size_t n_way = config.n_way == 0 ? data.train.num_classes() : config.n_way;

  BenchmarkReport report;
  report.methods = config.methods;
  report.shots = config.shots;
  report.seeds = config.seeds;
  report.prompt_template = resolve_template(config.template_dataset);
  PromptInitializer init = config.initializer;
  if (init.word.empty()) init.word = report.prompt_template.initializer_word;

  for (Method method : config.methods) {
    for (std::size_t shots : config.shots) {
      for (std::uint64_t seed : config.seeds) {
        const auto cell_start = Clock::now();
        BenchmarkCell cell{method, shots, seed, 0.0, 0.0, {}};
        try {
          const Episode ep = build_episode(data.train, data.test, n_way, shots, seed, config.queries_per_class);
          ClassifierConfig clf = config.classifier;
          clf.seed = mix_seed(seed, static_cast<std::uint64_t>(StreamTag::kClassifierPairs));
          switch (method) {
            case Method::kGCPL:
            case Method::kCoMPLe:
              cell.prompts = learn_prompts(method, ep.support, ep.class_names, init, config.gcpl, config.comple,
                                           seed, model, schedule)
                                 .prompts;
              break;
            case Method::kTrueConditions:
              for (std::size_t k = 0; k < ep.n_way; ++k) {
                if (ep.classes[k] >= true_conditions.size()) {
                  throw std::invalid_argument("no true condition for class " + std::to_string(ep.classes[k]));
                }
                cell.prompts.push_back(ClassPrompt{k, ep.class_names[k], true_conditions[ep.classes[k]], "true"});
              }
              break;
            case Method::kRandomPrompts:
              break;
          }
          if (method == Method::kRandomPrompts) {
            cell.accuracy = evaluate_random_prompts(ep.queries, ep.n_way, clf, model, schedule).accuracy;
          } else {
            const auto prompts = embeddings_of(cell.prompts);
            cell.accuracy = evaluate_prompts(ep.queries, prompts, clf, model, schedule).accuracy;
          }
        } catch (const NumericalError& e) {
          throw NumericalError(std::string(e.what()) + " [method " + method_name(method) + ", shots " +
                               std::to_string(shots) + ", seed " + std::to_string(seed) + "]");
        } catch (const std::invalid_argument& e) {
          throw std::invalid_argument(std::string(e.what()) + " [method " + method_name(method) + ", shots " +
                                      std::to_string(shots) + ", seed " + std::to_string(seed) + "]");
        }
        if (config.record_timing) {
          cell.wall_clock_s = std::chrono::duration<double>(Clock::now() - cell_start).count();
        }
        report.cells.push_back(std::move(cell));
      }
    }
  }
  report.summary = summarize(report.cells, report.methods, report.shots);
  if (config.record_timing) report.wall_clock_s = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

std::string benchmark_csv(const BenchmarkReport& report) {
  std::ostringstream os;
  os << "method,shots,seed,accuracy,wall_clock_s\n";
  for (const auto& c : report.cells) {
    os << method_name(c.method) << ',' << c.shots << ',' << c.seed << ',' << fixed(c.accuracy, 6) << ','
       << fixed(c.wall_clock_s, 3) << '\n';
  }
  return os.str();
}

std::string benchmark_json(const BenchmarkReport& report) {
  nlohmann::ordered_json j;
  j["methods"] = nlohmann::json::array();
  for (Method m : report.methods) j["methods"].push_back(method_name(m));
  j["shots"] = report.shots;
  j["seeds"] = report.seeds;
  j["template"] = {{"dataset", report.prompt_template.dataset},
                   {"text", report.prompt_template.text},
                   {"initializer_word", report.prompt_template.initializer_word}};
  auto cells = nlohmann::ordered_json::array();
  for (const auto& c : report.cells) {
    nlohmann::ordered_json cj;
    cj["method"] = method_name(c.method);
    cj["shots"] = c.shots;
    cj["seed"] = c.seed;
    cj["accuracy"] = c.accuracy;
    cj["wall_clock_s"] = c.wall_clock_s;
    cells.push_back(cj);
  }
  j["cells"] = cells;
  auto summary = nlohmann::ordered_json::array();
  for (const auto& s : report.summary) {
    nlohmann::ordered_json sj;
    sj["method"] = method_name(s.method);
    sj["shots"] = s.shots;
    sj["mean_accuracy"] = s.mean;
    if (s.stddev) {
      sj["std_accuracy"] = *s.stddev;
    } else {
      sj["std_accuracy"] = nullptr;
    }
    summary.push_back(sj);
  }
  j["summary"] = summary;
  j["wall_clock_s"] = report.wall_clock_s;
  return j.dump(2) + "\n";
}

std::string benchmark_svg(const BenchmarkReport& report) {
  constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 160, kTop = 30, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const std::size_t n = report.shots.size();
  auto x_of = [&](std::size_t i) { return kLeft + (n == 1 ? plot_w / 2 : plot_w * static_cast<double>(i) / (n - 1)); };
  auto y_of = [&](double acc) { return kTop + plot_h * (1.0 - acc); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
     << kTop + plot_h << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
     << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double acc = tick / 4.0;
    os << "  <text x=\"" << kLeft - 8 << "\" y=\"" << fixed(y_of(acc) + 4, 1)
       << "\" font-size=\"11\" text-anchor=\"end\">" << fixed(acc, 2) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    os << "  <text x=\"" << fixed(x_of(i), 1) << "\" y=\"" << kTop + plot_h + 18
       << "\" font-size=\"11\" text-anchor=\"middle\">" << report.shots[i] << "</text>\n";
  }
  os << "  <text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
     << "\" font-size=\"12\" text-anchor=\"middle\">shots per class</text>\n";
  os << "  <text x=\"15\" y=\"" << kTop + plot_h / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
     << kTop + plot_h / 2 << ")\">accuracy</text>\n";

  for (std::size_t m = 0; m < report.methods.size(); ++m) {
    const char* color = colors[m % std::size(colors)];
    std::ostringstream pts;
    for (std::size_t i = 0; i < n; ++i) {
      double mean = 0.0;
      for (const auto& s : report.summary) {
        if (s.method == report.methods[m] && s.shots == report.shots[i]) mean = s.mean;
      }
      if (i) pts << ' ';
      pts << fixed(x_of(i), 1) << ',' << fixed(y_of(mean), 1);
    }
    os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts.str()
       << "\"/>\n";
    const double ly = kTop + 20 + 20.0 * static_cast<double>(m);
    os << "  <line x1=\"" << kLeft + plot_w + 15 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + plot_w + 35
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "  <text x=\"" << kLeft + plot_w + 40 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
       << method_name(report.methods[m]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void save_latent(const Tensor& latent, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  binio::write_magic(out, kLatentMagic);
  binio::write_u32(out, kLatentFormatVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(latent.size()));
  binio::write_f32s(out, latent.data());
}

Tensor load_latent(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open latent file " + path.string());
  binio::expect_magic(in, kLatentMagic, "latent");
  const std::uint32_t version = binio::read_u32(in);
  if (version != kLatentFormatVersion) {
    throw FormatError("latent file version " + std::to_string(version) + " is not supported");
  }
  const std::uint32_t dim = binio::read_u32(in);
  if (dim > (1u << 24)) throw FormatError("latent dimension is implausible");
  Tensor t({dim});
  binio::read_f32s(in, t.data());
  return t;
}

void save_latent_set(const LabeledLatents& set, const std::filesystem::path& path, std::span<const bool> labeled) {
  const std::size_t dim = set.latents.empty() ? 0 : set.latents[0].size();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  binio::write_magic(out, kLatentSetMagic);
  binio::write_u32(out, kLatentFormatVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(dim));
  binio::write_u32(out, static_cast<std::uint32_t>(set.size()));
  binio::write_u32(out, static_cast<std::uint32_t>(set.class_names.size()));
  for (const auto& name : set.class_names) binio::write_string(out, name);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.latents[i].size() != dim) throw ShapeError("save_latent_set: latents differ in length");
    const bool has_label = labeled.empty() || labeled[i];
    binio::write_i32(out, has_label ? static_cast<std::int32_t>(set.labels[i]) : -1);
    binio::write_f32s(out, set.latents[i].data());
  }
}

LabeledLatents load_latent_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open latent set " + path.string());
  binio::expect_magic(in, kLatentSetMagic, "latent set");
  const std::uint32_t version = binio::read_u32(in);
  if (version != kLatentFormatVersion) {
    throw FormatError("latent set version " + std::to_string(version) + " is not supported");
  }
  const std::uint32_t dim = binio::read_u32(in);
  const std::uint32_t count = binio::read_u32(in);
  const std::uint32_t classes = binio::read_u32(in);
  if (dim > (1u << 24) || count > (1u << 26) || classes > (1u << 20)) throw FormatError("latent set header is implausible");
  LabeledLatents set;
  for (std::uint32_t c = 0; c < classes; ++c) set.class_names.push_back(binio::read_string(in));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::int32_t label = binio::read_i32(in);
    if (label >= static_cast<std::int32_t>(classes)) throw FormatError("latent set label out of range");
    Tensor t({dim});
    binio::read_f32s(in, t.data());
    set.latents.push_back(std::move(t));
    set.labels.push_back(label < 0 ? std::numeric_limits<std::size_t>::max() : static_cast<std::size_t>(label));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after latent set");
  return set;
}

LabeledLatents load_latent_folder(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("latent folder " + root.string() + " does not exist");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw IoError("latent folder " + root.string() + " has no class directories");
  LabeledLatents set;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    set.class_names.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      set.latents.push_back(load_latent(f));
      set.labels.push_back(c);
    }
  }
  return set;
}

}  // namespace gcpl
