// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all pass.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fixture.hpp"
#include "stubs.hpp"

#include "gcpl/binary_io.hpp"
#include "gcpl/harness.hpp"

using namespace gcpl;
using gcpl::testing::Fixture;
using gcpl::testing::LinearPredictor;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kSigmas = 3.0;
constexpr std::size_t kMomentDraws = 10000;
constexpr double kMomentBudgetS = 10.0;
constexpr double kFdStep = 1e-3;
constexpr double kFdRelTol = 1e-3;
constexpr int kFdConfigs = 24;
constexpr double kFdBudgetS = 30.0;
constexpr double kOracleLinf = 1e-3;
constexpr double kOracleBudgetS = 60.0;
constexpr double kReductionTol = 1e-6;
constexpr int kReductionDraws = 100;
constexpr double kPosteriorTol = 1e-6;
constexpr double kShiftTol = 1e-7;
constexpr int kErrorMatrices = 1000;
constexpr double kAccuracyTarget = 0.90;
constexpr double kAboveChance = 0.20;
constexpr double kEndToEndBudgetS = 15.0 * 60.0;
constexpr double kContrastiveSlack = 0.02;
constexpr std::size_t kQueries = 200;
constexpr std::size_t kMcPairs = 128;
const std::vector<std::uint64_t> kSeeds = {0, 1, 2};

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

std::string model_bytes(const DenoiserModel& m) {
  std::ostringstream os;
  save_model(m, os);
  return os.str();
}

std::string store_bytes(std::span<const ClassPrompt> prompts) {
  std::ostringstream os;
  save_prompts(prompts, os);
  return os.str();
}

BenchmarkConfig base_benchmark(const Fixture& fx) {
  BenchmarkConfig cfg;
  cfg.seeds = kSeeds;
  cfg.queries_per_class = kQueries / fx.spec.n_classes;
  cfg.classifier.n_mc = kMcPairs;
  cfg.initializer.concept_embedding = mean_embedding(fx.conditions);
  return cfg;
}

// ---------------------------------------------------------------------------

Outcome forward_moments() {
  const auto start = Clock::now();
  const NoiseSchedule s = gcpl::testing::reference_schedule();
  const Tensor x0 = Tensor::vector({0.8f});
  Rng rng = derive_stream(2024, StreamTag::kData);
  bool ok = true;
  std::string detail;
  for (int t : {1, 250, 500, 999}) {
    const double ab = s.alpha_bar(t);
    double sum = 0.0, sq = 0.0;
    std::vector<double> xs(kMomentDraws);
    for (auto& x : xs) {
      x = add_noise(x0, standard_normal({1}, rng), t, s).xt[0];
      sum += x;
    }
    const double mean = sum / kMomentDraws;
    for (double x : xs) sq += (x - mean) * (x - mean);
    const double var = sq / (kMomentDraws - 1);
    const double want_mean = std::sqrt(ab) * x0[0];
    const double want_var = 1.0 - ab;
    const double z_mean = (mean - want_mean) / std::sqrt(want_var / kMomentDraws);
    const double z_var = (var - want_var) / (want_var * std::sqrt(2.0 / (kMomentDraws - 1)));
    ok = ok && std::abs(z_mean) <= kSigmas && std::abs(z_var) <= kSigmas;
    detail += fmt("t=%d z_mean=%+.2f z_var=%+.2f; ", t, z_mean, z_var);
  }
  const double took = seconds_since(start);
  return {ok && took < kMomentBudgetS, detail + fmt("%.2fs", took)};
}

Outcome gradient_exactness(const Fixture& fx) {
  const auto start = Clock::now();
  Rng rng = derive_stream(7, StreamTag::kData, 99);
  double worst = 0.0;
  for (int cfg = 0; cfg < kFdConfigs; ++cfg) {
    const std::size_t batch = 1 + uniform_index(rng, 5);
    std::vector<DrawnSample> samples;
    for (std::size_t j = 0; j < batch; ++j) {
      const std::size_t row = uniform_index(rng, fx.data.train.size());
      DrawnSample d;
      d.class_index = uniform_index(rng, 3);
      d.x0 = fx.data.train.latents[row];
      d.t = uniform_int(rng, 1, fx.schedule.timesteps());
      d.eps = standard_normal({16}, rng);
      samples.push_back(std::move(d));
    }
    std::vector<ConditionEmbedding> prompts;
    for (int k = 0; k < 3; ++k) prompts.push_back(standard_normal({16}, rng));

    // GCPL: all samples share prompt 0.
    const PromptLoss g = gcpl_loss(samples, prompts[0], fx.model, fx.schedule);
    const Tensor fd = finite_difference_gradient(
        [&](const Tensor& p) { return gcpl_loss(samples, p, fx.model, fx.schedule).loss; }, prompts[0], kFdStep);
    worst = std::max(worst, relative_error(g.grad, fd));

    const double lambda = 0.5 * std::abs(standard_normal(rng));
    const ContrastiveLoss c = comple_loss(samples, prompts, lambda, fx.model, fx.schedule);
    for (std::size_t k = 0; k < prompts.size(); ++k) {
      if (!c.touched[k]) continue;
      const Tensor fdk = finite_difference_gradient(
          [&](const Tensor& p) {
            auto ps = prompts;
            ps[k] = p;
            return comple_loss(samples, ps, lambda, fx.model, fx.schedule).loss;
          },
          prompts[k], kFdStep);
      worst = std::max(worst, relative_error(c.grads[k], fdk));
    }
  }
  const double took = seconds_since(start);
  return {worst < kFdRelTol && took < kFdBudgetS,
          fmt("%d configurations, worst relative error %.2e, %.2fs", kFdConfigs, worst, took)};
}

Outcome closed_form_oracle(const Fixture& fx) {
  const auto start = Clock::now();
  constexpr std::size_t kLatent = 16, kCond = 8;
  Rng rng = derive_stream(11, StreamTag::kModelInit);
  const LinearPredictor stub = LinearPredictor::random(kLatent, kCond, fx.schedule.timesteps(), rng);
  const Episode ep = build_episode(fx.data.train, fx.data.test, 4, 8, 3);
  const std::vector<Tensor>& support = ep.support[0];

  // Optimum of the expected loss: least squares E c = -(b + A s x_mean),
  // s = E_t sqrt(alpha_bar_t).
  double s = 0.0;
  for (int t = 1; t <= fx.schedule.timesteps(); ++t) s += std::sqrt(fx.schedule.alpha_bar(t));
  s /= fx.schedule.timesteps();
  Eigen::VectorXd x_mean = Eigen::VectorXd::Zero(kLatent);
  for (const auto& x : support) {
    for (std::size_t i = 0; i < kLatent; ++i) x_mean[i] += x[i];
  }
  x_mean /= static_cast<double>(support.size());
  const Eigen::MatrixXd a = Eigen::Map<const Eigen::Matrix<double, kLatent, kLatent, Eigen::RowMajor>>(stub.a.data());
  const Eigen::MatrixXd e = Eigen::Map<const Eigen::Matrix<double, kLatent, kCond, Eigen::RowMajor>>(stub.e.data());
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(stub.b.data(), kLatent);
  const Eigen::VectorXd optimum = e.colPivHouseholderQr().solve(-(b + s * a * x_mean));

  // Annealed lr with growing batches: the stationary jitter of the iterate
  // scales with sqrt(lr * gradient noise), so each phase lowers the floor.
  struct Phase {
    double lr;
    std::size_t steps, batch;
    double beta1;
  };
  const Phase phases[] = {{1e-2, 2000, 32, 0.9},
                          {1e-3, 4000, 64, 0.9},
                          {1e-4, 10000, 256, 0.9},
                          {2e-5, 20000, 512, 0.99},
                          {4e-6, 20000, 1024, 0.99}};
  Tensor prompt({kCond});
  std::uint64_t seed = 5;
  for (const Phase& ph : phases) {
    PromptInitializer init;
    init.concept_embedding = prompt;
    init.sigma = 0.0;
    GCPLConfig cfg;
    cfg.lr = ph.lr;
    cfg.epochs = ph.steps;
    cfg.batch_size = ph.batch;
    cfg.optimizer.beta1 = ph.beta1;
    cfg.optimizer.weight_decay = 0.0;
    cfg.seed = seed++;
    prompt = train_gcpl(support, 0, "class_0", init, cfg, stub, fx.schedule).prompt.embedding;
  }
  double linf = 0.0;
  for (std::size_t j = 0; j < kCond; ++j) linf = std::max(linf, std::abs(prompt[j] - optimum[j]));
  const double took = seconds_since(start);
  return {linf < kOracleLinf && took < kOracleBudgetS,
          fmt("L_inf distance to least-squares optimum %.2e (|c*|_inf %.3f), %.2fs", linf,
              optimum.lpNorm<Eigen::Infinity>(), took)};
}

Outcome reduction_identity(const Fixture& fx) {
  Rng rng = derive_stream(13, StreamTag::kData, 5);
  double worst = 0.0;
  for (int i = 0; i < kReductionDraws; ++i) {
    DrawnSample d;
    d.x0 = fx.data.train.latents[uniform_index(rng, fx.data.train.size())];
    d.t = uniform_int(rng, 1, fx.schedule.timesteps());
    d.eps = standard_normal({16}, rng);
    const std::vector<ConditionEmbedding> prompt = {standard_normal({16}, rng)};
    const double g = gcpl_loss(std::span(&d, 1), prompt[0], fx.model, fx.schedule).loss;
    const double c = comple_loss(std::span(&d, 1), prompt, 0.0, fx.model, fx.schedule).loss;
    worst = std::max(worst, std::abs(g - c));
  }

  // Seed-aligned full runs: GCPL one exemplar per step, CoMPLe one slot per
  // class with eps scaled by the batch size.
  const Episode ep = build_episode(fx.data.train, fx.data.test, 4, 16, 0);
  PromptInitializer init;
  init.concept_embedding = mean_embedding(fx.conditions);
  GCPLConfig g;
  g.batch_size = 1;
  g.seed = 0;
  CoMPLeConfig c;
  c.lr = g.lr;
  c.epochs = g.epochs;
  c.batch_size = 4;
  c.lambda = 0.0;
  c.optimizer.eps = g.optimizer.eps / 4.0;
  c.seed = g.seed;
  std::vector<ClassPrompt> separate;
  for (std::size_t k = 0; k < 4; ++k) {
    separate.push_back(train_gcpl(ep.support[k], k, ep.class_names[k], init, g, fx.model, fx.schedule).prompt);
  }
  const CoMPLeResult joint = train_comple(ep.support, ep.class_names, init, c, fx.model, fx.schedule);
  const bool same = store_bytes(separate) == store_bytes(joint.prompts);
  return {worst < kReductionTol && same,
          fmt("max |comple - gcpl| over %d draws %.2e; seed-aligned stores %s (%zu epochs)", kReductionDraws, worst,
              same ? "bit-identical" : "DIFFER", g.epochs)};
}

Outcome classifier_equivalence() {
  Rng rng = derive_stream(17, StreamTag::kClassifierPairs);
  std::size_t argmax_mismatch = 0;
  double worst_prob = 0.0, worst_shift = 0.0;
  for (int m = 0; m < kErrorMatrices; ++m) {
    ErrorMatrix em;
    em.classes = 2 + uniform_index(rng, 15);
    em.pairs = 1 + uniform_index(rng, 64);
    em.errors.resize(em.classes * em.pairs);
    const double level = std::exp(2.0 * standard_normal(rng));
    for (auto& v : em.errors) v = level * std::abs(1.0 + 0.5 * standard_normal(rng));
    const auto means = em.means();
    const auto relative = posterior(means);
    const auto lse = posterior_log_sum_exp(means);
    const auto arg = [](const std::vector<double>& p) {
      return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    };
    argmax_mismatch += arg(relative) != arg(lse);
    argmax_mismatch += arg(relative) != argmin_error(means);
    ErrorMatrix shifted = em;
    const double shift = 50.0 * standard_normal(rng);
    for (auto& v : shifted.errors) v += shift;
    const auto moved = posterior(shifted.means());
    for (std::size_t c = 0; c < em.classes; ++c) {
      worst_prob = std::max(worst_prob, std::abs(relative[c] - lse[c]));
      worst_shift = std::max(worst_shift, std::abs(relative[c] - moved[c]));
    }
  }
  return {argmax_mismatch == 0 && worst_prob < kPosteriorTol && worst_shift < kShiftTol,
          fmt("%d matrices: argmax mismatches %zu, max |relative - logsumexp| %.2e, max shift change %.2e",
              kErrorMatrices, argmax_mismatch, worst_prob, worst_shift)};
}

struct NullResult {
  double accuracy = 0.0;
  std::size_t n = 0;
  std::size_t classes = 0;
};

Outcome end_to_end(const Fixture& fx, NullResult& null_out) {
  const auto start = Clock::now();
  BenchmarkConfig cfg = base_benchmark(fx);
  cfg.methods = {Method::kGCPL, Method::kRandomPrompts};
  cfg.shots = {1, 4, 8, 16};
  const BenchmarkReport r = run_benchmark(fx.data, fx.conditions, fx.model, fx.schedule, cfg);
  const double took = seconds_since(start);

  const double chance = 1.0 / static_cast<double>(fx.spec.n_classes);
  bool ok = true;
  std::string detail = "GCPL mean accuracy by shots:";
  for (std::size_t shots : cfg.shots) {
    const ShotSummary& s = r.at(Method::kGCPL, shots);
    ok = ok && s.mean >= chance + kAboveChance;
    detail += fmt(" %zu:%.4f", shots, s.mean);
  }
  const double one = r.at(Method::kGCPL, 1).mean;
  const double sixteen = r.at(Method::kGCPL, 16).mean;
  ok = ok && sixteen >= kAccuracyTarget && sixteen >= one && took < kEndToEndBudgetS;

  double null_sum = 0.0;
  for (const auto& c : r.cells) {
    if (c.method == Method::kRandomPrompts && c.shots == 16) null_sum += c.accuracy;
  }
  null_out = {null_sum / kSeeds.size(), kSeeds.size() * kQueries, fx.spec.n_classes};
  return {ok, detail + fmt("; %zu seeds x %zu queries, N=%zu; %.1fs", kSeeds.size(), kQueries, kMcPairs, took)};
}

Outcome contrastive_effect(const Fixture& fx, NullResult& null_out) {
  BenchmarkConfig cfg = base_benchmark(fx);
  cfg.methods = {Method::kGCPL, Method::kCoMPLe, Method::kRandomPrompts};
  cfg.shots = {16};
  const BenchmarkReport r = run_benchmark(fx.data, fx.conditions, fx.model, fx.schedule, cfg);
  const double gcpl = r.at(Method::kGCPL, 16).mean;
  const double comple = r.at(Method::kCoMPLe, 16).mean;
  null_out = {r.at(Method::kRandomPrompts, 16).mean, kSeeds.size() * kQueries, fx.spec.n_classes};

  PromptInitializer init = cfg.initializer;
  double with_sum = 0.0, without_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : kSeeds) {
    const Episode ep = build_episode(fx.data.train, fx.data.test, fx.spec.n_classes, 16, seed);
    CoMPLeConfig c = cfg.comple;
    c.seed = seed;
    const double with = mean_pairwise_cosine_distance(
        train_comple(ep.support, ep.class_names, init, c, fx.model, fx.schedule).prompts);
    c.lambda = 0.0;
    const double without = mean_pairwise_cosine_distance(
        train_comple(ep.support, ep.class_names, init, c, fx.model, fx.schedule).prompts);
    with_sum += with;
    without_sum += without;
    per_seed += fmt(" %.6f/%.6f", with, without);
  }
  const double with_mean = with_sum / kSeeds.size();
  const double without_mean = without_sum / kSeeds.size();
  return {comple >= gcpl - kContrastiveSlack && with_mean > without_mean,
          fmt("16-shot accuracy CoMPLe %.4f vs GCPL %.4f; cosine distance lambda=%.3g %.6f vs lambda=0 %.6f "
              "(per seed:%s)",
              comple, gcpl, cfg.comple.lambda, with_mean, without_mean, per_seed.c_str())};
}

Outcome null_control(const std::vector<std::pair<std::string, NullResult>>& results) {
  bool ok = true;
  std::string detail;
  for (const auto& [name, r] : results) {
    const double p = 1.0 / static_cast<double>(r.classes);
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(r.n));
    const double z = (r.accuracy - p) / sigma;
    ok = ok && std::abs(z) <= kSigmas;
    detail += fmt("%s: %.4f vs chance %.4f (z=%+.2f, n=%zu); ", name.c_str(), r.accuracy, p, z, r.n);
  }
  return {ok, detail};
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" GCPL_CLI "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto bytes = binio::read_file_bytes(entry.path());
    files[entry.path().filename().string()] = std::string(bytes.begin(), bytes.end());
  }
  return files;
}

Outcome determinism() {
  const fs::path dir = fs::path(GCPL_FIXTURE_DIR) / "determinism";
  const fs::path backbone = fs::path(GCPL_FIXTURE_DIR) / "reference" / "backbone.gcpl";
  const fs::path conditions = fs::path(GCPL_FIXTURE_DIR) / "reference" / "conditions.emb";
  const std::string shared = " --set paths.backbone=" + backbone.string() + " --set paths.conditions=" +
                             conditions.string() +
                             " --set gcpl.epochs=100 --set comple.epochs=100 --set classifier.n_mc=32"
                             " --set train.queries_per_class=10 --set benchmark.shots=1,4"
                             " --set benchmark.seeds=0,1 --set benchmark.queries_per_class=10"
                             " --set benchmark.methods=gcpl,comple,random_prompts";
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"pretrain", " --set backbone.steps=200 --set paths.backbone= --set paths.conditions= pretrain"},
      {"train-gcpl", shared + " train --method gcpl"},
      {"classify", shared + " --set paths.embeddings=" + (dir / "train-gcpl" / "prompts.emb").string() +
                       " --set paths.queries=" + (dir / "train-gcpl" / "queries.lat").string() + " classify"},
      {"train-comple", shared + " train --method comple"},
      {"benchmark", shared + " benchmark"},
  };
  std::string detail;
  bool ok = true;
  for (const auto& [name, args] : commands) {
    const fs::path out = dir / name;
    fs::remove_all(out);
    const std::string full = "-o \"" + out.string() + "\"" + args;
    const int first_code = run_cli(full);
    const auto first = snapshot(out);
    const int second_code = run_cli(full);
    const auto second = snapshot(out);
    const bool same = first_code == 0 && second_code == 0 && first == second;
    ok = ok && same;
    detail += fmt("%s %s (%zu files); ", name.c_str(), same ? "identical" : "DIFFERS", first.size());
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const auto start = Clock::now();
  const Fixture& reference = gcpl::testing::reference_fixture();
  const Fixture& hard = gcpl::testing::hard_fixture();
  const std::string reference_before = model_bytes(reference.model);
  const std::string hard_before = model_bytes(hard.model);

  NullResult null_reference, null_hard;
  std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, [] { return forward_moments(); }},
      {2, [&] { return gradient_exactness(reference); }},
      {3, [&] { return closed_form_oracle(reference); }},
      {4, [&] { return reduction_identity(reference); }},
      {6, [] { return classifier_equivalence(); }},
      {7, [&] { return end_to_end(reference, null_reference); }},
      {8, [&] { return contrastive_effect(hard, null_hard); }},
      {9, [&] { return null_control({{"reference", null_reference}, {"hard", null_hard}}); }},
      {10, [] { return determinism(); }},
      {5,
       [&] {
         const bool same = model_bytes(reference.model) == reference_before && model_bytes(hard.model) == hard_before;
         return Outcome{same, same ? "backbone bytes unchanged after every training run above"
                                   : "backbone bytes CHANGED during training"};
       }},
  };
  const char* names[] = {"",
                         "forward-process moments",
                         "gradient exactness",
                         "closed-form oracle",
                         "reduction identity",
                         "frozen-backbone invariant",
                         "classifier equivalences",
                         "end-to-end desk-scale accuracy",
                         "contrastive effect",
                         "null control",
                         "determinism"};

  std::map<int, Outcome> outcomes;
  for (auto& [id, fn] : criteria) {
    try {
      outcomes[id] = fn();
    } catch (const std::exception& e) {
      outcomes[id] = {false, std::string("exception: ") + e.what()};
    }
    std::fprintf(stderr, "  finished criterion %d\n", id);
  }
  int failures = 0;
  for (const auto& [id, o] : outcomes) {
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, names[id], o.detail.c_str());
    failures += !o.pass;
  }
  std::printf("%d/%zu criteria passed in %.1fs\n", static_cast<int>(outcomes.size()) - failures, outcomes.size(),
              seconds_since(start));
  return failures == 0 ? 0 : 1;
}
