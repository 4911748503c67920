#include <sstream>

#include "doctest.h"
#include "stubs.hpp"

#include "gcpl/errors.hpp"
#include "gcpl/prompt_learning.hpp"

using namespace gcpl;
using gcpl::testing::LinearPredictor;

TEST_SUITE_BEGIN("prompt_learning");

namespace {

DenoiserModel frozen_mlp(std::uint64_t seed, std::size_t cond = 4) {
  Rng rng(seed);
  DenoiserModel m = DenoiserModel::initialized(
      {.latent_dim = 4, .time_embed_dim = 4, .cond_dim = cond, .hidden_dim = 16, .timesteps = 100}, rng);
  m.freeze();
  return m;
}

std::vector<std::vector<Tensor>> random_support(std::size_t classes, std::size_t shots, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<Tensor>> out(classes);
  for (auto& s : out) {
    for (std::size_t k = 0; k < shots; ++k) s.push_back(standard_normal({4}, rng));
  }
  return out;
}

DrawnSample random_sample(std::size_t cls, int timesteps, Rng& rng) {
  DrawnSample s;
  s.class_index = cls;
  s.x0 = standard_normal({4}, rng);
  s.t = uniform_int(rng, 1, timesteps);
  s.eps = standard_normal({4}, rng);
  return s;
}

std::string store_bytes(std::span<const ClassPrompt> prompts) {
  std::ostringstream os;
  save_prompts(prompts, os);
  return os.str();
}

}  // namespace

TEST_CASE("single-sample GCPL loss is the noise-prediction MSE") {
  const DenoiserModel m = frozen_mlp(1);
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  Rng rng(2);
  const DrawnSample d = random_sample(0, 100, rng);
  const Tensor prompt = standard_normal({4}, rng);
  const PromptLoss l = gcpl_loss(std::span(&d, 1), prompt, m, s);
  const Tensor pred = predict_noise(m, noise_latent(d.x0, d.eps, s.alpha_bar(d.t)), d.t, prompt);
  CHECK(l.loss == doctest::Approx(mse(d.eps, pred)).epsilon(1e-6));
}

TEST_CASE("two-sample contrastive loss matches the hand-computed reference") {
  const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  LinearPredictor p(2, 2, 1000);
  p.a = {0.1, 0.0, 0.05, -0.2};
  p.e = {1.0, 0.5, 0.0, 1.0};
  p.b = {0.1, -0.1};
  const std::vector<ConditionEmbedding> prompts = {Tensor::vector({0.3f, -0.2f}), Tensor::vector({-0.5f, 0.4f})};
  const std::vector<DrawnSample> batch = {
      {0, Tensor::vector({1.0f, -1.0f}), 10, Tensor::vector({0.5f, 0.25f})},
      {1, Tensor::vector({-0.5f, 2.0f}), 500, Tensor::vector({-1.0f, 0.75f})},
  };
  const ContrastiveLoss l = comple_loss(batch, prompts, 0.5, p, s);
  // Reference values from tests/oracles/oracles.py.
  CHECK(l.positive == doctest::Approx(0.2889456869266248).epsilon(1e-6));
  CHECK(l.negative == doctest::Approx(0.8330628384999252).epsilon(1e-6));
  CHECK(l.loss == doctest::Approx(-0.1275857323233378).epsilon(1e-6));
  CHECK(l.grads[0][0] == doctest::Approx(-0.3994795773178339).epsilon(1e-5));
  CHECK(l.grads[0][1] == doctest::Approx(-0.15007108692079782).epsilon(1e-5));
  CHECK(l.grads[1][0] == doctest::Approx(0.5474982626736165).epsilon(1e-5));
  CHECK(l.grads[1][1] == doctest::Approx(-0.0415314953774214).epsilon(1e-5));
}

TEST_CASE("contrastive loss with one sample and no negatives reduces to GCPL") {
  const DenoiserModel m = frozen_mlp(3);
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const DrawnSample d = random_sample(0, 100, rng);
    const std::vector<ConditionEmbedding> prompts = {standard_normal({4}, rng)};
    const PromptLoss g = gcpl_loss(std::span(&d, 1), prompts[0], m, s);
    const ContrastiveLoss c = comple_loss(std::span(&d, 1), prompts, 0.3, m, s);
    CHECK(c.loss == doctest::Approx(g.loss).epsilon(1e-12));
    CHECK(c.negative == 0.0);
    CHECK(max_abs_difference(c.grads[0], g.grad) < 1e-7);
  }
}

TEST_CASE("same-class pairs never enter the negative term") {
  const DenoiserModel m = frozen_mlp(5);
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  Rng rng(6);
  const std::vector<DrawnSample> batch = {random_sample(0, 100, rng), random_sample(0, 100, rng)};
  const std::vector<ConditionEmbedding> prompts = {standard_normal({4}, rng), standard_normal({4}, rng)};
  const ContrastiveLoss c = comple_loss(batch, prompts, 1.0, m, s);
  CHECK(c.negative == 0.0);
  CHECK(c.touched[0]);
  CHECK_FALSE(c.touched[1]);
  CHECK(squared_norm(c.grads[1].data()) == 0.0);
}

TEST_CASE("negative margin caps each pair and zeroes its gradient") {
  const DenoiserModel m = frozen_mlp(7);
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  Rng rng(8);
  const std::vector<DrawnSample> batch = {random_sample(0, 100, rng), random_sample(1, 100, rng)};
  const std::vector<ConditionEmbedding> prompts = {standard_normal({4}, rng), standard_normal({4}, rng)};
  const ContrastiveLoss capped = comple_loss(batch, prompts, 0.7, m, s, 1e-9);
  const ContrastiveLoss positive_only = comple_loss(batch, prompts, 0.0, m, s);
  CHECK(capped.negative == doctest::Approx(1e-9));
  for (std::size_t c = 0; c < 2; ++c) CHECK(max_abs_difference(capped.grads[c], positive_only.grads[c]) == 0.0);
}

TEST_CASE("prompt gradients agree with finite differences") {
  const DenoiserModel m = frozen_mlp(9);
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  Rng rng(10);
  std::vector<DrawnSample> batch;
  for (std::size_t j = 0; j < 3; ++j) batch.push_back(random_sample(j % 2, 100, rng));
  std::vector<ConditionEmbedding> prompts = {standard_normal({4}, rng), standard_normal({4}, rng)};

  const PromptLoss g = gcpl_loss(batch, prompts[0], m, s);
  const Tensor fd = finite_difference_gradient([&](const Tensor& p) { return gcpl_loss(batch, p, m, s).loss; },
                                               prompts[0]);
  CHECK(relative_error(g.grad, fd) < 1e-3);

  const ContrastiveLoss c = comple_loss(batch, prompts, 0.4, m, s);
  for (std::size_t k = 0; k < 2; ++k) {
    const Tensor fdk = finite_difference_gradient(
        [&](const Tensor& p) {
          auto ps = prompts;
          ps[k] = p;
          return comple_loss(batch, ps, 0.4, m, s).loss;
        },
        prompts[k]);
    CHECK(relative_error(c.grads[k], fdk) < 1e-3);
  }
}

TEST_CASE("losses require a frozen backbone") {
  Rng rng(11);
  const DenoiserModel open = DenoiserModel::initialized(
      {.latent_dim = 4, .time_embed_dim = 4, .cond_dim = 4, .hidden_dim = 8, .timesteps = 100}, rng);
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  const DrawnSample d = random_sample(0, 100, rng);
  CHECK_THROWS_AS(gcpl_loss(std::span(&d, 1), Tensor({4}), open, s), ContractError);
}

TEST_CASE("initial prompts depend only on seed and class") {
  PromptInitializer init;
  init.concept_embedding = Tensor::vector({1, 2, 3});
  init.sigma = 0.0;
  CHECK(initial_prompt(init, 3, 0, 1) == init.concept_embedding);
  init.sigma = 0.02;
  CHECK(initial_prompt(init, 3, 2, 5) == initial_prompt(init, 3, 2, 5));
  CHECK_FALSE(initial_prompt(init, 3, 2, 5) == initial_prompt(init, 3, 1, 5));
  CHECK(max_abs_difference(initial_prompt(init, 3, 2, 5), init.concept_embedding) < 0.2);
  CHECK_THROWS_AS(initial_prompt(init, 4, 0, 0), ShapeError);
  init.mode = PromptInit::kRandomNormal;
  CHECK(initial_prompt(init, 7, 0, 0).size() == 7);
}

TEST_CASE("GCPL training is deterministic and lowers the loss") {
  const DenoiserModel m = frozen_mlp(12);
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  const auto support = random_support(1, 4, 13);
  PromptInitializer init;
  init.mode = PromptInit::kRandomNormal;
  GCPLConfig cfg;
  cfg.lr = 1e-2;
  cfg.epochs = 300;
  cfg.seed = 3;
  const GCPLResult a = train_gcpl(support[0], 0, "a", init, cfg, m, s);
  const GCPLResult b = train_gcpl(support[0], 0, "a", init, cfg, m, s);
  CHECK(a.prompt.embedding == b.prompt.embedding);
  REQUIRE(a.losses.size() == 300);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    head += a.losses[i];
    tail += a.losses[250 + i];
  }
  CHECK(tail < head);
}

TEST_CASE("seed-aligned CoMPLe without the contrastive term reproduces GCPL exactly") {
  const DenoiserModel m = frozen_mlp(14);
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  const auto support = random_support(4, 3, 15);
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  PromptInitializer init;
  init.concept_embedding = Tensor::vector({0.1f, -0.1f, 0.2f, 0.0f});

  GCPLConfig g;
  g.lr = 3e-3;
  g.epochs = 60;
  g.batch_size = 1;
  g.seed = 21;
  CoMPLeConfig c;
  c.lr = g.lr;
  c.epochs = g.epochs;
  c.batch_size = 4;
  c.lambda = 0.0;
  c.optimizer.eps = g.optimizer.eps / 4;
  c.seed = g.seed;

  const CoMPLeResult joint = train_comple(support, names, init, c, m, s);
  std::vector<ClassPrompt> separate;
  for (std::size_t k = 0; k < 4; ++k) separate.push_back(train_gcpl(support[k], k, names[k], init, g, m, s).prompt);
  CHECK(store_bytes(joint.prompts) == store_bytes(separate));
}

TEST_CASE("CoMPLe with fewer classes than the batch still covers every class") {
  const DenoiserModel m = frozen_mlp(16);
  const NoiseSchedule s = NoiseSchedule::linear(100, 1e-4, 0.02);
  const auto support = random_support(2, 2, 17);
  const std::vector<std::string> names = {"a", "b"};
  PromptInitializer init;
  init.mode = PromptInit::kRandomNormal;
  CoMPLeConfig c;
  c.epochs = 5;
  c.batch_size = 4;
  const CoMPLeResult r = train_comple(support, names, init, c, m, s);
  for (std::size_t k = 0; k < 2; ++k) CHECK_FALSE(r.prompts[k].embedding == initial_prompt(init, 4, k, c.seed));
}

TEST_CASE("cosine distance of orthogonal prompts is one") {
  std::vector<ClassPrompt> p(2);
  p[0].embedding = Tensor::vector({1, 0});
  p[1].embedding = Tensor::vector({0, 3});
  CHECK(mean_pairwise_cosine_distance(p) == doctest::Approx(1.0));
  p[1].embedding = Tensor::vector({2, 0});
  CHECK(mean_pairwise_cosine_distance(p) == doctest::Approx(0.0));
}

TEST_CASE("embedding stores round-trip and reject corruption") {
  std::vector<ClassPrompt> p = {{0, "tabby cat", Tensor::vector({1, 2}), "cat"}, {1, "", Tensor::vector({-1, 0.5f}), ""}};
  const std::string bytes = store_bytes(p);
  std::istringstream is(bytes);
  const auto back = load_prompts(is);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "tabby cat");
  CHECK(back[1].embedding == p[1].embedding);
  CHECK(store_bytes(back) == bytes);

  std::string bad = bytes;
  bad[1] = '?';
  std::istringstream bis(bad);
  CHECK_THROWS_AS(load_prompts(bis), FormatError);
  std::string ver = bytes;
  ver[7] = 9;
  std::istringstream vis(ver);
  CHECK_THROWS_AS(load_prompts(vis), FormatError);
}

TEST_SUITE_END();
