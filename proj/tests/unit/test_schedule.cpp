#include <cmath>
#include <stdexcept>

#include "doctest.h"

#include "gcpl/schedule.hpp"

using namespace gcpl;

TEST_SUITE_BEGIN("schedule");

TEST_CASE("linear schedule matches reference alpha_bar values") {
  const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  CHECK(s.timesteps() == 1000);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(0.02));
  // Reference values from tests/oracles/oracles.py.
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-12));
  CHECK(s.alpha_bar(10) == doctest::Approx(0.9981052047858344).epsilon(1e-12));
  CHECK(s.alpha_bar(500) == doctest::Approx(0.07858724288177821).epsilon(1e-10));
  CHECK(s.alpha_bar(1000) == doctest::Approx(4.0358297653756754e-05).epsilon(1e-9));
}

TEST_CASE("alpha_bar is strictly decreasing and inside (0, 1)") {
  const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  for (int t = 2; t <= 1000; ++t) {
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.alpha_bar(t) > 0.0);
  }
}

TEST_CASE("timesteps outside 1..T are rejected") {
  const NoiseSchedule s = NoiseSchedule::linear(10, 1e-4, 0.02);
  CHECK_THROWS_AS(s.alpha_bar(0), std::out_of_range);
  CHECK_THROWS_AS(s.alpha_bar(11), std::out_of_range);
}

TEST_CASE("invalid schedules are rejected") {
  CHECK_THROWS(NoiseSchedule::linear(0, 1e-4, 0.02));
  CHECK_THROWS(NoiseSchedule::from_betas({0.1, 1.5}));
  CHECK_THROWS(NoiseSchedule::from_betas({}));
}

TEST_CASE("noising limits") {
  const Tensor x0 = Tensor::vector({1, -2, 3});
  const Tensor eps = Tensor::vector({0.5f, 0.5f, -1});
  CHECK(noise_latent(x0, eps, 1.0) == x0);
  const Tensor half = noise_latent(x0, eps, 0.25);
  for (std::size_t i = 0; i < 3; ++i) CHECK(half[i] == doctest::Approx(0.5 * x0[i] + std::sqrt(0.75) * eps[i]));
  CHECK(noise_latent(x0, eps, 0.0) == eps);
}

TEST_CASE("sample_pairs draws timesteps in range and is reproducible") {
  Rng a(3), b(3);
  const auto p = sample_pairs(200, 1000, {4}, a);
  const auto q = sample_pairs(200, 1000, {4}, b);
  REQUIRE(p.size() == 200);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i].t >= 1);
    CHECK(p[i].t <= 1000);
    CHECK(p[i].t == q[i].t);
    CHECK(p[i].eps == q[i].eps);
  }
}

TEST_SUITE_END();
