#include <cmath>
#include <limits>

#include "doctest.h"

#include "gcpl/errors.hpp"
#include "gcpl/rng.hpp"
#include "gcpl/tensor.hpp"

using namespace gcpl;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("tensor size always equals the shape product") {
  CHECK(Tensor({3, 4}).size() == 12);
  CHECK(Tensor(Shape{}).size() == 1);
  CHECK(Tensor::scalar(2.5f)[0] == 2.5f);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  CHECK(shape_string({2, 3}) == "[2x3]");
}

TEST_CASE("elementwise ops broadcast single values and reject mismatched shapes") {
  const Tensor a = Tensor::vector({1, 2, 3});
  CHECK(add(a, Tensor::scalar(1)) == Tensor::vector({2, 3, 4}));
  CHECK(sub(a, a) == Tensor::vector({0, 0, 0}));
  CHECK(mul(a, Tensor::vector({2, 0, -1})) == Tensor::vector({2, 0, -3}));
  CHECK(scale(a, 0.5f) == Tensor::vector({0.5f, 1, 1.5f}));
  CHECK_THROWS_AS(add(a, Tensor::vector({1, 2})), ShapeError);
}

TEST_CASE("overflowing results raise a numerical error") {
  const Tensor big = Tensor::vector({std::numeric_limits<float>::max()});
  CHECK_THROWS_AS(add(big, big), NumericalError);
  CHECK_FALSE(all_finite(std::span<const float>(Tensor::vector({1, NAN}).values())));
}

TEST_CASE("matvec accumulates rows") {
  const Tensor w({2, 3}, {1, 2, 3, -1, 0, 1});
  CHECK(matvec(w, Tensor::vector({1, 1, 2})) == Tensor::vector({9, 1}));
  CHECK_THROWS_AS(matvec(w, Tensor::vector({1, 1})), ShapeError);
}

TEST_CASE("mse and norms") {
  CHECK(mse(Tensor::vector({1, 2}), Tensor::vector({0, 4})) == doctest::Approx(2.5));
  CHECK(squared_norm(Tensor::vector({3, 4}).data()) == doctest::Approx(25.0));
  CHECK(relative_error(Tensor::vector({0, 0}), Tensor::vector({0, 0})) == 0.0);
  CHECK(cosine_similarity(Tensor::vector({1, 0}).data(), Tensor::vector({0, 2}).data()) == doctest::Approx(0.0));
  CHECK(cosine_similarity(Tensor::vector({1, 1}).data(), Tensor::vector({2, 2}).data()) == doctest::Approx(1.0));
}

TEST_CASE("finite differences recover the gradient of a quadratic") {
  Rng rng(7);
  const Tensor x = standard_normal({6}, rng);
  auto f = [](const Tensor& v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += (i + 1.0) * v[i] * v[i];
    return acc;
  };
  const Tensor g = finite_difference_gradient(f, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(g[i] == doctest::Approx(2.0 * (i + 1.0) * x[i]).epsilon(1e-4));
}

TEST_SUITE_END();
