#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gcpl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float32 array. The element count always equals the
/// product of the shape; a rank-0 tensor holds one value.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor vector(std::vector<float> values);
  static Tensor vector(std::initializer_list<float> values);
  static Tensor scalar(float value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Parameter id -> gradient with the parameter's shape.
using GradientRecord = std::map<std::string, Tensor>;

bool all_finite(std::span<const float> values);
bool all_finite(std::span<const double> values);

// Elementwise arithmetic. `b` may be a single-element tensor, which is
// broadcast over `a`. Results are checked for finiteness.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);

/// W[m x n] . x[n] with double accumulation.
Tensor matvec(const Tensor& w, const Tensor& x);

/// Mean of squared elementwise differences.
double mse(const Tensor& a, const Tensor& b);
double mse(std::span<const float> a, std::span<const double> b);

double squared_norm(std::span<const float> values);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / (x_i+ - x_i-), where the
/// denominator is the step actually realised in float32 arithmetic.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h = 1e-3);

/// ||a - b|| / max(||a||, ||b||), zero when both are zero.
double relative_error(const Tensor& a, const Tensor& b);

double max_abs_difference(const Tensor& a, const Tensor& b);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace gcpl
