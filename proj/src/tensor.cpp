#include "gcpl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gcpl/errors.hpp"

namespace gcpl {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<float> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::vector(std::initializer_list<float> values) { return vector(std::vector<float>(values)); }

Tensor Tensor::scalar(float value) { return Tensor({}, std::vector<float>{value}); }

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void require_finite(const Tensor& t, const char* op) {
  if (!all_finite(t.data())) throw NumericalError(std::string(op) + ": result is not finite");
}

template <typename Op>
Tensor elementwise(const Tensor& a, const Tensor& b, const char* name, Op op) {
  Tensor out(a.shape());
  if (b.size() == 1 && a.shape() != b.shape()) {
    const float s = b[0];
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], s);
  } else if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
  } else {
    throw ShapeError(std::string(name) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  require_finite(out, name);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, "add", [](float x, float y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, "sub", [](float x, float y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, "mul", [](float x, float y) { return x * y; });
}

Tensor scale(const Tensor& a, float factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  require_finite(out, "scale");
  return out;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.shape()[1] != x.size()) {
    throw ShapeError("matvec: cannot multiply " + shape_string(w.shape()) + " by " +
                     shape_string(x.shape()));
  }
  const std::size_t m = w.shape()[0];
  const std::size_t n = w.shape()[1];
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const float* row = w.data().data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(row[j]) * x[j];
    out[i] = static_cast<float>(acc);
  }
  require_finite(out, "matvec");
  return out;
}

double mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  if (a.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double mse(std::span<const float> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("mse: length mismatch");
  if (a.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double squared_norm(std::span<const float> values) {
  double acc = 0.0;
  for (float v : values) acc += static_cast<double>(v) * v;
  return acc;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float plus = static_cast<float>(x[i] + h);
    const float minus = static_cast<float>(x[i] - h);
    probe[i] = plus;
    const double f_plus = f(probe);
    probe[i] = minus;
    const double f_minus = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      throw NumericalError("finite_difference_gradient: non-finite function value at coordinate " +
                           std::to_string(i));
    }
    const double step = static_cast<double>(plus) - static_cast<double>(minus);
    grad[i] = static_cast<float>((f_plus - f_minus) / step);
  }
  return grad;
}

double relative_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("relative_error: shape mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    diff += d * d;
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_difference: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace gcpl
