#include "narl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "narl/errors.hpp"

namespace narl {

namespace {

std::size_t shape_product(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

template <class Fn>
Tensor map(const Tensor& a, Fn fn) {
  std::vector<double> out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(in[i]);
  return Tensor(a.shape(), std::move(out));
}

template <class Fn>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, Fn fn) {
  const auto x = a.data();
  const auto y = b.data();
  if (same_shape(a, b)) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i], y[i]);
    return Tensor(a.shape(), std::move(out));
  }
  if (b.numel() == 1) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i], y[0]);
    // Two one-element operands keep the higher-rank shape.
    const auto& shape = (a.numel() == 1 && b.rank() > a.rank()) ? b.shape() : a.shape();
    return Tensor(shape, std::move(out));
  }
  if (a.numel() == 1) {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[0], y[i]);
    return Tensor(b.shape(), std::move(out));
  }
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

void require_matrix(const Tensor& a, const char* op) {
  if (!a.is_matrix()) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

}  // namespace

Tensor::Tensor() : shape_{1}, data_{0.0} {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                     " elements");
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
  const auto n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::column(std::vector<double> data) {
  const auto n = data.size();
  return Tensor({n, 1}, std::move(data));
}

Tensor Tensor::row(std::vector<double> data) {
  const auto n = data.size();
  return Tensor({1, n}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (!is_matrix()) throw ShapeError("rows() on non-matrix " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (!is_matrix()) throw ShapeError("cols() on non-matrix " + shape_string(shape_));
  return shape_[1];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const Tensor::Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

namespace kernels {

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return zip(a, b, "div", [](double x, double y) { return x / y; });
}

Tensor neg(const Tensor& a) {
  return map(a, [](double x) { return -x; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* yrow = &y[p * m];
      double* orow = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += xv * yrow[j];
    }
  }
  return Tensor({n, m}, std::move(out));
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t n = a.rows(), m = a.cols();
  const auto x = a.data();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = x[i * m + j];
  return Tensor({m, n}, std::move(out));
}

Tensor relu(const Tensor& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return map(a, [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}

Tensor exp(const Tensor& a) {
  return map(a, [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(v));
  }
  return map(a, [](double x) { return std::log(x); });
}

Tensor pow(const Tensor& a, double exponent) {
  const bool integral = std::nearbyint(exponent) == exponent;
  for (double v : a.data()) {
    if (v < 0.0 && !integral) throw DomainError("pow: negative base with non-integer exponent");
    if (v == 0.0 && exponent < 0.0) throw DomainError("pow: zero base with negative exponent");
  }
  return map(a, [exponent](double x) { return std::pow(x, exponent); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return map(a, [lo, hi](double x) { return std::clamp(x, lo, hi); });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::scalar(s);
}

Tensor mean(const Tensor& a) { return Tensor::scalar(sum(a).item() / static_cast<double>(a.numel())); }

Tensor softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  const std::size_t n = a.rows(), m = a.cols();
  const auto x = a.data();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &x[i * m];
    const double shift = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      out[i * m + j] = std::exp(row[j] - shift);
      z += out[i * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= z;
  }
  return Tensor({n, m}, std::move(out));
}

Tensor max_rows(const Tensor& a, std::vector<std::size_t>* argmax) {
  require_matrix(a, "max_rows");
  const std::size_t n = a.rows(), m = a.cols();
  const auto x = a.data();
  std::vector<double> out(n);
  if (argmax) argmax->assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j) {
      if (x[i * m + j] > x[i * m + best]) best = j;
    }
    out[i] = x[i * m + best];
    if (argmax) (*argmax)[i] = best;
  }
  return Tensor({n, 1}, std::move(out));
}

Tensor one_hot_rows(std::size_t rows, std::size_t cols, std::span<const std::size_t> cols_of_row) {
  if (cols_of_row.size() != rows) throw ShapeError("one_hot_rows: index count does not match rows");
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (cols_of_row[i] >= cols) throw ShapeError("one_hot_rows: column index out of range");
    out[i * cols + cols_of_row[i]] = 1.0;
  }
  return Tensor({rows, cols}, std::move(out));
}

}  // namespace kernels

}  // namespace narl
