#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace narl {

/// Dense row-major tensor of doubles. Immutable once constructed; every
/// kernel below returns a fresh tensor.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  /// Scalar zero with shape {1}.
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor column(std::vector<double> data);
  static Tensor row(std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  bool is_matrix() const { return shape_.size() == 2; }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::size_t r, std::size_t c) const;
  /// Value of a one-element tensor.
  double item() const;

  bool all_finite() const;
  std::vector<double> to_vector() const { return data_; }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::string shape_string(const Tensor::Shape& shape);
bool same_shape(const Tensor& a, const Tensor& b);

// Forward kernels shared by the tape operations and by tape-free evaluation.
// Binary elementwise kernels accept equal shapes or a one-element operand.
namespace kernels {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Row-wise softmax of a matrix, shifted by the row max.
Tensor softmax_rows(const Tensor& a);
/// Row-wise maximum (n x 1) and its column; ties resolve to the lowest column.
Tensor max_rows(const Tensor& a, std::vector<std::size_t>* argmax);
/// One-hot mask (rows x cols) with a 1 at (i, cols_of_row[i]).
Tensor one_hot_rows(std::size_t rows, std::size_t cols, std::span<const std::size_t> cols_of_row);

}  // namespace kernels

}  // namespace narl
