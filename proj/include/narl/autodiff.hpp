#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "narl/tensor.hpp"

namespace narl::ad {

using NodeId = std::size_t;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as the tape is
/// alive and has not been truncated below the node.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor& value() const;
  bool requires_grad() const;
  const Tensor::Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Maps each input of a node to the gradient flowing into it. Receives the
/// node's own output and the incoming adjoint; entries for inputs that do not
/// need a gradient may be left invalid.
using BackwardFn = std::function<std::vector<Var>(const Var& out, const Var& grad)>;

/// Gradients of a scalar with respect to requested nodes, kept in request order.
class Gradients {
 public:
  void insert(NodeId id, Tensor grad);

  std::size_t size() const { return grads_.size(); }
  const Tensor& operator[](std::size_t i) const { return grads_[i].second; }
  const Tensor& at(NodeId id) const;
  bool contains(NodeId id) const;
  std::vector<Tensor> tensors() const;

  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::vector<std::pair<NodeId, Tensor>> grads_;
};

/// Append-only record of tensor operations. Inputs of a node always have
/// smaller ids than the node. Not thread-safe; use one tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Trainable leaf.
  Var parameter(Tensor value);

  /// Appends an operation node. Throws NumericalError if `value` holds a
  /// non-finite entry.
  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  const std::string& op(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }

  /// Differentiable gradients: the returned vars are themselves recorded on
  /// the tape, so they can be differentiated again.
  std::vector<Var> grad(const Var& output, std::span<const Var> wrt);

  /// Gradient values only. Scratch nodes created during the pass are
  /// discarded, leaving the tape as it was.
  Gradients backward(const Var& output, std::span<const Var> wrt);

  /// Drops every node with id >= n.
  void truncate(std::size_t n);

  /// Number of nodes whose backward function ran during the last pass.
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Var> run_backward(const Var& output, std::span<const Var> wrt);

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
  std::size_t last_visits_ = 0;
};

// Operations. Binary elementwise operations accept equal shapes or a
// one-element operand (scalar broadcast); nothing else broadcasts.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Subgradient 0 at 0.
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var pow(const Var& a, double exponent);
/// Elementwise a^b for positive a, as exp(b * log(a)).
Var pow(const Var& a, const Var& b);
/// Gradient passes where lo <= a <= hi and is zero elsewhere.
Var clamp(const Var& a, double lo, double hi);
Var sum(const Var& a);
Var mean(const Var& a);
Var softmax_rows(const Var& a);

struct RowMax {
  Var values;                        // n x 1
  std::vector<std::size_t> indices;  // lowest column on ties
};
RowMax max_rows(const Var& a);

/// Row sums of a matrix as an n x 1 column.
Var sum_cols(const Var& a);
/// Repeats an n x 1 column into an n x m matrix.
Var repeat_cols(const Var& col, std::size_t m);
/// Picks entry (i, index[i]) of every row into an n x 1 column.
Var pick(const Var& a, std::span<const std::size_t> index);
/// Column j of a matrix as an n x 1 column.
Var column(const Var& a, std::size_t j);
/// x * w + 1 * b for x (n x k), w (k x m), b (1 x m).
Var affine(const Var& x, const Var& w, const Var& b);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(const Var& a, double b);
Var operator-(double a, const Var& b);
Var operator*(const Var& a, double b);
Var operator*(double a, const Var& b);
Var operator/(const Var& a, double b);
Var operator/(double a, const Var& b);

}  // namespace narl::ad
