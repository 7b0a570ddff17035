#include "narl/autodiff.hpp"

#include <algorithm>

#include "narl/errors.hpp"

namespace narl::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

void Gradients::insert(NodeId id, Tensor grad) { grads_.emplace_back(id, std::move(grad)); }

const Tensor& Gradients::at(NodeId id) const {
  for (const auto& [key, g] : grads_) {
    if (key == id) return g;
  }
  throw ContractError("no gradient recorded for node " + std::to_string(id));
}

bool Gradients::contains(NodeId id) const {
  return std::any_of(grads_.begin(), grads_.end(), [id](const auto& p) { return p.first == id; });
}

std::vector<Tensor> Gradients::tensors() const {
  std::vector<Tensor> out;
  out.reserve(grads_.size());
  for (const auto& [id, g] : grads_) out.push_back(g);
  return out;
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericalError("constant: non-finite value");
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  if (!value.all_finite()) throw NumericalError("parameter: non-finite value");
  nodes_.push_back(Node{"parameter", std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericalError(op + ": non-finite value");
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  bool needs_grad = false;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (!in.valid() || &in.tape() != this) throw ContractError(node.op + ": input belongs to another tape");
    node.inputs.push_back(in.id());
    needs_grad = needs_grad || nodes_[in.id()].requires_grad;
  }
  if (grad_enabled_ && needs_grad && backward) {
    node.requires_grad = true;
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::vector<Var> Tape::run_backward(const Var& output, std::span<const Var> wrt) {
  if (!output.valid() || &output.tape() != this) throw ContractError("backward: output belongs to another tape");
  if (output.value().numel() != 1) {
    throw ContractError("backward: output must be scalar, got shape " + shape_string(output.shape()));
  }
  const NodeId top = output.id();
  std::vector<Var> adjoint(top + 1);
  adjoint[top] = constant(Tensor::full(output.shape(), 1.0));
  last_visits_ = 0;

  for (NodeId i = top + 1; i-- > 0;) {
    if (!adjoint[i].valid()) continue;
    // deque keeps element references stable while backward appends nodes.
    const Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward) continue;
    ++last_visits_;
    const std::vector<Var> grads = node.backward(Var(this, i), adjoint[i]);
    for (std::size_t k = 0; k < node.inputs.size() && k < grads.size(); ++k) {
      const NodeId in = node.inputs[k];
      if (!grads[k].valid() || !nodes_[in].requires_grad) continue;
      adjoint[in] = adjoint[in].valid() ? add(adjoint[in], grads[k]) : grads[k];
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (!w.valid() || &w.tape() != this) throw ContractError("backward: requested node belongs to another tape");
    if (w.id() <= top && adjoint[w.id()].valid()) {
      out.push_back(adjoint[w.id()]);
    } else {
      out.push_back(constant(Tensor::zeros(w.shape())));
    }
  }
  return out;
}

std::vector<Var> Tape::grad(const Var& output, std::span<const Var> wrt) { return run_backward(output, wrt); }

Gradients Tape::backward(const Var& output, std::span<const Var> wrt) {
  const std::size_t mark = nodes_.size();
  struct Restore {
    Tape& tape;
    std::size_t mark;
    bool prev;
    ~Restore() {
      tape.grad_enabled_ = prev;
      tape.truncate(mark);
    }
  } restore{*this, mark, grad_enabled_};
  grad_enabled_ = false;

  const auto vars = run_backward(output, wrt);
  Gradients grads;
  for (std::size_t i = 0; i < wrt.size(); ++i) grads.insert(wrt[i].id(), vars[i].value());
  return grads;
}

void Tape::truncate(std::size_t n) {
  if (n < nodes_.size()) nodes_.resize(n);
}

namespace {

Tape& tape_of(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
  return a.tape();
}

Var reshape(const Var& a, const Tensor::Shape& shape) {
  if (a.shape() == shape) return a;
  const Tensor::Shape from = a.shape();
  Tensor v(shape, a.value().to_vector());
  return a.tape().record("reshape", std::move(v), {a}, [from](const Var&, const Var& g) {
    return std::vector<Var>{reshape(g, from)};
  });
}

// Gradient of a broadcast operand: summed when the operand was a scalar.
Var reduce_to(const Var& g, const Tensor::Shape& shape) {
  if (g.shape() == shape) return g;
  return reshape(sum(g), shape);
}

Var constant_like(Tape& tape, const Tensor::Shape& shape, double v) { return tape.constant(Tensor::full(shape, v)); }

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const auto sa = a.shape(), sb = b.shape();
  return t.record("add", kernels::add(a.value(), b.value()), {a, b}, [sa, sb](const Var&, const Var& g) {
    return std::vector<Var>{reduce_to(g, sa), reduce_to(g, sb)};
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const auto sa = a.shape(), sb = b.shape();
  return t.record("sub", kernels::sub(a.value(), b.value()), {a, b}, [sa, sb](const Var&, const Var& g) {
    return std::vector<Var>{reduce_to(g, sa), reduce_to(neg(g), sb)};
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.record("mul", kernels::mul(a.value(), b.value()), {a, b}, [a, b](const Var&, const Var& g) {
    std::vector<Var> out(2);
    if (a.requires_grad()) out[0] = reduce_to(mul(g, b), a.shape());
    if (b.requires_grad()) out[1] = reduce_to(mul(g, a), b.shape());
    return out;
  });
}

Var div(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.record("div", kernels::div(a.value(), b.value()), {a, b}, [a, b](const Var& out, const Var& g) {
    std::vector<Var> grads(2);
    if (a.requires_grad()) grads[0] = reduce_to(div(g, b), a.shape());
    if (b.requires_grad()) grads[1] = reduce_to(neg(div(mul(g, out), b)), b.shape());
    return grads;
  });
}

Var neg(const Var& a) {
  return a.tape().record("neg", kernels::neg(a.value()), {a},
                         [](const Var&, const Var& g) { return std::vector<Var>{neg(g)}; });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.record("matmul", kernels::matmul(a.value(), b.value()), {a, b}, [a, b](const Var&, const Var& g) {
    std::vector<Var> out(2);
    if (a.requires_grad()) out[0] = matmul(g, transpose(b));
    if (b.requires_grad()) out[1] = matmul(transpose(a), g);
    return out;
  });
}

Var transpose(const Var& a) {
  return a.tape().record("transpose", kernels::transpose(a.value()), {a},
                         [](const Var&, const Var& g) { return std::vector<Var>{transpose(g)}; });
}

Var relu(const Var& a) {
  return a.tape().record("relu", kernels::relu(a.value()), {a}, [a](const Var&, const Var& g) {
    std::vector<double> mask(a.value().numel());
    const auto x = a.value().data();
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = x[i] > 0.0 ? 1.0 : 0.0;
    return std::vector<Var>{mul(g, g.tape().constant(Tensor(a.shape(), std::move(mask))))};
  });
}

Var sigmoid(const Var& a) {
  return a.tape().record("sigmoid", kernels::sigmoid(a.value()), {a}, [](const Var& out, const Var& g) {
    return std::vector<Var>{mul(g, mul(out, 1.0 - out))};
  });
}

Var exp(const Var& a) {
  return a.tape().record("exp", kernels::exp(a.value()), {a},
                         [](const Var& out, const Var& g) { return std::vector<Var>{mul(g, out)}; });
}

Var log(const Var& a) {
  return a.tape().record("log", kernels::log(a.value()), {a},
                         [a](const Var&, const Var& g) { return std::vector<Var>{div(g, a)}; });
}

Var pow(const Var& a, double exponent) {
  return a.tape().record("pow", kernels::pow(a.value(), exponent), {a}, [a, exponent](const Var&, const Var& g) {
    return std::vector<Var>{mul(g, exponent * pow(a, exponent - 1.0))};
  });
}

Var pow(const Var& a, const Var& b) { return exp(mul(b, log(a))); }

Var clamp(const Var& a, double lo, double hi) {
  return a.tape().record("clamp", kernels::clamp(a.value(), lo, hi), {a}, [a, lo, hi](const Var&, const Var& g) {
    std::vector<double> mask(a.value().numel());
    const auto x = a.value().data();
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (x[i] >= lo && x[i] <= hi) ? 1.0 : 0.0;
    return std::vector<Var>{mul(g, g.tape().constant(Tensor(a.shape(), std::move(mask))))};
  });
}

Var sum(const Var& a) {
  const auto shape = a.shape();
  return a.tape().record("sum", kernels::sum(a.value()), {a}, [shape](const Var&, const Var& g) {
    return std::vector<Var>{mul(constant_like(g.tape(), shape, 1.0), g)};
  });
}

Var mean(const Var& a) {
  const auto shape = a.shape();
  const double inv = 1.0 / static_cast<double>(a.value().numel());
  return a.tape().record("mean", kernels::mean(a.value()), {a}, [shape, inv](const Var&, const Var& g) {
    return std::vector<Var>{mul(constant_like(g.tape(), shape, inv), g)};
  });
}

Var softmax_rows(const Var& a) {
  return a.tape().record("softmax_rows", kernels::softmax_rows(a.value()), {a}, [](const Var& out, const Var& g) {
    const std::size_t m = out.value().cols();
    return std::vector<Var>{mul(out, sub(g, repeat_cols(sum_cols(mul(g, out)), m)))};
  });
}

RowMax max_rows(const Var& a) {
  RowMax result;
  Tensor values = kernels::max_rows(a.value(), &result.indices);
  const std::size_t n = a.value().rows(), m = a.value().cols();
  Tensor mask = kernels::one_hot_rows(n, m, result.indices);
  result.values = a.tape().record("max_rows", std::move(values), {a}, [mask, m](const Var&, const Var& g) {
    return std::vector<Var>{mul(g.tape().constant(mask), repeat_cols(g, m))};
  });
  return result;
}

Var sum_cols(const Var& a) {
  return matmul(a, a.tape().constant(Tensor::full({a.value().cols(), 1}, 1.0)));
}

Var repeat_cols(const Var& col, std::size_t m) {
  if (col.value().cols() != 1) throw ShapeError("repeat_cols: expected a column, got " + shape_string(col.shape()));
  return matmul(col, col.tape().constant(Tensor::full({1, m}, 1.0)));
}

Var pick(const Var& a, std::span<const std::size_t> index) {
  const Tensor mask = kernels::one_hot_rows(a.value().rows(), a.value().cols(), index);
  return sum_cols(mul(a, a.tape().constant(mask)));
}

Var column(const Var& a, std::size_t j) {
  const std::size_t m = a.value().cols();
  if (j >= m) throw ShapeError("column: index out of range");
  std::vector<double> e(m, 0.0);
  e[j] = 1.0;
  return matmul(a, a.tape().constant(Tensor::column(std::move(e))));
}

Var affine(const Var& x, const Var& w, const Var& b) {
  const std::size_t n = x.value().rows();
  return add(matmul(x, w), matmul(x.tape().constant(Tensor::full({n, 1}, 1.0)), b));
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator-(const Var& a) { return neg(a); }
Var operator+(const Var& a, double b) { return add(a, a.tape().constant(Tensor::scalar(b))); }
Var operator+(double a, const Var& b) { return add(b.tape().constant(Tensor::scalar(a)), b); }
Var operator-(const Var& a, double b) { return sub(a, a.tape().constant(Tensor::scalar(b))); }
Var operator-(double a, const Var& b) { return sub(b.tape().constant(Tensor::scalar(a)), b); }
Var operator*(const Var& a, double b) { return mul(a, a.tape().constant(Tensor::scalar(b))); }
Var operator*(double a, const Var& b) { return mul(b.tape().constant(Tensor::scalar(a)), b); }
Var operator/(const Var& a, double b) { return div(a, a.tape().constant(Tensor::scalar(b))); }
Var operator/(double a, const Var& b) { return div(b.tape().constant(Tensor::scalar(a)), b); }

}  // namespace narl::ad
