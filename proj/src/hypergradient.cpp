#include "narl/hypergradient.hpp"

#include <cmath>
#include <string>

#include "narl/errors.hpp"

namespace narl::ad {

namespace {

std::vector<Var> leaves(Tape& tape, std::span<const Tensor> values) {
  std::vector<Var> vars;
  vars.reserve(values.size());
  for (const auto& v : values) vars.push_back(tape.parameter(v));
  return vars;
}

template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("hypergradient stage '") + name + "': " + e.what());
  }
}

void require_finite(const char* name, std::span<const Tensor> values) {
  for (const auto& v : values) {
    if (!v.all_finite()) throw NumericalError(std::string("hypergradient stage '") + name + "': non-finite value");
  }
}

std::vector<Tensor> axpy(std::span<const Tensor> w, double a, std::span<const Tensor> d) {
  std::vector<Tensor> out;
  out.reserve(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.push_back(kernels::add(w[i], kernels::mul(d[i], Tensor::scalar(a))));
  }
  return out;
}

double squared_norm(std::span<const Tensor> ts) {
  double s = 0.0;
  for (const auto& t : ts)
    for (double v : t.data()) s += v * v;
  return s;
}

Gradients grad_theta(const InnerLossFn& inner, std::span<const Tensor> w, std::span<const Tensor> theta) {
  Tape tape;
  std::vector<Var> wv;
  for (const auto& t : w) wv.push_back(tape.constant(t));
  const auto tv = leaves(tape, theta);
  const Var loss = inner(tape, wv, tv);
  return tape.backward(loss, tv);
}

}  // namespace

std::vector<Tensor> lookahead_weights(const InnerLossFn& inner, std::span<const Tensor> w,
                                      std::span<const Tensor> theta, double alpha, double* inner_loss) {
  Tape tape;
  const auto wv = leaves(tape, w);
  std::vector<Var> tv;
  for (const auto& t : theta) tv.push_back(tape.constant(t));
  const Var loss = inner(tape, wv, tv);
  if (inner_loss) *inner_loss = loss.value().item();
  const auto grads = tape.backward(loss, wv).tensors();
  require_finite("inner gradient", grads);
  return axpy(w, -alpha, grads);
}

HypergradResult hypergradient(const InnerLossFn& inner, const OuterLossFn& outer, std::span<const Tensor> w,
                              std::span<const Tensor> theta, double alpha, HypergradMethod method) {
  if (!(alpha > 0.0)) throw ContractError("hypergradient: step size must be positive");
  HypergradResult result;

  if (method == HypergradMethod::kExact) {
    Tape tape;
    const auto wv = leaves(tape, w);
    const auto tv = leaves(tape, theta);
    const Var loss = stage("inner loss", [&] { return inner(tape, wv, tv); });
    result.inner_loss = loss.value().item();
    const auto gw = stage("inner gradient", [&] { return tape.grad(loss, wv); });
    std::vector<Var> lookahead;
    stage("lookahead", [&] {
      for (std::size_t i = 0; i < wv.size(); ++i) lookahead.push_back(sub(wv[i], gw[i] * alpha));
      return 0;
    });
    const Var meta = stage("outer loss", [&] { return outer(tape, lookahead); });
    result.outer_loss = meta.value().item();
    result.theta_grad = stage("hypergradient", [&] { return tape.backward(meta, tv).tensors(); });
    require_finite("hypergradient", result.theta_grad);
    for (const auto& v : lookahead) result.lookahead.push_back(v.value());
    return result;
  }

  result.lookahead = stage("lookahead", [&] { return lookahead_weights(inner, w, theta, alpha, &result.inner_loss); });
  std::vector<Tensor> v;
  {
    Tape tape;
    const auto wv = leaves(tape, result.lookahead);
    const Var meta = stage("outer loss", [&] { return outer(tape, wv); });
    result.outer_loss = meta.value().item();
    v = tape.backward(meta, wv).tensors();
    require_finite("outer loss", v);
  }
  const double vnorm = std::sqrt(squared_norm(v));
  if (vnorm == 0.0) {
    for (const auto& t : theta) result.theta_grad.push_back(Tensor::zeros(t.shape()));
    return result;
  }
  const double r = 0.01 / vnorm;
  const auto plus = grad_theta(inner, axpy(w, r, v), theta).tensors();
  const auto minus = grad_theta(inner, axpy(w, -r, v), theta).tensors();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    result.theta_grad.push_back(kernels::mul(kernels::sub(plus[i], minus[i]), Tensor::scalar(-alpha / (2.0 * r))));
  }
  require_finite("hypergradient", result.theta_grad);
  return result;
}

}  // namespace narl::ad
