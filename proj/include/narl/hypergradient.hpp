#pragma once

#include <functional>
#include <span>
#include <vector>

#include "narl/autodiff.hpp"
#include "narl/tensor.hpp"

namespace narl::ad {

/// Inner (training) objective L(w; theta), recorded on the given tape.
using InnerLossFn = std::function<Var(Tape&, std::span<const Var> w, std::span<const Var> theta)>;
/// Outer (meta) objective evaluated at the looked-ahead weights.
using OuterLossFn = std::function<Var(Tape&, std::span<const Var> w)>;

enum class HypergradMethod {
  /// Differentiates through the recorded one-step update.
  kExact,
  /// Central difference of grad_theta L along v, radius 0.01 / |v|.
  kFiniteDifference,
};

struct HypergradResult {
  std::vector<Tensor> theta_grad;  // d L_outer(w~(theta)) / d theta
  std::vector<Tensor> lookahead;   // w~ = w - alpha * grad_w L_inner(w; theta)
  double inner_loss = 0.0;
  double outer_loss = 0.0;
};

/// Hypergradient of the outer loss through one SGD step on the inner loss:
///
///   w~(theta) = w - alpha * grad_w L_inner(w; theta)
///   result    = grad_theta L_outer(w~(theta))
///             = -alpha * (d^2 L_inner / d theta d w) * grad L_outer(w~)
///
/// Throws ContractError for alpha <= 0 and NumericalError naming the stage
/// (inner loss, inner gradient, lookahead, outer loss, hypergradient) whose
/// values stopped being finite.
HypergradResult hypergradient(const InnerLossFn& inner, const OuterLossFn& outer, std::span<const Tensor> w,
                              std::span<const Tensor> theta, double alpha,
                              HypergradMethod method = HypergradMethod::kExact);

/// w - alpha * grad_w L_inner(w; theta), values only.
std::vector<Tensor> lookahead_weights(const InnerLossFn& inner, std::span<const Tensor> w,
                                      std::span<const Tensor> theta, double alpha, double* inner_loss = nullptr);

}  // namespace narl::ad
