#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "narl/autodiff.hpp"

namespace narl {

enum class LossKind { kCe, kMae, kGce, kRce, kSl, kPolySoft, kJs };

std::string_view loss_name(LossKind kind);
/// Accepts the lowercase names: ce, mae, gce, rce, sl, polysoft, js.
LossKind parse_loss_kind(std::string_view name);

/// RCE constant used when none is given.
inline constexpr double kDefaultRceA = -4.0;
/// Lower clamp applied to f[y] before any logarithm or fractional power.
inline constexpr double kProbFloor = 1e-7;

struct CeParams {};
struct MaeParams {};
struct GceParams {
  double q = 0.7;
};
struct RceParams {
  double a = kDefaultRceA;
};
struct SlParams {
  double gamma1 = 0.1;
  double gamma2 = 1.0;
  double a = kDefaultRceA;
};
struct PolySoftParams {
  double lambda = 2.0;
  double d = 2.0;
};
/// pi2 is fixed to 1 - pi1.
struct JsParams {
  double pi1 = 0.5;
};

using HyperParams = std::variant<CeParams, MaeParams, GceParams, RceParams, SlParams, PolySoftParams, JsParams>;

LossKind kind_of(const HyperParams& hp);
/// Throws HyperParamError when a hyperparameter is outside its valid range.
void validate(const HyperParams& hp);
/// Leading noise-robust factor (q, gamma1, lambda, pi1); 0 for CE/MAE, A for RCE.
double primary_value(const HyperParams& hp);

/// Probability vector; entries >= 0 summing to 1 within 1e-9.
class SimplexVector {
 public:
  explicit SimplexVector(std::vector<double> entries);
  static SimplexVector one_hot(std::size_t c, std::size_t j);
  static SimplexVector uniform(std::size_t c);

  std::size_t size() const { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }
  std::span<const double> entries() const { return entries_; }

 private:
  std::vector<double> entries_;
};

double ce(const SimplexVector& f, std::size_t y);
double mae(const SimplexVector& f, std::size_t y);
double gce(const SimplexVector& f, std::size_t y, double q);
double rce(const SimplexVector& f, std::size_t y, double a = kDefaultRceA);
double sl(const SimplexVector& f, std::size_t y, double gamma1, double gamma2, double a = kDefaultRceA);
double polysoft(const SimplexVector& f, std::size_t y, double lambda, double d);
double js(const SimplexVector& f, std::size_t y, double pi1);
double loss(const SimplexVector& f, std::size_t y, const HyperParams& hp);

/// Per-sample hyperparameters for a batch as n x 1 tape columns, in the
/// order (q) | (gamma1, gamma2) | (lambda, d) | (pi1). CE, MAE and RCE carry
/// no columns. `rce_a` is the RCE constant used by RCE and SL.
struct HyperParamColumns {
  LossKind kind = LossKind::kCe;
  std::vector<ad::Var> columns;
  double rce_a = kDefaultRceA;
};

/// Number of per-sample hyperparameter columns of a loss kind.
std::size_t hyperparam_count(LossKind kind);

/// Constant columns built from per-sample HyperParams (all of one kind).
HyperParamColumns constant_columns(ad::Tape& tape, std::span<const HyperParams> per_sample);

/// Per-sample robust losses (n x 1) for softmax probabilities (n x c).
ad::Var sample_losses(const ad::Var& probs, std::span<const std::size_t> labels, const HyperParamColumns& hp);

/// Mean of the per-sample losses, each with its own hyperparameters.
ad::Var batch_loss(const ad::Var& probs, std::span<const std::size_t> labels, const HyperParamColumns& hp);
ad::Var batch_loss(const ad::Var& probs, std::span<const std::size_t> labels, std::span<const HyperParams> per_sample);

/// Mean cross entropy, used as the meta loss.
ad::Var mean_ce(const ad::Var& probs, std::span<const std::size_t> labels);

}  // namespace narl
