#include "narl/losses.hpp"

#include <algorithm>
#include <cmath>

#include "narl/errors.hpp"

namespace narl {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double check_target(const SimplexVector& f, std::size_t y) {
  if (y >= f.size()) throw ShapeError("class index " + std::to_string(y) + " out of range");
  return f[y];
}

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0); }

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

void require_range(bool ok, const std::string& what) {
  if (!ok) throw HyperParamError(what);
}

double ce_of(double fy) { return -std::log(clamp_prob(fy)); }

double polysoft_of(double fy, double lambda, double d) {
  const double scale = (d - 1.0) * lambda / d;
  const double l = ce_of(fy);
  if (l >= lambda) return scale;
  return scale * (1.0 - std::pow(1.0 - l / lambda, d / (d - 1.0)));
}

double js_of(double fy, double pi1) {
  const double pi2 = 1.0 - pi1;
  const double z = -pi2 * std::log(pi2);
  const double mix = pi1 + pi2 * fy;
  // KL(e_y || m) = -log m_y; KL(f || m) collapses to a function of f_y
  // because m_j = pi2 * f_j off the target.
  const double kl_target = -std::log(mix);
  const double kl_pred = (1.0 - fy) * -std::log(pi2) + xlogx(fy) - fy * std::log(mix);
  return (pi1 * kl_target + pi2 * kl_pred) / z;
}

void check_column_range(const ad::Var& col, double lo, double hi, bool lo_open, bool hi_open, const char* name) {
  for (double v : col.value().data()) {
    const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
    require_range(ok, std::string(name) + " out of range: " + std::to_string(v));
  }
}

ad::Var clamp_prob(const ad::Var& p) { return ad::clamp(p, kProbFloor, 1.0); }

ad::Var ce_of(const ad::Var& fy) { return -ad::log(clamp_prob(fy)); }

ad::Var polysoft_of(const ad::Var& fy, const ad::Var& lambda, const ad::Var& d) {
  ad::Tape& tape = fy.tape();
  const ad::Var scale = (d - 1.0) * lambda / d;
  const ad::Var l = ce_of(fy);
  const auto lv = l.value().data();
  const auto lam = lambda.value().data();
  std::vector<double> below(lv.size());
  for (std::size_t i = 0; i < lv.size(); ++i) below[i] = lv[i] < lam[i] ? 1.0 : 0.0;
  const ad::Var mask = tape.constant(Tensor(l.shape(), below));
  // Rows on the plateau are masked out, so clamping their base only keeps
  // the logarithm defined.
  const ad::Var base = ad::clamp(1.0 - l / lambda, 1e-12, 1.0);
  const ad::Var branch = scale * (1.0 - ad::pow(base, d / (d - 1.0)));
  return mask * branch + (1.0 - mask) * scale;
}

ad::Var js_of(const ad::Var& fy, const ad::Var& pi1) {
  const ad::Var pi2 = 1.0 - pi1;
  const ad::Var log_pi2 = ad::log(pi2);
  const ad::Var z = -(pi2 * log_pi2);
  const ad::Var log_mix = ad::log(pi1 + pi2 * fy);
  const ad::Var fyc = clamp_prob(fy);
  const ad::Var kl_target = -log_mix;
  const ad::Var kl_pred = (1.0 - fy) * (-log_pi2) + fyc * ad::log(fyc) - fy * log_mix;
  return (pi1 * kl_target + pi2 * kl_pred) / z;
}

}  // namespace

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::kCe: return "ce";
    case LossKind::kMae: return "mae";
    case LossKind::kGce: return "gce";
    case LossKind::kRce: return "rce";
    case LossKind::kSl: return "sl";
    case LossKind::kPolySoft: return "polysoft";
    case LossKind::kJs: return "js";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  for (auto k : {LossKind::kCe, LossKind::kMae, LossKind::kGce, LossKind::kRce, LossKind::kSl, LossKind::kPolySoft,
                 LossKind::kJs}) {
    if (loss_name(k) == name) return k;
  }
  throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

LossKind kind_of(const HyperParams& hp) {
  return std::visit(Overloaded{
                        [](const CeParams&) { return LossKind::kCe; },
                        [](const MaeParams&) { return LossKind::kMae; },
                        [](const GceParams&) { return LossKind::kGce; },
                        [](const RceParams&) { return LossKind::kRce; },
                        [](const SlParams&) { return LossKind::kSl; },
                        [](const PolySoftParams&) { return LossKind::kPolySoft; },
                        [](const JsParams&) { return LossKind::kJs; },
                    },
                    hp);
}

void validate(const HyperParams& hp) {
  std::visit(Overloaded{
                 [](const CeParams&) {},
                 [](const MaeParams&) {},
                 [](const GceParams& p) { require_range(p.q > 0.0 && p.q <= 1.0, "gce: q must lie in (0, 1]"); },
                 [](const RceParams& p) { require_range(p.a < 0.0, "rce: A must be negative"); },
                 [](const SlParams& p) {
                   require_range(p.gamma1 > 0.0 && p.gamma2 > 0.0, "sl: gamma1 and gamma2 must be positive");
                   require_range(p.a < 0.0, "sl: A must be negative");
                 },
                 [](const PolySoftParams& p) {
                   require_range(p.lambda > 0.0, "polysoft: lambda must be positive");
                   require_range(p.d > 1.0, "polysoft: d must exceed 1");
                 },
                 [](const JsParams& p) { require_range(p.pi1 > 0.0 && p.pi1 < 1.0, "js: pi1 must lie in (0, 1)"); },
             },
             hp);
}

double primary_value(const HyperParams& hp) {
  return std::visit(Overloaded{
                        [](const CeParams&) { return 0.0; },
                        [](const MaeParams&) { return 0.0; },
                        [](const GceParams& p) { return p.q; },
                        [](const RceParams& p) { return p.a; },
                        [](const SlParams& p) { return p.gamma1; },
                        [](const PolySoftParams& p) { return p.lambda; },
                        [](const JsParams& p) { return p.pi1; },
                    },
                    hp);
}

SimplexVector::SimplexVector(std::vector<double> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw ShapeError("simplex vector must be non-empty");
  double total = 0.0;
  for (double v : entries_) {
    if (!(v >= 0.0)) throw DomainError("simplex entries must be non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("simplex entries must sum to 1");
}

SimplexVector SimplexVector::one_hot(std::size_t c, std::size_t j) {
  std::vector<double> v(c, 0.0);
  v.at(j) = 1.0;
  return SimplexVector(std::move(v));
}

SimplexVector SimplexVector::uniform(std::size_t c) {
  return SimplexVector(std::vector<double>(c, 1.0 / static_cast<double>(c)));
}

double ce(const SimplexVector& f, std::size_t y) { return ce_of(check_target(f, y)); }

double mae(const SimplexVector& f, std::size_t y) { return 2.0 * (1.0 - check_target(f, y)); }

double gce(const SimplexVector& f, std::size_t y, double q) {
  validate(GceParams{q});
  return (1.0 - std::pow(check_target(f, y), q)) / q;
}

double rce(const SimplexVector& f, std::size_t y, double a) {
  validate(RceParams{a});
  return -a * (1.0 - check_target(f, y));
}

double sl(const SimplexVector& f, std::size_t y, double gamma1, double gamma2, double a) {
  validate(SlParams{gamma1, gamma2, a});
  return gamma1 * ce(f, y) + gamma2 * rce(f, y, a);
}

double polysoft(const SimplexVector& f, std::size_t y, double lambda, double d) {
  validate(PolySoftParams{lambda, d});
  return polysoft_of(check_target(f, y), lambda, d);
}

double js(const SimplexVector& f, std::size_t y, double pi1) {
  validate(JsParams{pi1});
  return js_of(check_target(f, y), pi1);
}

double loss(const SimplexVector& f, std::size_t y, const HyperParams& hp) {
  return std::visit(Overloaded{
                        [&](const CeParams&) { return ce(f, y); },
                        [&](const MaeParams&) { return mae(f, y); },
                        [&](const GceParams& p) { return gce(f, y, p.q); },
                        [&](const RceParams& p) { return rce(f, y, p.a); },
                        [&](const SlParams& p) { return sl(f, y, p.gamma1, p.gamma2, p.a); },
                        [&](const PolySoftParams& p) { return polysoft(f, y, p.lambda, p.d); },
                        [&](const JsParams& p) { return js(f, y, p.pi1); },
                    },
                    hp);
}

std::size_t hyperparam_count(LossKind kind) {
  switch (kind) {
    case LossKind::kGce:
    case LossKind::kJs: return 1;
    case LossKind::kSl:
    case LossKind::kPolySoft: return 2;
    default: return 0;
  }
}

HyperParamColumns constant_columns(ad::Tape& tape, std::span<const HyperParams> per_sample) {
  if (per_sample.empty()) throw ShapeError("constant_columns: empty batch");
  HyperParamColumns out;
  out.kind = kind_of(per_sample.front());
  const std::size_t n = per_sample.size(), k = hyperparam_count(out.kind);
  std::vector<std::vector<double>> cols(k, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& hp = per_sample[i];
    if (kind_of(hp) != out.kind) throw HyperParamError("batch mixes loss kinds");
    validate(hp);
    std::visit(Overloaded{
                   [](const CeParams&) {},
                   [](const MaeParams&) {},
                   [&](const GceParams& p) { cols[0][i] = p.q; },
                   [&](const RceParams& p) { out.rce_a = p.a; },
                   [&](const SlParams& p) {
                     cols[0][i] = p.gamma1;
                     cols[1][i] = p.gamma2;
                     out.rce_a = p.a;
                   },
                   [&](const PolySoftParams& p) {
                     cols[0][i] = p.lambda;
                     cols[1][i] = p.d;
                   },
                   [&](const JsParams& p) { cols[0][i] = p.pi1; },
               },
               hp);
  }
  for (auto& c : cols) out.columns.push_back(tape.constant(Tensor::column(std::move(c))));
  return out;
}

ad::Var sample_losses(const ad::Var& probs, std::span<const std::size_t> labels, const HyperParamColumns& hp) {
  const std::size_t n = probs.value().rows();
  if (labels.size() != n) {
    throw ShapeError("batch_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  }
  if (hp.columns.size() != hyperparam_count(hp.kind)) throw ShapeError("batch_loss: wrong hyperparameter count");
  for (const auto& col : hp.columns) {
    if (col.value().numel() != n) throw ShapeError("batch_loss: hyperparameter column length mismatch");
  }
  if (hp.kind == LossKind::kRce || hp.kind == LossKind::kSl) {
    require_range(hp.rce_a < 0.0, "rce: A must be negative");
  }
  const ad::Var fy = ad::pick(probs, labels);
  switch (hp.kind) {
    case LossKind::kCe: return ce_of(fy);
    case LossKind::kMae: return 2.0 * (1.0 - fy);
    case LossKind::kGce: {
      const ad::Var& q = hp.columns[0];
      check_column_range(q, 0.0, 1.0, true, false, "gce: q");
      return (1.0 - ad::pow(clamp_prob(fy), q)) / q;
    }
    case LossKind::kRce: return -hp.rce_a * (1.0 - fy);
    case LossKind::kSl: {
      check_column_range(hp.columns[0], 0.0, HUGE_VAL, true, true, "sl: gamma1");
      check_column_range(hp.columns[1], 0.0, HUGE_VAL, true, true, "sl: gamma2");
      return hp.columns[0] * ce_of(fy) + hp.columns[1] * (-hp.rce_a * (1.0 - fy));
    }
    case LossKind::kPolySoft:
      check_column_range(hp.columns[0], 0.0, HUGE_VAL, true, true, "polysoft: lambda");
      check_column_range(hp.columns[1], 1.0, HUGE_VAL, true, true, "polysoft: d");
      return polysoft_of(fy, hp.columns[0], hp.columns[1]);
    case LossKind::kJs:
      check_column_range(hp.columns[0], 0.0, 1.0, true, true, "js: pi1");
      return js_of(fy, hp.columns[0]);
  }
  throw UnsupportedError("unknown loss kind");
}

ad::Var batch_loss(const ad::Var& probs, std::span<const std::size_t> labels, const HyperParamColumns& hp) {
  return ad::mean(sample_losses(probs, labels, hp));
}

ad::Var batch_loss(const ad::Var& probs, std::span<const std::size_t> labels, std::span<const HyperParams> per_sample) {
  if (per_sample.size() != labels.size()) throw ShapeError("batch_loss: hyperparameter count does not match batch");
  return batch_loss(probs, labels, constant_columns(probs.tape(), per_sample));
}

ad::Var mean_ce(const ad::Var& probs, std::span<const std::size_t> labels) {
  return ad::mean(ce_of(ad::pick(probs, labels)));
}

}  // namespace narl
