#include "narl/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "narl/errors.hpp"
#include "narl/text_io.hpp"

namespace narl {

namespace {

void require_classes(std::size_t c) {
  if (c < 2) throw DomainError("need at least 2 classes, got " + std::to_string(c));
}

const char* variant_name(bool noise_aware) { return noise_aware ? "noise_aware" : "fixed"; }

}  // namespace

BoundPair make_bound(double c_l, double c_u) {
  if (!(c_l <= c_u + 1e-12)) throw DomainError("bound has c_l > c_u");
  return {c_l, c_u, std::max(0.0, c_u - c_l)};
}

BoundPair thm1_constants(const HyperParams& hp, std::size_t c) {
  require_classes(c);
  validate(hp);
  const double cd = static_cast<double>(c);
  switch (kind_of(hp)) {
    case LossKind::kGce: {
      const double q = std::get<GceParams>(hp).q;
      return make_bound((cd - std::pow(cd, 1.0 - q)) / q, (cd - 1.0) / q);
    }
    case LossKind::kRce: {
      const double v = -std::get<RceParams>(hp).a * (cd - 1.0);
      return make_bound(v, v);
    }
    case LossKind::kPolySoft: {
      const auto& p = std::get<PolySoftParams>(hp);
      const double logc = std::log(cd);
      if (p.lambda < logc - 1e-12) {
        throw DomainError("polysoft bound needs lambda >= log c (" + std::to_string(logc) + ")");
      }
      const double scale = cd * (p.d - 1.0) / p.d;
      return make_bound(scale * logc, scale * std::max(p.lambda, logc));
    }
    case LossKind::kJs:
      return make_bound(class_sum(SimplexVector::uniform(c), hp), class_sum(SimplexVector::one_hot(c, 0), hp));
    default:
      throw UnsupportedError("no bound constants for loss '" + std::string(loss_name(kind_of(hp))) + "'");
  }
}

BoundPair thm2_constants(LossKind kind, std::size_t c, const PolySoftParams& plateau) {
  require_classes(c);
  const double cd = static_cast<double>(c);
  switch (kind) {
    case LossKind::kGce:
    case LossKind::kJs: return make_bound(cd - 1.0, cd - 2.0 + 1.0 / cd + std::log(cd));
    case LossKind::kPolySoft:
      validate(plateau);
      return make_bound(0.0, (plateau.d - 1.0) * plateau.lambda / plateau.d);
    default:
      throw UnsupportedError("no noise-aware constants for loss '" + std::string(loss_name(kind)) + "'");
  }
}

RiskGapBound risk_gap(const BoundPair& bound, double eta, std::size_t c) {
  require_classes(c);
  const double cd = static_cast<double>(c);
  if (!(eta >= 0.0 && eta < (cd - 1.0) / cd)) {
    throw DomainError("noise rate " + std::to_string(eta) + " outside [0, (c-1)/c)");
  }
  RiskGapBound r;
  r.eta = eta;
  r.c = c;
  r.upper_noisy = eta * bound.gap / (cd - 1.0);
  r.lower_clean = -eta * bound.gap / (cd - 1.0 - eta * cd);
  return r;
}

double class_sum(const SimplexVector& f, const HyperParams& hp) {
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) s += loss(f, j, hp);
  return s;
}

double class_sum(const SimplexVector& f, std::span<const HyperParams> per_class) {
  if (per_class.size() != f.size()) throw ShapeError("class_sum: need one hyperparameter set per class");
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) s += loss(f, j, per_class[j]);
  return s;
}

BoundPair noise_aware_gce_class_sum_bounds(const SimplexVector& f, std::span<const double> q, std::size_t j) {
  const std::size_t c = f.size();
  require_classes(c);
  if (q.size() != c) throw ShapeError("need one q per class");
  if (j >= c) throw ShapeError("pivot class out of range");
  for (double v : q) validate(GceParams{v});
  double qmin = 1.0, qmax = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    if (i == j) continue;
    qmin = std::min(qmin, q[i]);
    qmax = std::max(qmax, q[i]);
  }
  const double cd = static_cast<double>(c), fj = f[j];
  const double own = (1.0 - std::pow(fj, q[j])) / q[j];
  const double a = (cd - 1.0 - std::pow(cd - 1.0, 1.0 - qmin) * std::pow(1.0 - fj, qmin)) / qmax + own;
  const double b = (cd - 2.0 + fj) / qmin + own;
  return make_bound(std::min(a, b), std::max(a, b));
}

std::vector<Fig2Row> fig2_rows(std::span<const std::size_t> cs, const Fig2Settings& settings) {
  if (cs.empty()) throw ConfigError("fig2: empty class range");
  std::vector<LossKind> losses = settings.losses;
  if (losses.empty()) losses = {LossKind::kGce, LossKind::kJs, LossKind::kPolySoft};
  const PolySoftParams poly{settings.lambda, settings.d};
  std::vector<Fig2Row> rows;
  for (std::size_t c : cs) {
    for (LossKind kind : losses) {
      HyperParams fixed;
      switch (kind) {
        case LossKind::kGce: fixed = GceParams{settings.q}; break;
        case LossKind::kJs: fixed = JsParams{settings.pi1}; break;
        case LossKind::kPolySoft: fixed = poly; break;
        default: throw UnsupportedError("fig2 covers gce, js and polysoft only");
      }
      const bool poly_ok = kind != LossKind::kPolySoft || settings.lambda >= std::log(static_cast<double>(c));
      if (poly_ok) rows.push_back({c, kind, false, thm1_constants(fixed, c)});
      rows.push_back({c, kind, true, thm2_constants(kind, c, poly)});
    }
  }
  return rows;
}

void emit_fig2_curves(std::span<const std::size_t> cs, const Fig2Settings& settings,
                      const std::filesystem::path& path) {
  const auto rows = fig2_rows(cs, settings);
  auto out = text::open_for_write(path);
  out << "c,loss_name,variant,c_l,c_u,gap\n";
  for (const auto& r : rows) {
    out << r.c << ',' << loss_name(r.loss) << ',' << variant_name(r.noise_aware) << ','
        << text::format_double(r.bound.c_l, 9) << ',' << text::format_double(r.bound.c_u, 9) << ','
        << text::format_double(r.bound.gap, 9) << '\n';
  }
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace narl
