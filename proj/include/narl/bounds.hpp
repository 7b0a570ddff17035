#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "narl/losses.hpp"

namespace narl {

/// Interval [c_l, c_u] containing every class-sum of a bounded loss.
struct BoundPair {
  double c_l = 0.0;
  double c_u = 0.0;
  double gap = 0.0;
};

/// Builds a pair and checks c_l <= c_u (with a 1e-12 slack).
BoundPair make_bound(double c_l, double c_u);

struct RiskGapBound {
  double eta = 0.0;
  std::size_t c = 0;
  double upper_noisy = 0.0;  // eta * gap / (c - 1)
  double lower_clean = 0.0;  // -eta * gap / (c - 1 - eta * c)
};

/// Constants of fixed-hyperparameter GCE, RCE, PolySoft and JS. PolySoft
/// requires lambda >= log c, otherwise DomainError.
BoundPair thm1_constants(const HyperParams& hp, std::size_t c);

/// Constants of the noise-aware variants (GCE, JS, PolySoft). `plateau`
/// carries lambda and d of the samples with positive margin.
BoundPair thm2_constants(LossKind kind, std::size_t c, const PolySoftParams& plateau = {});

/// Throws DomainError unless 0 <= eta < (c - 1) / c.
RiskGapBound risk_gap(const BoundPair& bound, double eta, std::size_t c);

/// Sum of L(f, j) over every class j.
double class_sum(const SimplexVector& f, const HyperParams& hp);
/// Same, with class j evaluated under per_class[j].
double class_sum(const SimplexVector& f, std::span<const HyperParams> per_class);

/// Interval for sum_i (1 - f_i^{q_i}) / q_i given per-class q and a pivot
/// class j, ordered as (min, max).
BoundPair noise_aware_gce_class_sum_bounds(const SimplexVector& f, std::span<const double> q, std::size_t j);

struct Fig2Settings {
  double q = 0.7;
  double lambda = 2.0;
  double d = 2.0;
  double pi1 = 0.5;
  /// Subset of {gce, js, polysoft}; empty means all three.
  std::vector<LossKind> losses;
};

struct Fig2Row {
  std::size_t c = 0;
  LossKind loss = LossKind::kGce;
  bool noise_aware = false;
  BoundPair bound;
};

/// Rows for every c in `cs`. Fixed PolySoft rows with lambda < log c are
/// left out (the bound does not hold there).
std::vector<Fig2Row> fig2_rows(std::span<const std::size_t> cs, const Fig2Settings& settings);

/// CSV `c,loss_name,variant,c_l,c_u,gap`, 9 significant digits.
void emit_fig2_curves(std::span<const std::size_t> cs, const Fig2Settings& settings,
                      const std::filesystem::path& path);

}  // namespace narl
