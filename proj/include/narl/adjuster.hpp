#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "narl/autodiff.hpp"
#include "narl/losses.hpp"

namespace narl {

/// Hyperparameter predictor: margin -> hidden relu layer -> one sigmoid head
/// per task family, scaled by `scale`. The head is chosen by the nearest
/// cluster center to the sample's class count.
struct AdjusterParams {
  LossKind kind = LossKind::kGce;
  Tensor w1;  // 1 x hidden
  Tensor b1;  // 1 x hidden
  Tensor w2;  // hidden x (K * width)
  Tensor b2;  // 1 x (K * width)
  std::vector<double> centers;  // ascending, K entries
  std::vector<double> scale;    // one per hyperparameter
  /// Standardize margins within each batch before the first layer.
  bool standardize_margins = false;

  std::size_t num_families() const { return centers.size(); }
  std::size_t width() const { return scale.size(); }
  std::size_t hidden() const { return w1.cols(); }
  /// w1, b1, w2, b2.
  std::vector<Tensor> theta() const;
  void set_theta(std::span<const Tensor> theta);
  /// Throws ConfigError / ShapeError when the fields disagree.
  void validate() const;

  friend bool operator==(const AdjusterParams&, const AdjusterParams&) = default;
};

inline constexpr std::size_t kDefaultAdjusterHidden = 100;

/// Loss kinds the adjuster can drive: gce, sl, polysoft, js.
bool adjustable(LossKind kind);

/// Default scale vector: gce (1), sl (1, 1), polysoft (lambda_max = 8,
/// d_max - 1 = 9), js (1).
std::vector<double> default_scale(LossKind kind);

/// 1-D Lloyd's algorithm over class counts, started from K distinct count
/// values picked by `seed`; stops at an assignment fixed point. Centers are
/// returned ascending.
std::vector<double> kmeans_fit(std::span<const std::size_t> class_counts, std::size_t k, std::uint64_t seed);

/// Index of the nearest center; ties go to the lower index.
std::size_t family_index(double class_count, std::span<const double> centers);
std::vector<double> family_onehot(double class_count, std::span<const double> centers);

/// Fan-based uniform init for both layers, zero biases. `scale` defaults to
/// default_scale(kind).
AdjusterParams init_adjuster(LossKind kind, std::vector<double> centers, std::uint64_t seed,
                             std::size_t hidden = kDefaultAdjusterHidden, std::vector<double> scale = {});

/// Per-sample hyperparameter columns on the tape, differentiable w.r.t.
/// `theta` (w1, b1, w2, b2 vars). Margins enter as constants.
HyperParamColumns predict_columns(ad::Tape& tape, std::span<const ad::Var> theta, const AdjusterParams& params,
                                  std::span<const double> margins, std::span<const double> class_counts);

std::vector<HyperParams> batch_predict(std::span<const double> margins, std::span<const double> class_counts,
                                       const AdjusterParams& params);
HyperParams predict_hyperparams(double margin, double class_count, const AdjusterParams& params);

/// Text checkpoint, 17 significant digits; loads back bit-exactly.
void save_adjuster(const AdjusterParams& params, const std::filesystem::path& path);
AdjusterParams load_adjuster(const std::filesystem::path& path);

}  // namespace narl
