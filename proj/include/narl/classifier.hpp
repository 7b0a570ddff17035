#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "narl/autodiff.hpp"
#include "narl/tensor.hpp"

namespace narl {

struct DenseLayer {
  Tensor weight;  // fan_in x fan_out
  Tensor bias;    // 1 x fan_out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// MLP with relu between layers and raw logits at the output.
struct ClassifierParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const;
  std::size_t num_classes() const;
  /// weight0, bias0, weight1, bias1, ...
  std::vector<Tensor> flatten() const;
  static ClassifierParams unflatten(std::span<const Tensor> tensors);
  /// Throws ShapeError unless consecutive layers chain.
  void validate() const;

  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

/// Layer widths including input and output, e.g. {2, 32, 32, 4}. Weights are
/// uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
ClassifierParams init_classifier(std::span<const std::size_t> widths, std::uint64_t seed);

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probs;
};

Prediction predict(const ClassifierParams& params, std::span<const double> x);

/// Logits for a batch (n x input_dim) without a tape.
Tensor forward_logits(const ClassifierParams& params, const Tensor& x);

/// Logits recorded on the tape; `params` as produced by flatten().
ad::Var forward_logits(std::span<const ad::Var> params, const ad::Var& x);

/// m(x, y) = logits[y] - max_{j != y} logits[j].
double margin(std::span<const double> logits, std::size_t y);
/// Margins of every row of an n x c logit matrix.
std::vector<double> margins(const Tensor& logits, std::span<const std::size_t> labels);

std::vector<std::size_t> argmax_rows(const Tensor& logits);

/// Text checkpoint:
///   narl-classifier 1
///   layers <L>
///   then per layer "<fan_in> <fan_out>", a weight line and a bias line,
///   each value printed with 17 significant digits.
void save_classifier(const ClassifierParams& params, const std::filesystem::path& path);
ClassifierParams load_classifier(const std::filesystem::path& path);

}  // namespace narl
