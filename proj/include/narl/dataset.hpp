#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "narl/tensor.hpp"

namespace narl {

/// Features with observed (possibly noisy) labels and the ground truth.
struct LabeledDataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // row-major, size() x dim
  std::vector<std::size_t> labels;
  std::vector<std::size_t> clean_labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  bool is_noisy(std::size_t i) const { return labels[i] != clean_labels[i]; }
  /// Throws ShapeError / DomainError on inconsistent fields.
  void validate() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Class means spaced evenly on a circle of radius `separation` in the first
/// two coordinates; unit-variance isotropic noise around each mean.
LabeledDataset gen_gaussian_mixture(std::size_t c, std::size_t per_class_n, std::size_t d, double separation,
                                    std::uint64_t seed);

struct MetaSplit {
  LabeledDataset train;
  LabeledDataset meta;
  std::vector<std::size_t> meta_indices;
};

/// Stratified split: floor(M/c) samples per class go to the meta set, the
/// remainder one each to the lowest classes. Call on clean data.
MetaSplit split_meta(const LabeledDataset& data, std::size_t m, std::uint64_t seed);

LabeledDataset subset(const LabeledDataset& data, std::span<const std::size_t> indices);

/// Per-class counts of the observed labels.
std::vector<std::size_t> class_counts(const LabeledDataset& data);

/// Fraction of samples whose observed label differs from the clean one.
double noise_fraction(const LabeledDataset& data);

/// Features of the given rows as an n x dim tensor.
Tensor feature_matrix(const LabeledDataset& data, std::span<const std::size_t> rows);
Tensor feature_matrix(const LabeledDataset& data);

/// CSV with header feat_0,...,feat_{d-1},label,clean_label.
void write_dataset(const LabeledDataset& data, const std::filesystem::path& path);
/// The class count is taken from `num_classes` when given, otherwise as one
/// more than the largest label.
LabeledDataset read_dataset(const std::filesystem::path& path, std::optional<std::size_t> num_classes = {});

}  // namespace narl
