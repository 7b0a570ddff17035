#include "narl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "narl/errors.hpp"
#include "narl/rng.hpp"
#include "narl/text_io.hpp"

namespace narl {

void LabeledDataset::validate() const {
  if (clean_labels.size() != labels.size()) throw ShapeError("dataset: label and clean_label counts differ");
  if (features.size() != labels.size() * dim) throw ShapeError("dataset: feature matrix size mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || clean_labels[i] >= num_classes) {
      throw DomainError("dataset: label out of range at row " + std::to_string(i));
    }
  }
}

LabeledDataset gen_gaussian_mixture(std::size_t c, std::size_t per_class_n, std::size_t d, double separation,
                                    std::uint64_t seed) {
  if (c < 2) throw ConfigError("gaussian mixture needs c >= 2");
  if (d < 2) throw ConfigError("gaussian mixture needs d >= 2");
  if (per_class_n == 0) throw ConfigError("gaussian mixture needs per_class_n >= 1");
  if (!(separation > 0.0)) throw ConfigError("gaussian mixture needs separation > 0");
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  LabeledDataset out;
  out.dim = d;
  out.num_classes = c;
  const std::size_t n = c * per_class_n;
  out.features.reserve(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % c;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(y) / static_cast<double>(c);
    for (std::size_t k = 0; k < d; ++k) {
      double mean = 0.0;
      if (k == 0) mean = separation * std::cos(angle);
      if (k == 1) mean = separation * std::sin(angle);
      out.features.push_back(mean + noise(rng));
    }
    out.labels.push_back(y);
    out.clean_labels.push_back(y);
  }
  return out;
}

LabeledDataset subset(const LabeledDataset& data, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.dim = data.dim;
  out.num_classes = data.num_classes;
  out.features.reserve(indices.size() * data.dim);
  for (std::size_t i : indices) {
    if (i >= data.size()) throw ShapeError("subset: index out of range");
    const auto r = data.row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(data.labels[i]);
    out.clean_labels.push_back(data.clean_labels[i]);
  }
  return out;
}

MetaSplit split_meta(const LabeledDataset& data, std::size_t m, std::uint64_t seed) {
  data.validate();
  if (m >= data.size() && m > 0) throw ConfigError("meta set size must be smaller than the dataset");
  const std::size_t c = data.num_classes;
  std::vector<std::vector<std::size_t>> by_class(c);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  Rng rng(seed);
  std::vector<char> in_meta(data.size(), 0);
  for (std::size_t k = 0; k < c; ++k) {
    const std::size_t want = m / c + (k < m % c ? 1 : 0);
    auto& pool = by_class[k];
    if (want > pool.size()) throw ConfigError("class " + std::to_string(k) + " has too few samples for the meta set");
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t i = 0; i < want; ++i) in_meta[pool[i]] = 1;
  }
  MetaSplit out;
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < data.size(); ++i) (in_meta[i] ? out.meta_indices : train_idx).push_back(i);
  out.train = subset(data, train_idx);
  out.meta = subset(data, out.meta_indices);
  return out;
}

std::vector<std::size_t> class_counts(const LabeledDataset& data) {
  std::vector<std::size_t> counts(data.num_classes, 0);
  for (std::size_t y : data.labels) ++counts.at(y);
  return counts;
}

double noise_fraction(const LabeledDataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < data.size(); ++i) flipped += data.is_noisy(i) ? 1 : 0;
  return static_cast<double>(flipped) / static_cast<double>(data.size());
}

Tensor feature_matrix(const LabeledDataset& data, std::span<const std::size_t> rows) {
  std::vector<double> x;
  x.reserve(rows.size() * data.dim);
  for (std::size_t i : rows) {
    const auto r = data.row(i);
    x.insert(x.end(), r.begin(), r.end());
  }
  return Tensor::matrix(rows.size(), data.dim, std::move(x));
}

Tensor feature_matrix(const LabeledDataset& data) { return Tensor::matrix(data.size(), data.dim, data.features); }

void write_dataset(const LabeledDataset& data, const std::filesystem::path& path) {
  data.validate();
  auto out = text::open_for_write(path);
  for (std::size_t k = 0; k < data.dim; ++k) out << "feat_" << k << ',';
  out << "label,clean_label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) out << text::format_double(v) << ',';
    out << data.labels[i] << ',' << data.clean_labels[i] << '\n';
  }
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

LabeledDataset read_dataset(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  auto in = text::open_for_read(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  const auto header = text::split(text::trim(line), ',');
  if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "clean_label") {
    throw ParseError("header must be feat_0,...,feat_{d-1},label,clean_label", 1);
  }
  LabeledDataset data;
  data.dim = header.size() - 2;
  for (std::size_t k = 0; k < data.dim; ++k) {
    if (header[k] != "feat_" + std::to_string(k)) {
      throw ParseError("expected column 'feat_" + std::to_string(k) + "', got '" + std::string(header[k]) + "'", 1);
    }
  }
  std::size_t number = 1, max_label = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    const auto fields = text::split(trimmed, ',');
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()),
                       number);
    }
    for (std::size_t k = 0; k < data.dim; ++k) {
      const double v = text::parse_double(fields[k], number);
      if (!std::isfinite(v)) throw ParseError("non-finite feature", number);
      data.features.push_back(v);
    }
    const std::size_t y = text::parse_size(fields[data.dim], number);
    const std::size_t yc = text::parse_size(fields[data.dim + 1], number);
    if (num_classes && (y >= *num_classes || yc >= *num_classes)) throw ParseError("label out of range", number);
    max_label = std::max({max_label, y, yc});
    data.labels.push_back(y);
    data.clean_labels.push_back(yc);
  }
  if (data.size() == 0) throw ParseError("dataset has no rows", number);
  data.num_classes = num_classes ? *num_classes : max_label + 1;
  return data;
}

}  // namespace narl
