#include "narl/classifier.hpp"

#include <cmath>
#include <limits>

#include "narl/errors.hpp"
#include "narl/rng.hpp"
#include "narl/text_io.hpp"

namespace narl {

std::size_t ClassifierParams::input_dim() const {
  if (layers.empty()) throw ShapeError("classifier has no layers");
  return layers.front().weight.rows();
}

std::size_t ClassifierParams::num_classes() const {
  if (layers.empty()) throw ShapeError("classifier has no layers");
  return layers.back().weight.cols();
}

std::vector<Tensor> ClassifierParams::flatten() const {
  std::vector<Tensor> out;
  out.reserve(2 * layers.size());
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

ClassifierParams ClassifierParams::unflatten(std::span<const Tensor> tensors) {
  if (tensors.size() % 2 != 0 || tensors.empty()) throw ShapeError("classifier: expected weight/bias pairs");
  ClassifierParams p;
  for (std::size_t i = 0; i < tensors.size(); i += 2) p.layers.push_back({tensors[i], tensors[i + 1]});
  p.validate();
  return p;
}

void ClassifierParams::validate() const {
  if (layers.empty()) throw ShapeError("classifier has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (!l.weight.is_matrix() || !l.bias.is_matrix() || l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
      throw ShapeError("classifier layer " + std::to_string(i) + " has inconsistent weight/bias shapes");
    }
    if (i > 0 && layers[i - 1].weight.cols() != l.weight.rows()) {
      throw ShapeError("classifier layers " + std::to_string(i - 1) + " and " + std::to_string(i) + " do not chain");
    }
  }
}

ClassifierParams init_classifier(std::span<const std::size_t> widths, std::uint64_t seed) {
  if (widths.size() < 2) throw ShapeError("classifier needs at least input and output widths");
  Rng rng(seed);
  ClassifierParams p;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t fan_in = widths[i], fan_out = widths[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = dist(rng);
    p.layers.push_back({Tensor::matrix(fan_in, fan_out, std::move(w)), Tensor::zeros({1, fan_out})});
  }
  return p;
}

Tensor forward_logits(const ClassifierParams& params, const Tensor& x) {
  if (!x.is_matrix() || x.cols() != params.input_dim()) {
    throw ShapeError("classifier input " + shape_string(x.shape()) + " does not match input dim " +
                     std::to_string(params.input_dim()));
  }
  const Tensor ones = Tensor::full({x.rows(), 1}, 1.0);
  Tensor h = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    h = kernels::add(kernels::matmul(h, l.weight), kernels::matmul(ones, l.bias));
    if (i + 1 < params.layers.size()) h = kernels::relu(h);
  }
  return h;
}

ad::Var forward_logits(std::span<const ad::Var> params, const ad::Var& x) {
  if (params.empty() || params.size() % 2 != 0) throw ShapeError("classifier: expected weight/bias pairs");
  if (x.value().cols() != params[0].value().rows()) {
    throw ShapeError("classifier input " + shape_string(x.shape()) + " does not match first layer");
  }
  ad::Var h = x;
  const std::size_t layers = params.size() / 2;
  for (std::size_t i = 0; i < layers; ++i) {
    h = ad::affine(h, params[2 * i], params[2 * i + 1]);
    if (i + 1 < layers) h = ad::relu(h);
  }
  return h;
}

Prediction predict(const ClassifierParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim()) {
    throw ShapeError("predict: input has " + std::to_string(x.size()) + " features, classifier expects " +
                     std::to_string(params.input_dim()));
  }
  const Tensor logits = forward_logits(params, Tensor::row({x.begin(), x.end()}));
  const Tensor probs = kernels::softmax_rows(logits);
  return {logits.to_vector(), probs.to_vector()};
}

double margin(std::span<const double> logits, std::size_t y) {
  if (y >= logits.size()) throw ShapeError("margin: class index out of range");
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != y && logits[j] > best_other) best_other = logits[j];
  }
  return logits[y] - best_other;
}

std::vector<double> margins(const Tensor& logits, std::span<const std::size_t> labels) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) throw ShapeError("margins: label count does not match rows");
  std::vector<double> out(n);
  const auto data = logits.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = margin(data.subspan(i * c, c), labels[i]);
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  std::vector<std::size_t> idx;
  kernels::max_rows(logits, &idx);
  return idx;
}

void save_classifier(const ClassifierParams& params, const std::filesystem::path& path) {
  params.validate();
  auto out = text::open_for_write(path);
  out << "narl-classifier 1\n";
  out << "layers " << params.layers.size() << "\n";
  for (const auto& l : params.layers) {
    out << l.weight.rows() << " " << l.weight.cols() << "\n";
    for (std::size_t i = 0; i < l.weight.numel(); ++i) out << (i ? " " : "") << text::format_double(l.weight[i]);
    out << "\n";
    for (std::size_t i = 0; i < l.bias.numel(); ++i) out << (i ? " " : "") << text::format_double(l.bias[i]);
    out << "\n";
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ClassifierParams load_classifier(const std::filesystem::path& path) {
  text::TokenReader in(path);
  in.expect("narl-classifier");
  in.expect("1");
  in.expect("layers");
  const std::size_t count = in.next_size();
  ClassifierParams p;
  for (std::size_t l = 0; l < count; ++l) {
    const std::size_t rows = in.next_size(), cols = in.next_size();
    if (rows == 0 || cols == 0) throw ParseError("layer dimensions must be positive", in.line());
    std::vector<double> w(rows * cols), b(cols);
    for (auto& v : w) v = in.next_double();
    for (auto& v : b) v = in.next_double();
    p.layers.push_back({Tensor::matrix(rows, cols, std::move(w)), Tensor::row(std::move(b))});
  }
  if (!in.at_end()) throw ParseError("trailing data after last layer", in.line());
  p.validate();
  return p;
}

}  // namespace narl
