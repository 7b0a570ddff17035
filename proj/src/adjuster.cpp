#include "narl/adjuster.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "narl/errors.hpp"
#include "narl/rng.hpp"
#include "narl/text_io.hpp"

namespace narl {

namespace {

constexpr double kQFloor = 1e-3;
constexpr double kPiMargin = 1e-3;
// Floors for sigmoid outputs that saturate to exactly 0.
constexpr double kPositiveFloor = 1e-6;
constexpr double kDegreeFloor = 1e-3;

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = dist(rng);
  return Tensor::matrix(fan_in, fan_out, std::move(w));
}

std::vector<double> standardized(std::span<const double> m) {
  double mean = 0.0;
  for (double v : m) mean += v;
  mean /= static_cast<double>(m.size());
  double var = 0.0;
  for (double v : m) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(m.size())), 1e-8);
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = (m[i] - mean) / sd;
  return out;
}

void write_values(std::ostream& out, const char* label, std::span<const double> values) {
  out << label;
  for (double v : values) out << ' ' << text::format_double(v);
  out << '\n';
}

std::vector<double> read_values(text::TokenReader& in, const char* label, std::size_t n) {
  in.expect(label);
  std::vector<double> v(n);
  for (auto& x : v) x = in.next_double();
  return v;
}

}  // namespace

std::vector<Tensor> AdjusterParams::theta() const { return {w1, b1, w2, b2}; }

void AdjusterParams::set_theta(std::span<const Tensor> theta) {
  if (theta.size() != 4) throw ShapeError("adjuster theta needs 4 tensors");
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor& cur = i == 0 ? w1 : i == 1 ? b1 : i == 2 ? w2 : b2;
    if (!same_shape(cur, theta[i])) throw ShapeError("adjuster theta tensor " + std::to_string(i) + " has wrong shape");
  }
  w1 = theta[0];
  b1 = theta[1];
  w2 = theta[2];
  b2 = theta[3];
}

void AdjusterParams::validate() const {
  if (!adjustable(kind)) throw ConfigError("the adjuster cannot drive loss '" + std::string(loss_name(kind)) + "'");
  if (centers.empty()) throw ConfigError("adjuster needs at least one task family");
  if (!std::is_sorted(centers.begin(), centers.end())) throw ConfigError("adjuster centers must be ascending");
  if (scale.size() != hyperparam_count(kind)) {
    throw ConfigError("adjuster scale has " + std::to_string(scale.size()) + " entries, loss '" +
                      std::string(loss_name(kind)) + "' needs " + std::to_string(hyperparam_count(kind)));
  }
  for (double s : scale) {
    if (!(s > 0.0)) throw ConfigError("adjuster scale entries must be positive");
  }
  const std::size_t h = w1.is_matrix() ? w1.cols() : 0;
  const std::size_t out = num_families() * width();
  if (!w1.is_matrix() || w1.rows() != 1 || !b1.is_matrix() || b1.rows() != 1 || b1.cols() != h ||
      !w2.is_matrix() || w2.rows() != h || w2.cols() != out || !b2.is_matrix() || b2.rows() != 1 ||
      b2.cols() != out) {
    throw ShapeError("adjuster weights do not match K = " + std::to_string(num_families()) + " heads of width " +
                     std::to_string(width()));
  }
}

bool adjustable(LossKind kind) {
  return kind == LossKind::kGce || kind == LossKind::kSl || kind == LossKind::kPolySoft || kind == LossKind::kJs;
}

std::vector<double> default_scale(LossKind kind) {
  switch (kind) {
    case LossKind::kGce:
    case LossKind::kJs: return {1.0};
    case LossKind::kSl: return {1.0, 1.0};
    case LossKind::kPolySoft: return {8.0, 9.0};
    default: throw ConfigError("the adjuster cannot drive loss '" + std::string(loss_name(kind)) + "'");
  }
}

std::vector<double> kmeans_fit(std::span<const std::size_t> class_counts, std::size_t k, std::uint64_t seed) {
  if (class_counts.empty()) throw ConfigError("kmeans: no class counts");
  const std::set<std::size_t> distinct_set(class_counts.begin(), class_counts.end());
  if (k == 0 || k > distinct_set.size()) {
    throw ConfigError("kmeans: K = " + std::to_string(k) + " but only " + std::to_string(distinct_set.size()) +
                      " distinct counts");
  }
  std::vector<double> distinct(distinct_set.begin(), distinct_set.end());
  Rng rng(seed);
  std::shuffle(distinct.begin(), distinct.end(), rng);
  std::vector<double> centers(distinct.begin(), distinct.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(centers.begin(), centers.end());

  const std::size_t n = class_counts.size();
  std::vector<std::size_t> assign(n, k);
  while (true) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = family_index(static_cast<double>(class_counts[i]), centers);
      if (a != assign[i]) {
        assign[i] = a;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> size(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] += static_cast<double>(class_counts[i]);
      ++size[assign[i]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (size[j] > 0) {
        centers[j] = sum[j] / static_cast<double>(size[j]);
        continue;
      }
      // empty cluster: move it onto the point farthest from its center
      std::size_t far = 0;
      double best = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dist = std::abs(static_cast<double>(class_counts[i]) - centers[assign[i]]);
        if (dist > best) {
          best = dist;
          far = i;
        }
      }
      centers[j] = static_cast<double>(class_counts[far]);
    }
    // keep centers ordered so that indices stay meaningful between rounds
    std::vector<std::size_t> order(k);
    for (std::size_t j = 0; j < k; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return centers[a] < centers[b]; });
    std::vector<double> sorted(k);
    std::vector<std::size_t> rank(k);
    for (std::size_t j = 0; j < k; ++j) {
      sorted[j] = centers[order[j]];
      rank[order[j]] = j;
    }
    centers = sorted;
    for (auto& a : assign) a = rank[a];
  }
  return centers;
}

std::size_t family_index(double class_count, std::span<const double> centers) {
  if (centers.empty()) throw ConfigError("no task-family centers");
  std::size_t best = 0;
  double best_d = std::abs(class_count - centers[0]);
  for (std::size_t k = 1; k < centers.size(); ++k) {
    const double d = std::abs(class_count - centers[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::vector<double> family_onehot(double class_count, std::span<const double> centers) {
  std::vector<double> v(centers.size(), 0.0);
  v[family_index(class_count, centers)] = 1.0;
  return v;
}

AdjusterParams init_adjuster(LossKind kind, std::vector<double> centers, std::uint64_t seed, std::size_t hidden,
                             std::vector<double> scale) {
  if (hidden == 0) throw ConfigError("adjuster hidden width must be positive");
  AdjusterParams p;
  p.kind = kind;
  p.centers = std::move(centers);
  p.scale = scale.empty() ? default_scale(kind) : std::move(scale);
  const std::size_t out = p.centers.size() * p.scale.size();
  Rng rng(seed);
  p.w1 = glorot(1, hidden, rng);
  p.b1 = Tensor::zeros({1, hidden});
  p.w2 = glorot(hidden, std::max<std::size_t>(out, 1), rng);
  p.b2 = Tensor::zeros({1, std::max<std::size_t>(out, 1)});
  p.validate();
  return p;
}

HyperParamColumns predict_columns(ad::Tape& tape, std::span<const ad::Var> theta, const AdjusterParams& params,
                                  std::span<const double> margins, std::span<const double> class_counts) {
  params.validate();
  if (theta.size() != 4) throw ShapeError("adjuster theta needs 4 vars");
  if (margins.size() != class_counts.size()) throw ShapeError("margins and class counts differ in length");
  if (margins.empty()) throw ShapeError("empty batch");
  const std::size_t n = margins.size(), width = params.width();
  std::vector<double> input = params.standardize_margins ? standardized(margins)
                                                         : std::vector<double>(margins.begin(), margins.end());
  const ad::Var m = tape.constant(Tensor::column(std::move(input)));
  const ad::Var h = ad::relu(ad::affine(m, theta[0], theta[1]));
  const ad::Var out = ad::sigmoid(ad::affine(h, theta[2], theta[3]));

  std::vector<std::size_t> family(n);
  for (std::size_t i = 0; i < n; ++i) family[i] = family_index(class_counts[i], params.centers);
  std::vector<ad::Var> raw;
  for (std::size_t j = 0; j < width; ++j) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = family[i] * width + j;
    raw.push_back(params.scale[j] * ad::pick(out, idx));
  }

  HyperParamColumns cols;
  cols.kind = params.kind;
  switch (params.kind) {
    case LossKind::kGce: cols.columns = {ad::clamp(raw[0], kQFloor, 1.0)}; break;
    case LossKind::kSl:
      cols.columns = {ad::clamp(raw[0], kPositiveFloor, HUGE_VAL), ad::clamp(raw[1], kPositiveFloor, HUGE_VAL)};
      break;
    case LossKind::kPolySoft:
      cols.columns = {ad::clamp(raw[0], kPositiveFloor, HUGE_VAL), 1.0 + ad::clamp(raw[1], kDegreeFloor, HUGE_VAL)};
      break;
    case LossKind::kJs: cols.columns = {ad::clamp(raw[0], kPiMargin, 1.0 - kPiMargin)}; break;
    default: throw ConfigError("the adjuster cannot drive loss '" + std::string(loss_name(params.kind)) + "'");
  }
  return cols;
}

std::vector<HyperParams> batch_predict(std::span<const double> margins, std::span<const double> class_counts,
                                       const AdjusterParams& params) {
  if (margins.size() != class_counts.size()) throw ShapeError("margins and class counts differ in length");
  if (margins.empty()) return {};
  ad::Tape tape;
  std::vector<ad::Var> theta;
  for (const auto& t : params.theta()) theta.push_back(tape.constant(t));
  const auto cols = predict_columns(tape, theta, params, margins, class_counts);
  std::vector<HyperParams> out;
  out.reserve(margins.size());
  for (std::size_t i = 0; i < margins.size(); ++i) {
    const auto at = [&](std::size_t j) { return cols.columns[j].value()[i]; };
    switch (params.kind) {
      case LossKind::kGce: out.push_back(GceParams{at(0)}); break;
      case LossKind::kSl: out.push_back(SlParams{at(0), at(1), kDefaultRceA}); break;
      case LossKind::kPolySoft: out.push_back(PolySoftParams{at(0), at(1)}); break;
      case LossKind::kJs: out.push_back(JsParams{at(0)}); break;
      default: break;
    }
  }
  return out;
}

HyperParams predict_hyperparams(double margin, double class_count, const AdjusterParams& params) {
  const double m[] = {margin};
  const double c[] = {class_count};
  return batch_predict(m, c, params).front();
}

void save_adjuster(const AdjusterParams& params, const std::filesystem::path& path) {
  params.validate();
  auto out = text::open_for_write(path);
  out << "narl-adjuster 1\n";
  out << "kind " << loss_name(params.kind) << '\n';
  out << "families " << params.num_families() << '\n';
  out << "width " << params.width() << '\n';
  out << "hidden " << params.hidden() << '\n';
  out << "standardize " << (params.standardize_margins ? 1 : 0) << '\n';
  write_values(out, "centers", params.centers);
  write_values(out, "scale", params.scale);
  write_values(out, "w1", params.w1.data());
  write_values(out, "b1", params.b1.data());
  write_values(out, "w2", params.w2.data());
  write_values(out, "b2", params.b2.data());
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

AdjusterParams load_adjuster(const std::filesystem::path& path) {
  text::TokenReader in(path);
  in.expect("narl-adjuster");
  in.expect("1");
  AdjusterParams p;
  in.expect("kind");
  try {
    p.kind = parse_loss_kind(in.next());
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), in.line());
  }
  in.expect("families");
  const std::size_t k = in.next_size();
  in.expect("width");
  const std::size_t width = in.next_size();
  in.expect("hidden");
  const std::size_t hidden = in.next_size();
  in.expect("standardize");
  p.standardize_margins = in.next_size() != 0;
  if (k == 0 || width == 0 || hidden == 0) throw ParseError("adjuster dimensions must be positive", in.line());
  p.centers = read_values(in, "centers", k);
  p.scale = read_values(in, "scale", width);
  p.w1 = Tensor::matrix(1, hidden, read_values(in, "w1", hidden));
  p.b1 = Tensor::matrix(1, hidden, read_values(in, "b1", hidden));
  p.w2 = Tensor::matrix(hidden, k * width, read_values(in, "w2", hidden * k * width));
  p.b2 = Tensor::matrix(1, k * width, read_values(in, "b2", k * width));
  if (!in.at_end()) throw ParseError("trailing data after adjuster", in.line());
  p.validate();
  return p;
}

}  // namespace narl
