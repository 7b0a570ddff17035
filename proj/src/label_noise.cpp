#include "narl/label_noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "narl/errors.hpp"

namespace narl {

namespace {

void require_rate(double eta) {
  if (!(eta >= 0.0 && eta < 1.0)) throw DomainError("noise rate must lie in [0, 1), got " + std::to_string(eta));
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::size_t uniform_index(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "symmetric") return NoiseKind::kSymmetric;
  if (name == "pair_map") return NoiseKind::kPairMap;
  if (name == "group_uniform") return NoiseKind::kGroupUniform;
  if (name == "instance_dependent") return NoiseKind::kInstanceDependent;
  throw ConfigError("unknown noise kind '" + std::string(name) + "'");
}

LabeledDataset inject_symmetric(const LabeledDataset& data, double eta, std::uint64_t seed) {
  require_rate(eta);
  data.validate();
  LabeledDataset out = data;
  const std::size_t c = data.num_classes;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    if (uniform01(rng) >= eta) continue;
    const std::size_t y = data.labels[i];
    const std::size_t k = uniform_index(rng, c - 1);
    out.labels[i] = k < y ? k : k + 1;
  }
  return out;
}

LabeledDataset inject_pair_map(const LabeledDataset& data, double eta, const std::map<std::size_t, std::size_t>& map,
                               std::uint64_t seed) {
  // A certain flip (eta = 1) is allowed for a pair map.
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("noise rate must lie in [0, 1], got " + std::to_string(eta));
  data.validate();
  for (const auto& [from, to] : map) {
    if (from >= data.num_classes || to >= data.num_classes) {
      throw ConfigError("pair map " + std::to_string(from) + "->" + std::to_string(to) + " is out of range");
    }
  }
  LabeledDataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto it = map.find(data.labels[i]);
    if (it == map.end()) continue;
    Rng rng(derive_seed(seed, i));
    if (uniform01(rng) < eta) out.labels[i] = it->second;
  }
  return out;
}

LabeledDataset inject_group_uniform(const LabeledDataset& data, double eta,
                                    const std::vector<std::vector<std::size_t>>& groups, std::uint64_t seed) {
  require_rate(eta);
  data.validate();
  std::vector<std::size_t> group_of(data.num_classes, groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t k : groups[g]) {
      if (k >= data.num_classes) throw ConfigError("group member " + std::to_string(k) + " is out of range");
      if (group_of[k] != groups.size()) throw ConfigError("class " + std::to_string(k) + " appears in two groups");
      group_of[k] = g;
    }
  }
  for (std::size_t k = 0; k < data.num_classes; ++k) {
    if (group_of[k] == groups.size()) throw ConfigError("class " + std::to_string(k) + " belongs to no group");
  }
  LabeledDataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t y = data.labels[i];
    const auto& members = groups[group_of[y]];
    if (members.size() < 2) continue;
    Rng rng(derive_seed(seed, i));
    if (uniform01(rng) >= eta) continue;
    std::vector<std::size_t> others;
    for (std::size_t k : members)
      if (k != y) others.push_back(k);
    std::sort(others.begin(), others.end());
    out.labels[i] = others[uniform_index(rng, others.size())];
  }
  return out;
}

double sample_truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  if (!(lo < hi) || !(sd > 0.0)) throw DomainError("truncated normal needs lo < hi and sd > 0");
  if (normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd) < 1e-6) {
    throw DomainError("truncated normal has negligible mass on the interval");
  }
  std::normal_distribution<double> dist(mean, sd);
  while (true) {
    const double v = dist(rng);
    if (v >= lo && v <= hi) return v;
  }
}

double truncated_normal_mean(double mean, double sd, double lo, double hi) {
  const double a = (lo - mean) / sd, b = (hi - mean) / sd;
  return mean + sd * (normal_pdf(a) - normal_pdf(b)) / (normal_cdf(b) - normal_cdf(a));
}

LabeledDataset inject_instance_dependent(const LabeledDataset& data, double eta, std::uint64_t seed,
                                         InstanceNoiseTrace* trace) {
  require_rate(eta);
  data.validate();
  LabeledDataset out = data;
  const std::size_t c = data.num_classes, s = data.dim;
  if (trace) {
    trace->flip_rates.assign(data.size(), 0.0);
    trace->label_probs.assign(data.size(), {});
  }
  std::normal_distribution<double> standard(0.0, 1.0);
  std::vector<double> z(c), p(c);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    const double q = sample_truncated_normal(rng, eta, 0.1, 0.0, 1.0);
    const std::size_t y = data.labels[i];
    const auto x = data.row(i);
    std::vector<double> w(s * c);
    for (auto& v : w) v = standard(rng);
    double zmax = -HUGE_VAL;
    for (std::size_t j = 0; j < c; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s; ++k) acc += x[k] * w[k * c + j];
      z[j] = acc;
      if (j != y) zmax = std::max(zmax, acc);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = j == y ? 0.0 : std::exp(z[j] - zmax);
      total += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] = j == y ? 1.0 - q : q * p[j] / total;
    std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
    out.labels[i] = pick(rng);
    if (trace) {
      trace->flip_rates[i] = q;
      trace->label_probs[i] = p;
    }
  }
  return out;
}

LabeledDataset inject_noise(const LabeledDataset& data, const NoiseSpec& spec) {
  switch (spec.kind) {
    case NoiseKind::kSymmetric: return inject_symmetric(data, spec.eta, spec.seed);
    case NoiseKind::kPairMap: return inject_pair_map(data, spec.eta, spec.pair_map, spec.seed);
    case NoiseKind::kGroupUniform: return inject_group_uniform(data, spec.eta, spec.groups, spec.seed);
    case NoiseKind::kInstanceDependent: return inject_instance_dependent(data, spec.eta, spec.seed);
  }
  throw ConfigError("unknown noise kind");
}

}  // namespace narl
