#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string_view>
#include <vector>

#include "narl/dataset.hpp"
#include "narl/rng.hpp"

namespace narl {

enum class NoiseKind { kSymmetric, kPairMap, kGroupUniform, kInstanceDependent };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kSymmetric;
  double eta = 0.0;
  std::map<std::size_t, std::size_t> pair_map;     // class -> target class
  std::vector<std::vector<std::size_t>> groups;    // partition of the classes
  std::uint64_t seed = 0;
};

NoiseKind parse_noise_kind(std::string_view name);

/// Every sample flips with probability eta to one of the other c - 1
/// classes, uniformly. Requires eta in [0, 1).
LabeledDataset inject_symmetric(const LabeledDataset& data, double eta, std::uint64_t seed);

/// Samples of a mapped class flip to map[class] with probability eta.
LabeledDataset inject_pair_map(const LabeledDataset& data, double eta, const std::map<std::size_t, std::size_t>& map,
                               std::uint64_t seed);

/// Flips with probability eta uniformly among the other members of the
/// sample's group. `groups` must partition the classes.
LabeledDataset inject_group_uniform(const LabeledDataset& data, double eta,
                                    const std::vector<std::vector<std::size_t>>& groups, std::uint64_t seed);

/// Per-sample draws of the instance-dependent generator.
struct InstanceNoiseTrace {
  std::vector<double> flip_rates;              // q of every sample
  std::vector<std::vector<double>> label_probs;  // p of every sample
};

/// q ~ N(eta, 0.1^2) truncated to [0, 1]; W (d x c) standard normal;
/// p = q * softmax(x W) with the labelled class removed, p_y = 1 - q.
LabeledDataset inject_instance_dependent(const LabeledDataset& data, double eta, std::uint64_t seed,
                                         InstanceNoiseTrace* trace = nullptr);

LabeledDataset inject_noise(const LabeledDataset& data, const NoiseSpec& spec);

/// Rejection sample from N(mean, sd^2) restricted to [lo, hi].
double sample_truncated_normal(Rng& rng, double mean, double sd, double lo, double hi);

/// Mean of N(mean, sd^2) restricted to [lo, hi].
double truncated_normal_mean(double mean, double sd, double lo, double hi);

}  // namespace narl
