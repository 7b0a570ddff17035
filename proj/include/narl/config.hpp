#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "narl/label_noise.hpp"
#include "narl/meta_train.hpp"

namespace narl {

struct DataConfig {
  std::size_t classes = 4;
  std::size_t per_class = 1300;
  std::size_t dim = 2;
  double separation = 3.0;
  std::size_t test_per_class = 500;
  std::size_t meta_size = 200;
};

/// Raw loss hyperparameters; the ones matching `train.kind` become
/// `train.fixed` in finalize().
struct LossValues {
  double q = 0.7;
  double gamma1 = 0.1;
  double gamma2 = 1.0;
  double rce_a = kDefaultRceA;
  double lambda = 2.0;
  double d = 2.0;
  double pi1 = 0.5;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  NoiseSpec noise{NoiseKind::kSymmetric, 0.4, {}, {}, 0};
  TrainConfig train;
  LossValues loss;

  /// Fills train.seed, train.fixed and noise.seed and validates.
  void finalize();
};

HyperParams make_hyperparams(LossKind kind, const LossValues& values);

/// Sets one `section.key`; throws ConfigError naming the key if it is
/// unknown or its value does not parse.
void apply_setting(ExperimentConfig& config, std::string_view section, std::string_view key, std::string_view value);

/// INI file with sections [experiment], [data], [noise], [train], [adjuster].
ExperimentConfig load_config(const std::filesystem::path& path);
void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path);

/// Every recognised key as "section.key = default", one per line.
std::string describe_config_keys();

/// "2..100" or "2,5,10" (mixable: "2..5,10").
std::vector<std::size_t> parse_size_list(std::string_view text);
std::vector<double> parse_double_list(std::string_view text);

}  // namespace narl

namespace narl {

struct ExperimentData {
  LabeledDataset train;  // noisy
  LabeledDataset meta;   // clean
  LabeledDataset test;   // clean, may be empty
};

/// Generates the mixture, carves the clean meta set, injects noise into the
/// rest and draws an independent test set, all from sub-seeds of
/// config.seed. Call after finalize().
ExperimentData make_experiment_data(const ExperimentConfig& config);

}  // namespace narl
