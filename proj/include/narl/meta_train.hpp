#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "narl/adjuster.hpp"
#include "narl/classifier.hpp"
#include "narl/dataset.hpp"
#include "narl/errors.hpp"
#include "narl/losses.hpp"

namespace narl {

struct TrainConfig {
  double alpha = 0.1;  // classifier step size
  double beta = 0.1;   // adjuster step size
  std::size_t batch_size = 100;
  std::size_t meta_batch_size = 100;
  std::size_t iterations = 3000;
  std::size_t meta_period = 5;
  std::uint64_t seed = 0;
  LossKind kind = LossKind::kGce;
  /// Hyperparameters of the fixed baseline.
  HyperParams fixed = GceParams{};
  std::vector<double> checkpoint_fractions = {1.0 / 3.0, 2.0 / 3.0, 1.0};

  double momentum = 0.0;
  double adjuster_momentum = 0.0;
  /// Iterations at which alpha is multiplied by lr_decay.
  std::vector<std::size_t> lr_milestones;
  double lr_decay = 0.1;

  std::vector<std::size_t> hidden_widths = {32, 32};
  std::size_t families = 1;
  std::size_t adjuster_hidden = kDefaultAdjusterHidden;
  std::vector<double> scale;  // empty: default_scale(kind)
  bool standardize_margins = false;

  /// Throws ConfigError on the first invalid field.
  void validate() const;
  double alpha_at(std::size_t t) const;
};

struct MetricRow {
  std::size_t iter = 0;
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
  std::optional<double> mean_hp_clean;
  std::optional<double> mean_hp_noisy;
};

struct AdjusterSnapshot {
  double fraction = 0.0;
  std::size_t iteration = 0;
  AdjusterParams params;
};

struct TrainResult {
  ClassifierParams classifier;
  std::optional<AdjusterParams> adjuster;
  std::vector<AdjusterSnapshot> snapshots;
  std::vector<MetricRow> metrics;
  std::size_t classifier_steps = 0;
  std::size_t adjuster_steps = 0;
};

/// Raised when a step produces non-finite values; carries the state from
/// before the failing iteration.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, std::size_t iteration, TrainResult last_good)
      : NumericalError(what), iteration_(iteration), last_good_(std::move(last_good)) {}

  std::size_t iteration() const { return iteration_; }
  const TrainResult& last_good() const { return last_good_; }

 private:
  std::size_t iteration_;
  TrainResult last_good_;
};

/// A minibatch: features (n x d) with observed labels and the class count of
/// each sample's label.
struct Batch {
  Tensor x;
  std::vector<std::size_t> labels;
  std::vector<double> class_counts;
};

Batch make_batch(const LabeledDataset& data, std::span<const std::size_t> rows,
                 std::span<const std::size_t> counts_by_class);

/// Mean robust loss of the classifier `w` on a batch, hyperparameters from
/// the adjuster (margins are evaluated at `w` and treated as constants).
ad::Var robust_batch_loss(ad::Tape& tape, std::span<const ad::Var> w, std::span<const ad::Var> theta,
                          const AdjusterParams& adjuster, const Batch& batch);

/// w - alpha * grad_w L(w; theta), values only.
std::vector<Tensor> lookahead_update(const ClassifierParams& w, const AdjusterParams& theta, const Batch& train,
                                     double alpha);

/// theta - beta * hypergradient of the meta CE loss through the lookahead.
AdjusterParams adjuster_step(const AdjusterParams& theta, const ClassifierParams& w, const Batch& train,
                             const Batch& meta, double alpha, double beta);

/// Plain SGD step of the classifier with the adjuster held constant.
ClassifierParams classifier_step(const ClassifierParams& w, const AdjusterParams& theta, const Batch& train,
                                 double alpha);

/// Same step with fixed per-sample hyperparameters.
ClassifierParams classifier_step(const ClassifierParams& w, const HyperParams& hp, const Batch& train, double alpha);

/// Alternating optimisation of classifier and adjuster. `test` is used for
/// metrics only.
TrainResult run_meta_train(const LabeledDataset& train, const LabeledDataset& meta, const TrainConfig& config,
                           const LabeledDataset* test = nullptr);

/// Baseline training with the fixed hyperparameters `config.fixed`.
TrainResult run_fixed_train(const LabeledDataset& train, const TrainConfig& config,
                            const LabeledDataset* test = nullptr);

/// Frozen snapshots applied over equal contiguous phases of a fresh
/// classifier's training; task families are refit on `train`.
TrainResult run_meta_test(const LabeledDataset& train, std::span<const AdjusterParams> snapshots,
                          const TrainConfig& config, const LabeledDataset* test = nullptr);

/// Index of the snapshot used at iteration t of T.
std::size_t phase_of(std::size_t t, std::size_t total, std::size_t phases);

double accuracy(const ClassifierParams& w, const LabeledDataset& data, bool clean_labels = false);

struct DiagnosticRow {
  std::size_t index = 0;
  double margin = 0.0;
  HyperParams hp;
  bool noisy = false;
};

/// Margin and predicted hyperparameters of every sample.
std::vector<DiagnosticRow> diagnose(const ClassifierParams& w, const AdjusterParams& theta, const LabeledDataset& data);

/// header iter,epoch,split,loss,accuracy,mean_hp_clean,mean_hp_noisy
void write_metrics(std::span<const MetricRow> rows, const std::filesystem::path& path);

/// "adjuster_k0.333.ckpt" style name of a snapshot.
std::string snapshot_filename(double fraction);

}  // namespace narl
