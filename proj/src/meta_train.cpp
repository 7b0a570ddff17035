#include "narl/meta_train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "narl/hypergradient.hpp"
#include "narl/rng.hpp"
#include "narl/text_io.hpp"

namespace narl {

namespace {

using ad::Tape;
using ad::Var;

std::vector<Var> constants(Tape& tape, std::span<const Tensor> ts) {
  std::vector<Var> out;
  for (const auto& t : ts) out.push_back(tape.constant(t));
  return out;
}

std::vector<Var> parameters(Tape& tape, std::span<const Tensor> ts) {
  std::vector<Var> out;
  for (const auto& t : ts) out.push_back(tape.parameter(t));
  return out;
}

Var fixed_batch_loss(Tape& tape, std::span<const Var> w, const HyperParams& hp, const Batch& batch) {
  const Var probs = ad::softmax_rows(forward_logits(w, tape.constant(batch.x)));
  const std::vector<HyperParams> per_sample(batch.labels.size(), hp);
  return batch_loss(probs, batch.labels, per_sample);
}

std::vector<Tensor> step(std::span<const Tensor> params, std::span<const Tensor> grads, double lr, double momentum,
                         std::vector<Tensor>* velocity) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  if (momentum > 0.0 && velocity) {
    if (velocity->empty()) {
      for (const auto& p : params) velocity->push_back(Tensor::zeros(p.shape()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      (*velocity)[i] = kernels::add(kernels::mul((*velocity)[i], Tensor::scalar(momentum)), grads[i]);
      out.push_back(kernels::sub(params[i], kernels::mul((*velocity)[i], Tensor::scalar(lr))));
    }
    return out;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(kernels::sub(params[i], kernels::mul(grads[i], Tensor::scalar(lr))));
  }
  return out;
}

void require_finite(std::span<const Tensor> ts, const char* what) {
  for (const auto& t : ts) {
    if (!t.all_finite()) throw NumericalError(std::string(what) + " produced non-finite values");
  }
}

std::vector<Tensor> adjuster_grad(const AdjusterParams& theta, const ClassifierParams& w, const Batch& train,
                                  const Batch& meta, double alpha) {
  const ad::InnerLossFn inner = [&](Tape& tape, std::span<const Var> wv, std::span<const Var> tv) {
    return robust_batch_loss(tape, wv, tv, theta, train);
  };
  const ad::OuterLossFn outer = [&](Tape& tape, std::span<const Var> wv) {
    return mean_ce(ad::softmax_rows(forward_logits(wv, tape.constant(meta.x))), meta.labels);
  };
  const auto wt = w.flatten();
  const auto tt = theta.theta();
  return ad::hypergradient(inner, outer, wt, tt, alpha).theta_grad;
}

struct StepGrad {
  std::vector<Tensor> grads;
  double loss = 0.0;
};

StepGrad classifier_grad(const ClassifierParams& w, const AdjusterParams* theta, const HyperParams* fixed,
                         const Batch& batch) {
  Tape tape;
  const auto wt = w.flatten();
  const auto wv = parameters(tape, wt);
  Var loss;
  if (theta) {
    const auto tt = theta->theta();
    loss = robust_batch_loss(tape, wv, constants(tape, tt), *theta, batch);
  } else {
    loss = fixed_batch_loss(tape, wv, *fixed, batch);
  }
  StepGrad g;
  g.loss = loss.value().item();
  g.grads = tape.backward(loss, wv).tensors();
  require_finite(g.grads, "classifier gradient");
  return g;
}

enum class Mode { kFixed, kMeta, kTransfer };

struct LoopInputs {
  Mode mode = Mode::kFixed;
  const LabeledDataset* meta = nullptr;
  std::vector<AdjusterParams> snapshots;
};

double primary_mean(std::span<const HyperParams> hps, const LabeledDataset& data, bool noisy) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < hps.size(); ++i) {
    if (data.is_noisy(i) != noisy) continue;
    s += primary_value(hps[i]);
    ++n;
  }
  return n ? s / static_cast<double>(n) : std::nan("");
}

std::vector<std::size_t> all_rows(const LabeledDataset& data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

void evaluate(const ClassifierParams& w, const AdjusterParams* theta, const HyperParams* fixed,
              const LabeledDataset& train, std::span<const std::size_t> counts, const LabeledDataset* test,
              std::size_t iter, std::size_t epoch, std::vector<MetricRow>& out) {
  const auto rows = all_rows(train);
  const Batch full = make_batch(train, rows, counts);
  Tape tape;
  const auto wt = w.flatten();
  const auto wv = constants(tape, wt);
  MetricRow tr;
  tr.iter = iter;
  tr.epoch = epoch;
  tr.split = "train";
  if (theta) {
    const auto tt = theta->theta();
    tr.loss = robust_batch_loss(tape, wv, constants(tape, tt), *theta, full).value().item();
    const auto m = margins(forward_logits(w, full.x), full.labels);
    const auto hps = batch_predict(m, full.class_counts, *theta);
    tr.mean_hp_clean = primary_mean(hps, train, false);
    tr.mean_hp_noisy = primary_mean(hps, train, true);
  } else {
    tr.loss = fixed_batch_loss(tape, wv, *fixed, full).value().item();
  }
  tr.accuracy = accuracy(w, train);
  out.push_back(tr);
  if (test && test->size() > 0) {
    MetricRow te;
    te.iter = iter;
    te.epoch = epoch;
    te.split = "test";
    const Tensor probs = kernels::softmax_rows(forward_logits(w, feature_matrix(*test)));
    Tape t2;
    te.loss = mean_ce(t2.constant(probs), test->labels).value().item();
    te.accuracy = accuracy(w, *test);
    out.push_back(te);
  }
}

TrainResult train_loop(const LabeledDataset& train, const TrainConfig& config, const LoopInputs& in,
                       const LabeledDataset* test) {
  config.validate();
  train.validate();
  if (train.size() == 0) throw ConfigError("training set is empty");
  if (in.mode == Mode::kMeta && (!in.meta || in.meta->size() == 0)) throw ConfigError("meta set is empty");
  if (in.mode == Mode::kMeta && in.meta->dim != train.dim) throw ConfigError("meta set feature dim differs");
  if (test && test->size() > 0 && test->dim != train.dim) throw ConfigError("test set feature dim differs");

  const auto counts = class_counts(train);
  std::vector<std::size_t> widths = {train.dim};
  widths.insert(widths.end(), config.hidden_widths.begin(), config.hidden_widths.end());
  widths.push_back(train.num_classes);

  TrainResult result;
  result.classifier = init_classifier(widths, sub_seed(config.seed, SeedStream::kClassifierInit));
  if (in.mode == Mode::kMeta) {
    const auto centers = kmeans_fit(counts, config.families, sub_seed(config.seed, SeedStream::kKMeans));
    auto adj = init_adjuster(config.kind, centers, sub_seed(config.seed, SeedStream::kAdjusterInit),
                             config.adjuster_hidden, config.scale);
    adj.standardize_margins = config.standardize_margins;
    result.adjuster = std::move(adj);
  }

  const std::size_t total = config.iterations;
  const std::size_t n = std::min(config.batch_size, train.size());
  const std::size_t per_epoch = std::max<std::size_t>(1, train.size() / n);
  Rng batch_rng(sub_seed(config.seed, SeedStream::kBatches));
  Rng meta_rng(derive_seed(sub_seed(config.seed, SeedStream::kBatches), 1));
  std::vector<std::size_t> perm = all_rows(train);
  std::vector<std::size_t> meta_counts;
  if (in.meta) meta_counts = class_counts(*in.meta);

  std::vector<std::pair<double, std::size_t>> marks;
  for (double f : config.checkpoint_fractions) {
    marks.emplace_back(f, static_cast<std::size_t>(std::llround(f * static_cast<double>(total))));
  }
  const auto take_snapshots = [&](std::size_t done) {
    if (!result.adjuster) return;
    for (const auto& [f, k] : marks) {
      if (k == done) result.snapshots.push_back({f, k, *result.adjuster});
    }
  };
  take_snapshots(0);

  std::vector<Tensor> w_velocity, theta_velocity;
  for (std::size_t t = 0; t < total; ++t) {
    if (t % per_epoch == 0) std::shuffle(perm.begin(), perm.end(), batch_rng);
    const std::size_t start = (t % per_epoch) * n;
    const std::span<const std::size_t> rows(perm.data() + start, n);
    const Batch batch = make_batch(train, rows, counts);
    const double alpha = config.alpha_at(t);
    const TrainResult last_good = result;
    try {
      if (in.mode == Mode::kMeta && t % config.meta_period == 0) {
        std::uniform_int_distribution<std::size_t> pick(0, in.meta->size() - 1);
        std::vector<std::size_t> meta_rows(config.meta_batch_size);
        for (auto& r : meta_rows) r = pick(meta_rng);
        const Batch meta = make_batch(*in.meta, meta_rows, meta_counts);
        const auto g = adjuster_grad(*result.adjuster, result.classifier, batch, meta, alpha);
        const auto tt = result.adjuster->theta();
        result.adjuster->set_theta(step(tt, g, config.beta, config.adjuster_momentum, &theta_velocity));
        ++result.adjuster_steps;
      }
      const AdjusterParams* theta = nullptr;
      if (in.mode == Mode::kMeta) theta = &*result.adjuster;
      if (in.mode == Mode::kTransfer) theta = &in.snapshots[phase_of(t, total, in.snapshots.size())];
      const auto g = classifier_grad(result.classifier, theta, &config.fixed, batch);
      const auto wt = result.classifier.flatten();
      result.classifier = ClassifierParams::unflatten(step(wt, g.grads, alpha, config.momentum, &w_velocity));
      ++result.classifier_steps;
      require_finite(result.classifier.flatten(), "classifier step");
    } catch (const NumericalError& e) {
      throw TrainingAborted("iteration " + std::to_string(t) + ": " + e.what(), t, last_good);
    }
    take_snapshots(t + 1);
    if ((t + 1) % per_epoch == 0 || t + 1 == total) {
      const AdjusterParams* theta = nullptr;
      if (in.mode == Mode::kMeta) theta = &*result.adjuster;
      if (in.mode == Mode::kTransfer) theta = &in.snapshots[phase_of(t, total, in.snapshots.size())];
      evaluate(result.classifier, theta, &config.fixed, train, counts, test, t + 1, (t + per_epoch) / per_epoch,
               result.metrics);
    }
  }
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (meta_batch_size == 0) throw ConfigError("meta_batch_size must be positive");
  if (meta_period == 0) throw ConfigError("meta_period must be at least 1");
  if (families == 0) throw ConfigError("families must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(adjuster_momentum >= 0.0 && adjuster_momentum < 1.0)) throw ConfigError("adjuster_momentum must lie in [0, 1)");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  for (double f : checkpoint_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("checkpoint fractions must lie in [0, 1]");
  }
  for (std::size_t h : hidden_widths) {
    if (h == 0) throw ConfigError("hidden widths must be positive");
  }
  try {
    narl::validate(fixed);
  } catch (const HyperParamError& e) {
    throw ConfigError(std::string("fixed hyperparameters: ") + e.what());
  }
}

double TrainConfig::alpha_at(std::size_t t) const {
  double a = alpha;
  for (std::size_t m : lr_milestones) {
    if (t >= m) a *= lr_decay;
  }
  return a;
}

Batch make_batch(const LabeledDataset& data, std::span<const std::size_t> rows,
                 std::span<const std::size_t> counts_by_class) {
  if (rows.empty()) throw ShapeError("empty batch");
  Batch b;
  b.x = feature_matrix(data, rows);
  for (std::size_t i : rows) {
    b.labels.push_back(data.labels[i]);
    b.class_counts.push_back(static_cast<double>(counts_by_class[data.labels[i]]));
  }
  return b;
}

ad::Var robust_batch_loss(Tape& tape, std::span<const Var> w, std::span<const Var> theta,
                          const AdjusterParams& adjuster, const Batch& batch) {
  const Var logits = forward_logits(w, tape.constant(batch.x));
  const auto m = margins(logits.value(), batch.labels);
  const auto cols = predict_columns(tape, theta, adjuster, m, batch.class_counts);
  return batch_loss(ad::softmax_rows(logits), batch.labels, cols);
}

std::vector<Tensor> lookahead_update(const ClassifierParams& w, const AdjusterParams& theta, const Batch& train,
                                     double alpha) {
  const ad::InnerLossFn inner = [&](Tape& tape, std::span<const Var> wv, std::span<const Var> tv) {
    return robust_batch_loss(tape, wv, tv, theta, train);
  };
  const auto wt = w.flatten();
  const auto tt = theta.theta();
  return ad::lookahead_weights(inner, wt, tt, alpha);
}

AdjusterParams adjuster_step(const AdjusterParams& theta, const ClassifierParams& w, const Batch& train,
                             const Batch& meta, double alpha, double beta) {
  AdjusterParams out = theta;
  if (beta == 0.0) return out;
  const auto g = adjuster_grad(theta, w, train, meta, alpha);
  const auto tt = theta.theta();
  out.set_theta(step(tt, g, beta, 0.0, nullptr));
  return out;
}

ClassifierParams classifier_step(const ClassifierParams& w, const AdjusterParams& theta, const Batch& train,
                                 double alpha) {
  const auto g = classifier_grad(w, &theta, nullptr, train);
  const auto wt = w.flatten();
  return ClassifierParams::unflatten(step(wt, g.grads, alpha, 0.0, nullptr));
}

ClassifierParams classifier_step(const ClassifierParams& w, const HyperParams& hp, const Batch& train, double alpha) {
  const auto g = classifier_grad(w, nullptr, &hp, train);
  const auto wt = w.flatten();
  return ClassifierParams::unflatten(step(wt, g.grads, alpha, 0.0, nullptr));
}

TrainResult run_meta_train(const LabeledDataset& train, const LabeledDataset& meta, const TrainConfig& config,
                           const LabeledDataset* test) {
  if (!adjustable(config.kind)) {
    throw ConfigError("meta-training needs an adjustable loss (gce, sl, polysoft, js), got '" +
                      std::string(loss_name(config.kind)) + "'");
  }
  LoopInputs in;
  in.mode = Mode::kMeta;
  in.meta = &meta;
  return train_loop(train, config, in, test);
}

TrainResult run_fixed_train(const LabeledDataset& train, const TrainConfig& config, const LabeledDataset* test) {
  LoopInputs in;
  in.mode = Mode::kFixed;
  return train_loop(train, config, in, test);
}

TrainResult run_meta_test(const LabeledDataset& train, std::span<const AdjusterParams> snapshots,
                          const TrainConfig& config, const LabeledDataset* test) {
  if (snapshots.empty()) throw ConfigError("meta-test needs at least one adjuster snapshot");
  const LossKind kind = snapshots.front().kind;
  for (const auto& s : snapshots) {
    s.validate();
    if (s.kind != kind) throw ConfigError("adjuster snapshots use different loss kinds");
    if (s.num_families() != snapshots.front().num_families()) {
      throw ConfigError("adjuster snapshots use different family counts");
    }
  }
  if (kind != config.kind) {
    throw ConfigError("snapshots were trained for '" + std::string(loss_name(kind)) + "' but the run uses '" +
                      std::string(loss_name(config.kind)) + "'");
  }
  train.validate();
  if (train.size() == 0) throw ConfigError("training set is empty");
  const auto centers =
      kmeans_fit(class_counts(train), snapshots.front().num_families(), sub_seed(config.seed, SeedStream::kKMeans));
  LoopInputs in;
  in.mode = Mode::kTransfer;
  for (const auto& s : snapshots) {
    AdjusterParams copy = s;
    copy.centers = centers;
    in.snapshots.push_back(std::move(copy));
  }
  return train_loop(train, config, in, test);
}

std::size_t phase_of(std::size_t t, std::size_t total, std::size_t phases) {
  if (phases == 0 || total == 0) throw ContractError("phase_of needs phases and iterations");
  return std::min(phases - 1, t * phases / total);
}

double accuracy(const ClassifierParams& w, const LabeledDataset& data, bool clean_labels) {
  if (data.size() == 0) return 0.0;
  const auto pred = argmax_rows(forward_logits(w, feature_matrix(data)));
  const auto& truth = clean_labels ? data.clean_labels : data.labels;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<DiagnosticRow> diagnose(const ClassifierParams& w, const AdjusterParams& theta, const LabeledDataset& data) {
  const auto counts = class_counts(data);
  const auto rows = all_rows(data);
  const Batch full = make_batch(data, rows, counts);
  const auto m = margins(forward_logits(w, full.x), full.labels);
  const auto hps = batch_predict(m, full.class_counts, theta);
  std::vector<DiagnosticRow> out;
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back({i, m[i], hps[i], data.is_noisy(i)});
  return out;
}

void write_metrics(std::span<const MetricRow> rows, const std::filesystem::path& path) {
  auto out = text::open_for_write(path);
  out << "iter,epoch,split,loss,accuracy,mean_hp_clean,mean_hp_noisy\n";
  const auto opt = [](const std::optional<double>& v) { return v ? text::format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    out << r.iter << ',' << r.epoch << ',' << r.split << ',' << text::format_double(r.loss) << ','
        << text::format_double(r.accuracy) << ',' << opt(r.mean_hp_clean) << ',' << opt(r.mean_hp_noisy) << '\n';
  }
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string snapshot_filename(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "adjuster_k%.3f.ckpt", fraction);
  return buf;
}

}  // namespace narl
