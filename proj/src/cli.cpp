#include "narl/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "narl/bounds.hpp"
#include "narl/config.hpp"
#include "narl/errors.hpp"
#include "narl/text_io.hpp"

namespace narl {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> settings;

  std::optional<std::string> loss;
  std::optional<double> q, lambda, d, pi1, gamma1, gamma2, eta;
  std::optional<std::size_t> iterations;
  std::optional<std::string> noise_kind;

  std::string output;
  std::string test_output;
  std::string input;
  std::string train_data, meta_data, test_data;
  std::vector<std::string> snapshots;
  std::string classifier, adjuster;
  std::string classes = "2..100";
};

// Usage problems found after CLI11 parsing; reported with exit code 2.
struct UsageError : Error {
  using Error::Error;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config_path, "INI config file");
  sub->add_option("--out", o.out_dir, "output directory");
  sub->add_option("--seed", o.seed, "experiment seed (overrides config and NARL_SEED)");
  sub->add_option("--set", o.settings, "override a config key: section.key=value")->take_all();
}

void add_loss_flags(CLI::App* sub, Options& o) {
  sub->add_option("--loss", o.loss, "ce, mae, gce, rce, sl, polysoft or js");
  sub->add_option("--q", o.q, "GCE q");
  sub->add_option("--lambda", o.lambda, "PolySoft lambda");
  sub->add_option("--d", o.d, "PolySoft d");
  sub->add_option("--pi1", o.pi1, "JS pi1");
  sub->add_option("--gamma1", o.gamma1, "SL gamma1");
  sub->add_option("--gamma2", o.gamma2, "SL gamma2");
}

void add_data_flags(CLI::App* sub, Options& o) {
  sub->add_option("--train-data", o.train_data, "training CSV (generated from [data] when absent)");
  sub->add_option("--test-data", o.test_data, "test CSV");
  sub->add_option("--eta", o.eta, "noise rate for generated data");
  sub->add_option("--iterations", o.iterations, "training iterations");
}

ExperimentConfig build_config(const Options& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) apply_config_file(cfg, o.config_path);
  for (const auto& s : o.settings) {
    const auto eq = s.find('=');
    const auto dot = s.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw UsageError("--set expects section.key=value, got '" + s + "'");
    }
    apply_setting(cfg, s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
  }
  if (const char* env = std::getenv("NARL_SEED")) {
    try {
      cfg.seed = text::parse_size(text::trim(env), 0);
    } catch (const ParseError&) {
      throw UsageError("NARL_SEED must be a non-negative integer, got '" + std::string(env) + "'");
    }
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.loss) cfg.train.kind = parse_loss_kind(*o.loss);
  if (o.q) cfg.loss.q = *o.q;
  if (o.lambda) cfg.loss.lambda = *o.lambda;
  if (o.d) cfg.loss.d = *o.d;
  if (o.pi1) cfg.loss.pi1 = *o.pi1;
  if (o.gamma1) cfg.loss.gamma1 = *o.gamma1;
  if (o.gamma2) cfg.loss.gamma2 = *o.gamma2;
  if (o.eta) cfg.noise.eta = *o.eta;
  if (o.noise_kind) cfg.noise.kind = parse_noise_kind(*o.noise_kind);
  if (o.iterations) cfg.train.iterations = *o.iterations;
  cfg.finalize();
  return cfg;
}

fs::path out_path(const Options& o, const std::string& name) {
  fs::create_directories(o.out_dir);
  return fs::path(o.out_dir) / name;
}

ExperimentData load_data(const Options& o, const ExperimentConfig& cfg, bool need_meta) {
  if (o.train_data.empty()) {
    if (!o.meta_data.empty()) throw UsageError("--meta-data needs --train-data");
    auto data = make_experiment_data(cfg);
    if (!o.test_data.empty()) data.test = read_dataset(o.test_data, cfg.data.classes);
    return data;
  }
  ExperimentData data;
  data.train = read_dataset(o.train_data);
  const std::size_t c = data.train.num_classes;
  if (need_meta) {
    if (o.meta_data.empty()) throw UsageError("--train-data needs --meta-data for meta-training");
    data.meta = read_dataset(o.meta_data, c);
  }
  if (!o.test_data.empty()) data.test = read_dataset(o.test_data, c);
  return data;
}

const LabeledDataset* test_of(const ExperimentData& d) { return d.test.size() > 0 ? &d.test : nullptr; }

void save_result(const Options& o, const TrainResult& r, std::ostream& out) {
  write_metrics(r.metrics, out_path(o, "metrics.csv"));
  save_classifier(r.classifier, out_path(o, "classifier.ckpt"));
  if (r.adjuster) save_adjuster(*r.adjuster, out_path(o, "adjuster.ckpt"));
  for (const auto& s : r.snapshots) save_adjuster(s.params, out_path(o, snapshot_filename(s.fraction)));
  for (auto it = r.metrics.rbegin(); it != r.metrics.rend(); ++it) {
    out << "final " << it->split << " accuracy " << text::format_double(it->accuracy, 6) << '\n';
    if (it + 1 != r.metrics.rend() && (it + 1)->iter != it->iter) break;
  }
}

template <class Fn>
int guarded_training(const Options& o, std::ostream& out, std::ostream& err, Fn&& fn) {
  try {
    save_result(o, fn(), out);
    return 0;
  } catch (const TrainingAborted& e) {
    save_result(o, e.last_good(), out);
    err << "error: " << e.what() << " (saved state from before iteration " << e.iteration() << ")\n";
    return 1;
  }
}

std::string hp_field(const HyperParams& hp, std::size_t i) {
  const auto fmt = [](double v) { return text::format_double(v); };
  return std::visit(
      [&](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GceParams>) return i == 0 ? fmt(p.q) : "";
        if constexpr (std::is_same_v<T, SlParams>) return fmt(i == 0 ? p.gamma1 : p.gamma2);
        if constexpr (std::is_same_v<T, PolySoftParams>) return fmt(i == 0 ? p.lambda : p.d);
        if constexpr (std::is_same_v<T, JsParams>) return i == 0 ? fmt(p.pi1) : "";
        return "";
      },
      hp);
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  const auto cfg = build_config(o);
  const auto& d = cfg.data;
  const auto data = gen_gaussian_mixture(d.classes, d.per_class, d.dim, d.separation, sub_seed(cfg.seed, SeedStream::kData));
  write_dataset(data, out_path(o, o.output.empty() ? "data.csv" : o.output));
  if (!o.test_output.empty()) {
    write_dataset(gen_gaussian_mixture(d.classes, d.test_per_class, d.dim, d.separation,
                                       sub_seed(cfg.seed, SeedStream::kTestData)),
                  out_path(o, o.test_output));
  }
  out << "wrote " << data.size() << " samples\n";
  return 0;
}

int cmd_inject_noise(const Options& o, std::ostream& out) {
  const auto cfg = build_config(o);
  const auto data = read_dataset(o.input);
  const auto noisy = inject_noise(data, cfg.noise);
  write_dataset(noisy, out_path(o, o.output.empty() ? "noisy.csv" : o.output));
  out << "flipped fraction " << text::format_double(noise_fraction(noisy), 6) << '\n';
  return 0;
}

int cmd_bounds(const Options& o, std::ostream& out) {
  auto cfg = build_config(o);
  Fig2Settings s;
  s.q = cfg.loss.q;
  s.lambda = cfg.loss.lambda;
  s.d = cfg.loss.d;
  s.pi1 = cfg.loss.pi1;
  if (o.loss && *o.loss != "all") s.losses = {parse_loss_kind(*o.loss)};
  const auto cs = parse_size_list(o.classes);
  const auto path = out_path(o, o.output.empty() ? "bounds.csv" : o.output);
  emit_fig2_curves(cs, s, path);
  out << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_diagnose(const Options& o, std::ostream& out) {
  const auto cfg = build_config(o);
  if (o.classifier.empty() || o.adjuster.empty()) throw UsageError("diagnose needs --classifier and --adjuster");
  const auto w = load_classifier(o.classifier);
  const auto theta = load_adjuster(o.adjuster);
  const LabeledDataset data =
      o.train_data.empty() ? make_experiment_data(cfg).train : read_dataset(o.train_data, w.num_classes());
  const auto rows = diagnose(w, theta, data);
  auto file = text::open_for_write(out_path(o, o.output.empty() ? "diagnose.csv" : o.output));
  file << "index,margin,hp_primary,hp_secondary,is_noisy\n";
  for (const auto& r : rows) {
    file << r.index << ',' << text::format_double(r.margin) << ',' << hp_field(r.hp, 0) << ',' << hp_field(r.hp, 1)
         << ',' << (r.noisy ? 1 : 0) << '\n';
  }
  file.flush();
  if (!file) throw IoError("failed writing diagnose.csv");
  out << "wrote " << rows.size() << " rows\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Noise-aware robust losses with a meta-learned hyperparameter adjuster"};
  app.require_subcommand(1);
  app.footer("Config keys (section.key = default):\n" + describe_config_keys());

  auto* gen = app.add_subcommand("gen-data", "write a Gaussian-mixture dataset CSV");
  add_common(gen, o);
  gen->add_option("--output", o.output, "dataset file name (default data.csv)");
  gen->add_option("--test-output", o.test_output, "also write an independent test set");

  auto* inject = app.add_subcommand("inject-noise", "corrupt the labels of a dataset CSV");
  add_common(inject, o);
  inject->add_option("--input", o.input, "clean dataset CSV")->required();
  inject->add_option("--output", o.output, "noisy dataset file name (default noisy.csv)");
  inject->add_option("--eta", o.eta, "noise rate");
  inject->add_option("--kind", o.noise_kind, "symmetric, pair_map, group_uniform or instance_dependent");

  auto* train = app.add_subcommand("train", "baseline training with fixed hyperparameters");
  add_common(train, o);
  add_loss_flags(train, o);
  add_data_flags(train, o);

  auto* meta_train = app.add_subcommand("meta-train", "train classifier and adjuster together");
  add_common(meta_train, o);
  add_loss_flags(meta_train, o);
  add_data_flags(meta_train, o);
  meta_train->add_option("--meta-data", o.meta_data, "clean meta CSV (with --train-data)");

  auto* meta_test = app.add_subcommand("meta-test", "train a new classifier with frozen adjuster snapshots");
  add_common(meta_test, o);
  add_loss_flags(meta_test, o);
  add_data_flags(meta_test, o);
  meta_test->add_option("--snapshots", o.snapshots, "adjuster checkpoints in phase order")->required()->delimiter(',');

  auto* bounds = app.add_subcommand("bounds", "emit C_L / C_U curves against the class count");
  add_common(bounds, o);
  add_loss_flags(bounds, o);
  bounds->add_option("--c", o.classes, "class counts, e.g. 2..100 or 2,10,100");
  bounds->add_option("--output", o.output, "CSV file name (default bounds.csv)");

  auto* diag = app.add_subcommand("diagnose", "per-sample margin and predicted hyperparameters");
  add_common(diag, o);
  diag->add_option("--classifier", o.classifier, "classifier checkpoint")->required();
  diag->add_option("--adjuster", o.adjuster, "adjuster checkpoint")->required();
  diag->add_option("--train-data", o.train_data, "dataset CSV (generated from config when absent)");
  diag->add_option("--output", o.output, "CSV file name (default diagnose.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (inject->parsed()) return cmd_inject_noise(o, out);
    if (bounds->parsed()) return cmd_bounds(o, out);
    if (diag->parsed()) return cmd_diagnose(o, out);
    if (train->parsed()) {
      const auto cfg = build_config(o);
      const auto data = load_data(o, cfg, false);
      return guarded_training(o, out, err, [&] { return run_fixed_train(data.train, cfg.train, test_of(data)); });
    }
    if (meta_train->parsed()) {
      const auto cfg = build_config(o);
      const auto data = load_data(o, cfg, true);
      return guarded_training(o, out, err,
                              [&] { return run_meta_train(data.train, data.meta, cfg.train, test_of(data)); });
    }
    if (meta_test->parsed()) {
      const auto cfg = build_config(o);
      const auto data = load_data(o, cfg, false);
      std::vector<AdjusterParams> snaps;
      for (const auto& p : o.snapshots) snaps.push_back(load_adjuster(p));
      return guarded_training(o, out, err, [&] { return run_meta_test(data.train, snaps, cfg.train, test_of(data)); });
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace narl
