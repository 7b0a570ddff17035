#include "narl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <functional>
#include <sstream>

#include "narl/errors.hpp"
#include "narl/text_io.hpp"

namespace narl {

namespace {

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Key {
  const char* section;
  const char* name;
  Setter set;
  Getter get;
};

// Config values carry no line number, so parse failures become ConfigError.
template <class Fn>
auto as_config(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ParseError& e) {
    std::string msg = e.what();
    if (msg.rfind("line 0: ", 0) == 0) msg = msg.substr(8);
    throw ConfigError(msg);
  }
}

double to_double(std::string_view v) {
  return as_config([&] { return text::parse_double(text::trim(v), 0); });
}
std::size_t to_size(std::string_view v) {
  return as_config([&] { return text::parse_size(text::trim(v), 0); });
}

bool to_bool(std::string_view v) {
  const auto t = text::trim(v);
  if (t == "1" || t == "true" || t == "yes") return true;
  if (t == "0" || t == "false" || t == "no") return false;
  throw ConfigError("expected a boolean, got '" + std::string(t) + "'");
}

std::string num(double v) { return text::format_double(v); }

template <class T>
std::string join(const std::vector<T>& values) {
  std::ostringstream s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s << ',';
    if constexpr (std::is_floating_point_v<T>) {
      s << text::format_double(values[i]);
    } else {
      s << values[i];
    }
  }
  return s.str();
}

std::map<std::size_t, std::size_t> parse_pairs(std::string_view v) {
  std::map<std::size_t, std::size_t> out;
  if (text::trim(v).empty()) return out;
  for (auto item : text::split(text::trim(v), ',')) {
    const auto parts = text::split(text::trim(item), ':');
    if (parts.size() != 2) throw ConfigError("pair map entries look like 'from:to', got '" + std::string(item) + "'");
    out[to_size(parts[0])] = to_size(parts[1]);
  }
  return out;
}

std::string show_pairs(const std::map<std::size_t, std::size_t>& m) {
  std::ostringstream s;
  bool first = true;
  for (const auto& [a, b] : m) {
    s << (first ? "" : ",") << a << ':' << b;
    first = false;
  }
  return s.str();
}

std::vector<std::vector<std::size_t>> parse_groups(std::string_view v) {
  std::vector<std::vector<std::size_t>> out;
  if (text::trim(v).empty()) return out;
  for (auto g : text::split(text::trim(v), ';')) out.push_back(parse_size_list(g));
  return out;
}

std::string show_groups(const std::vector<std::vector<std::size_t>>& groups) {
  std::ostringstream s;
  for (std::size_t i = 0; i < groups.size(); ++i) s << (i ? ";" : "") << join(groups[i]);
  return s.str();
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"experiment", "seed", [](auto& c, auto v) { c.seed = to_size(v); }, [](auto& c) { return std::to_string(c.seed); }},

      {"data", "classes", [](auto& c, auto v) { c.data.classes = to_size(v); },
       [](auto& c) { return std::to_string(c.data.classes); }},
      {"data", "per_class", [](auto& c, auto v) { c.data.per_class = to_size(v); },
       [](auto& c) { return std::to_string(c.data.per_class); }},
      {"data", "dim", [](auto& c, auto v) { c.data.dim = to_size(v); }, [](auto& c) { return std::to_string(c.data.dim); }},
      {"data", "separation", [](auto& c, auto v) { c.data.separation = to_double(v); },
       [](auto& c) { return num(c.data.separation); }},
      {"data", "test_per_class", [](auto& c, auto v) { c.data.test_per_class = to_size(v); },
       [](auto& c) { return std::to_string(c.data.test_per_class); }},
      {"data", "meta_size", [](auto& c, auto v) { c.data.meta_size = to_size(v); },
       [](auto& c) { return std::to_string(c.data.meta_size); }},

      {"noise", "kind", [](auto& c, auto v) { c.noise.kind = parse_noise_kind(text::trim(v)); },
       [](auto& c) {
         switch (c.noise.kind) {
           case NoiseKind::kSymmetric: return std::string("symmetric");
           case NoiseKind::kPairMap: return std::string("pair_map");
           case NoiseKind::kGroupUniform: return std::string("group_uniform");
           case NoiseKind::kInstanceDependent: return std::string("instance_dependent");
         }
         return std::string();
       }},
      {"noise", "eta", [](auto& c, auto v) { c.noise.eta = to_double(v); }, [](auto& c) { return num(c.noise.eta); }},
      {"noise", "pairs", [](auto& c, auto v) { c.noise.pair_map = parse_pairs(v); },
       [](auto& c) { return show_pairs(c.noise.pair_map); }},
      {"noise", "groups", [](auto& c, auto v) { c.noise.groups = parse_groups(v); },
       [](auto& c) { return show_groups(c.noise.groups); }},

      {"train", "loss", [](auto& c, auto v) { c.train.kind = parse_loss_kind(text::trim(v)); },
       [](auto& c) { return std::string(loss_name(c.train.kind)); }},
      {"train", "alpha", [](auto& c, auto v) { c.train.alpha = to_double(v); }, [](auto& c) { return num(c.train.alpha); }},
      {"train", "beta", [](auto& c, auto v) { c.train.beta = to_double(v); }, [](auto& c) { return num(c.train.beta); }},
      {"train", "batch_size", [](auto& c, auto v) { c.train.batch_size = to_size(v); },
       [](auto& c) { return std::to_string(c.train.batch_size); }},
      {"train", "meta_batch_size", [](auto& c, auto v) { c.train.meta_batch_size = to_size(v); },
       [](auto& c) { return std::to_string(c.train.meta_batch_size); }},
      {"train", "iterations", [](auto& c, auto v) { c.train.iterations = to_size(v); },
       [](auto& c) { return std::to_string(c.train.iterations); }},
      {"train", "meta_period", [](auto& c, auto v) { c.train.meta_period = to_size(v); },
       [](auto& c) { return std::to_string(c.train.meta_period); }},
      {"train", "momentum", [](auto& c, auto v) { c.train.momentum = to_double(v); },
       [](auto& c) { return num(c.train.momentum); }},
      {"train", "lr_milestones", [](auto& c, auto v) { c.train.lr_milestones = parse_size_list(v); },
       [](auto& c) { return join(c.train.lr_milestones); }},
      {"train", "lr_decay", [](auto& c, auto v) { c.train.lr_decay = to_double(v); },
       [](auto& c) { return num(c.train.lr_decay); }},
      {"train", "hidden", [](auto& c, auto v) { c.train.hidden_widths = parse_size_list(v); },
       [](auto& c) { return join(c.train.hidden_widths); }},
      {"train", "checkpoint_fractions", [](auto& c, auto v) { c.train.checkpoint_fractions = parse_double_list(v); },
       [](auto& c) { return join(c.train.checkpoint_fractions); }},
      {"train", "q", [](auto& c, auto v) { c.loss.q = to_double(v); }, [](auto& c) { return num(c.loss.q); }},
      {"train", "gamma1", [](auto& c, auto v) { c.loss.gamma1 = to_double(v); }, [](auto& c) { return num(c.loss.gamma1); }},
      {"train", "gamma2", [](auto& c, auto v) { c.loss.gamma2 = to_double(v); }, [](auto& c) { return num(c.loss.gamma2); }},
      {"train", "rce_a", [](auto& c, auto v) { c.loss.rce_a = to_double(v); }, [](auto& c) { return num(c.loss.rce_a); }},
      {"train", "lambda", [](auto& c, auto v) { c.loss.lambda = to_double(v); }, [](auto& c) { return num(c.loss.lambda); }},
      {"train", "d", [](auto& c, auto v) { c.loss.d = to_double(v); }, [](auto& c) { return num(c.loss.d); }},
      {"train", "pi1", [](auto& c, auto v) { c.loss.pi1 = to_double(v); }, [](auto& c) { return num(c.loss.pi1); }},

      {"adjuster", "families", [](auto& c, auto v) { c.train.families = to_size(v); },
       [](auto& c) { return std::to_string(c.train.families); }},
      {"adjuster", "hidden", [](auto& c, auto v) { c.train.adjuster_hidden = to_size(v); },
       [](auto& c) { return std::to_string(c.train.adjuster_hidden); }},
      {"adjuster", "scale", [](auto& c, auto v) { c.train.scale = parse_double_list(v); },
       [](auto& c) { return join(c.train.scale); }},
      {"adjuster", "standardize", [](auto& c, auto v) { c.train.standardize_margins = to_bool(v); },
       [](auto& c) { return std::string(c.train.standardize_margins ? "true" : "false"); }},
      {"adjuster", "momentum", [](auto& c, auto v) { c.train.adjuster_momentum = to_double(v); },
       [](auto& c) { return num(c.train.adjuster_momentum); }},
  };
  return table;
}

}  // namespace

HyperParams make_hyperparams(LossKind kind, const LossValues& v) {
  switch (kind) {
    case LossKind::kCe: return CeParams{};
    case LossKind::kMae: return MaeParams{};
    case LossKind::kGce: return GceParams{v.q};
    case LossKind::kRce: return RceParams{v.rce_a};
    case LossKind::kSl: return SlParams{v.gamma1, v.gamma2, v.rce_a};
    case LossKind::kPolySoft: return PolySoftParams{v.lambda, v.d};
    case LossKind::kJs: return JsParams{v.pi1};
  }
  throw ConfigError("unknown loss kind");
}

void ExperimentConfig::finalize() {
  train.seed = seed;
  noise.seed = sub_seed(seed, SeedStream::kNoise);
  train.fixed = make_hyperparams(train.kind, loss);
  train.validate();
  if (data.classes < 2) throw ConfigError("data.classes must be at least 2");
  if (data.dim < 2) throw ConfigError("data.dim must be at least 2");
  if (!(data.separation > 0.0)) throw ConfigError("data.separation must be positive");
  if (data.per_class == 0) throw ConfigError("data.per_class must be positive");
}

void apply_setting(ExperimentConfig& config, std::string_view section, std::string_view key, std::string_view value) {
  const std::string name = std::string(section) + "." + std::string(key);
  for (const auto& k : keys()) {
    if (section != k.section || key != k.name) continue;
    try {
      k.set(config, value);
    } catch (const Error& e) {
      std::string msg = e.what();
      if (msg.rfind("line 0: ", 0) == 0) msg = msg.substr(8);
      throw ConfigError("bad value for '" + name + "': " + msg);
    }
    return;
  }
  throw ConfigError("unknown config key '" + name + "'");
}

void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    if (!std::filesystem::exists(path)) throw IoError("cannot open config '" + path.string() + "'");
    throw ConfigError("config '" + path.string() + "' line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' must live inside a section");
    for (const auto& [key, value] : body) apply_setting(config, section, key, value.data());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  ExperimentConfig config;
  apply_config_file(config, path);
  return config;
}

std::string describe_config_keys() {
  const ExperimentConfig defaults;
  std::ostringstream s;
  for (const auto& k : keys()) s << k.section << '.' << k.name << " = " << k.get(defaults) << '\n';
  return s.str();
}

std::vector<std::size_t> parse_size_list(std::string_view t) {
  std::vector<std::size_t> out;
  const auto trimmed = text::trim(t);
  if (trimmed.empty()) return out;
  for (auto item : text::split(trimmed, ',')) {
    item = text::trim(item);
    const auto dots = item.find("..");
    if (dots == std::string_view::npos) {
      out.push_back(to_size(item));
      continue;
    }
    const std::size_t lo = to_size(item.substr(0, dots)), hi = to_size(item.substr(dots + 2));
    if (lo > hi) throw ConfigError("empty range '" + std::string(item) + "'");
    for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
  }
  return out;
}

std::vector<double> parse_double_list(std::string_view t) {
  std::vector<double> out;
  const auto trimmed = text::trim(t);
  if (trimmed.empty()) return out;
  for (auto item : text::split(trimmed, ',')) out.push_back(to_double(item));
  return out;
}

}  // namespace narl

namespace narl {

ExperimentData make_experiment_data(const ExperimentConfig& config) {
  const auto& d = config.data;
  const auto full = gen_gaussian_mixture(d.classes, d.per_class, d.dim, d.separation, sub_seed(config.seed, SeedStream::kData));
  auto split = split_meta(full, d.meta_size, sub_seed(config.seed, SeedStream::kMetaSplit));
  ExperimentData out;
  out.train = inject_noise(split.train, config.noise);
  out.meta = std::move(split.meta);
  if (d.test_per_class > 0) {
    out.test = gen_gaussian_mixture(d.classes, d.test_per_class, d.dim, d.separation,
                                    sub_seed(config.seed, SeedStream::kTestData));
  }
  return out;
}

}  // namespace narl
