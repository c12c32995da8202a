#include "bilevel/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "bilevel/error.hpp"

namespace bilevel::harness {
namespace {

std::string where(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.line >= 0 ? " (line " + std::to_string(mark.line + 1) + ")" : std::string();
}

template <class T>
T scalar(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + key + "'" + where(node));
  }
}

template <class E>
E choice(const YAML::Node& node, const std::string& key, const std::map<std::string, E>& options) {
  const auto name = scalar<std::string>(node, key);
  if (auto it = options.find(name); it != options.end()) return it->second;
  std::string known;
  for (const auto& [k, _] : options) known += (known.empty() ? "" : ", ") + k;
  throw ConfigError("'" + key + "' must be one of {" + known + "}, got '" + name + "'" +
                    where(node));
}

const std::map<std::string, DataSource> kSources{{"idx", DataSource::Idx},
                                                 {"csv", DataSource::Csv},
                                                 {"synthetic-glyphs", DataSource::SyntheticGlyphs},
                                                 {"synthetic-moons", DataSource::SyntheticMoons}};
const std::map<std::string, Architecture> kArchitectures{{"mlp", Architecture::Mlp},
                                                         {"desk-cnn", Architecture::DeskCnn}};
const std::map<std::string, OptimizerKind> kOptimizers{{"sgd", OptimizerKind::Sgd},
                                                       {"bilevel", OptimizerKind::Bilevel}};

using Handler = std::function<void(const YAML::Node&, const std::string&)>;

void walk(const YAML::Node& section, const std::string& name,
          const std::map<std::string, Handler>& handlers) {
  if (!section.IsMap()) throw ConfigError("section '" + name + "' must be a mapping" + where(section));
  for (const auto& entry : section) {
    const auto key = entry.first.as<std::string>();
    const auto it = handlers.find(key);
    if (it == handlers.end()) {
      throw ConfigError("unknown key '" + name + "." + key + "'" + where(entry.first));
    }
    it->second(entry.second, name + "." + key);
  }
}

template <class T>
Handler set(T& field) {
  return [&field](const YAML::Node& n, const std::string& key) { field = scalar<T>(n, key); };
}

std::string resolve(const std::string& path, const std::filesystem::path& base) {
  if (path.empty() || base.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (base / path).lexically_normal().string();
}

template <class E>
std::string name_of(E v, const std::map<std::string, E>& options) {
  for (const auto& [k, e] : options) {
    if (e == v) return k;
  }
  return "?";
}

std::string real(double v) {
  if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(DataSource v) { return name_of(v, kSources); }
std::string to_string(Architecture v) { return name_of(v, kArchitectures); }
std::string to_string(OptimizerKind v) { return name_of(v, kOptimizers); }

void RunConfig::check() const {
  const auto& d = dataset;
  if ((d.format == DataSource::Idx || d.format == DataSource::Csv) &&
      (d.train_path.empty() || d.test_path.empty())) {
    throw ConfigError("dataset.train_path and dataset.test_path are required for " +
                      to_string(d.format) + " data");
  }
  if (!(d.noise >= 0.0 && d.noise <= 1.0)) throw ConfigError("dataset.noise must lie in [0, 1]");
  if (!(d.validation_ratio >= 0.0 && d.validation_ratio < 1.0)) {
    throw ConfigError("dataset.validation_ratio must lie in [0, 1)");
  }
  if (!(model.dropout_keep > 0.0 && model.dropout_keep <= 1.0)) {
    throw ConfigError("model.dropout_keep must lie in (0, 1]");
  }
  for (std::size_t h : model.hidden) {
    if (h == 0) throw ConfigError("model.hidden sizes must be positive");
  }
  const auto& o = optimizer;
  if (!(o.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be positive");
  if (!(o.decay > 0.0 && o.decay <= 1.0)) throw ConfigError("optimizer.decay must lie in (0, 1]");
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) {
    throw ConfigError("optimizer.momentum must lie in [0, 1)");
  }
  if (!(o.lambda_hat > 0.0)) throw ConfigError("optimizer.lambda_hat must be positive");
  if (!(o.mu_hat >= 0.0)) throw ConfigError("optimizer.mu_hat must be non-negative");
  if (o.k < 2) throw ConfigError("optimizer.k must be at least 2");
  if (o.batch_size == 0) throw ConfigError("optimizer.batch_size must be positive");
  if (o.exact_solve && o.per_layer_weights) {
    throw ConfigError("optimizer.exact_solve and optimizer.per_layer_weights are exclusive");
  }
  if (run.epochs == 0) throw ConfigError("run.epochs must be positive");
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  RunConfig cfg;
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) throw ConfigError("config must be a mapping of sections");

  auto& d = cfg.dataset;
  auto& m = cfg.model;
  auto& o = cfg.optimizer;
  auto& r = cfg.run;
  const std::map<std::string, Handler> dataset{
      {"format", [&](const YAML::Node& n, const std::string& k) { d.format = choice(n, k, kSources); }},
      {"train_path", set(d.train_path)},
      {"test_path", set(d.test_path)},
      {"train_limit", set(d.train_limit)},
      {"test_limit", set(d.test_limit)},
      {"synthetic_train", set(d.synthetic_train)},
      {"synthetic_test", set(d.synthetic_test)},
      {"synthetic_seed", set(d.synthetic_seed)},
      {"classes", set(d.classes)},
      {"noise", set(d.noise)},
      {"pixel_permutation", set(d.pixel_permutation)},
      {"validation_ratio", set(d.validation_ratio)},
  };
  const std::map<std::string, Handler> model{
      {"architecture",
       [&](const YAML::Node& n, const std::string& k) { m.architecture = choice(n, k, kArchitectures); }},
      {"hidden",
       [&](const YAML::Node& n, const std::string& k) {
         if (!n.IsSequence()) throw ConfigError("'" + k + "' must be a list" + where(n));
         m.hidden.clear();
         for (const auto& item : n) m.hidden.push_back(scalar<std::size_t>(item, k));
       }},
      {"dropout_keep", set(m.dropout_keep)},
      {"share_dropout_mask", set(m.share_dropout_mask)},
  };
  const std::map<std::string, Handler> optimizer{
      {"kind", [&](const YAML::Node& n, const std::string& k) { o.kind = choice(n, k, kOptimizers); }},
      {"learning_rate", set(o.learning_rate)},
      {"decay", set(o.decay)},
      {"momentum", set(o.momentum)},
      {"lambda_hat", set(o.lambda_hat)},
      {"mu_hat", set(o.mu_hat)},
      {"k", set(o.k)},
      {"batch_size", set(o.batch_size)},
      {"use_l1", set(o.use_l1)},
      {"per_layer_weights", set(o.per_layer_weights)},
      {"exact_solve", set(o.exact_solve)},
      {"stratified", set(o.stratified)},
      {"degeneracy_tolerance", set(o.degeneracy_tolerance)},
      {"low_weight_threshold", set(o.low_weight_threshold)},
  };
  const std::map<std::string, Handler> run{
      {"epochs", set(r.epochs)},
      {"seed", set(r.seed)},
      {"record_wall_clock", set(r.record_wall_clock)},
  };
  const std::map<std::string, const std::map<std::string, Handler>*> sections{
      {"dataset", &dataset}, {"model", &model}, {"optimizer", &optimizer}, {"run", &run}};

  for (const auto& entry : root) {
    const auto name = entry.first.as<std::string>();
    const auto it = sections.find(name);
    if (it == sections.end()) {
      throw ConfigError("unknown section '" + name + "'" + where(entry.first));
    }
    walk(entry.second, name, *it->second);
  }
  d.train_path = resolve(d.train_path, base_dir);
  d.test_path = resolve(d.test_path, base_dir);
  cfg.check();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.parent_path());
}

std::string to_yaml(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  const auto& m = cfg.model;
  const auto& o = cfg.optimizer;
  const auto& r = cfg.run;
  auto flag = [](bool b) { return b ? "true" : "false"; };
  std::ostringstream os;
  os << "dataset:\n"
     << "  format: " << to_string(d.format) << "\n"
     << "  train_path: \"" << d.train_path << "\"\n"
     << "  test_path: \"" << d.test_path << "\"\n"
     << "  train_limit: " << d.train_limit << "\n"
     << "  test_limit: " << d.test_limit << "\n"
     << "  synthetic_train: " << d.synthetic_train << "\n"
     << "  synthetic_test: " << d.synthetic_test << "\n"
     << "  synthetic_seed: " << d.synthetic_seed << "\n"
     << "  classes: " << d.classes << "\n"
     << "  noise: " << real(d.noise) << "\n"
     << "  pixel_permutation: " << flag(d.pixel_permutation) << "\n"
     << "  validation_ratio: " << real(d.validation_ratio) << "\n";
  os << "model:\n"
     << "  architecture: " << to_string(m.architecture) << "\n"
     << "  hidden: [";
  for (std::size_t i = 0; i < m.hidden.size(); ++i) os << (i ? ", " : "") << m.hidden[i];
  os << "]\n"
     << "  dropout_keep: " << real(m.dropout_keep) << "\n"
     << "  share_dropout_mask: " << flag(m.share_dropout_mask) << "\n";
  os << "optimizer:\n"
     << "  kind: " << to_string(o.kind) << "\n"
     << "  learning_rate: " << real(o.learning_rate) << "\n"
     << "  decay: " << real(o.decay) << "\n"
     << "  momentum: " << real(o.momentum) << "\n"
     << "  lambda_hat: " << real(o.lambda_hat) << "\n"
     << "  mu_hat: " << real(o.mu_hat) << "\n"
     << "  k: " << o.k << "\n"
     << "  batch_size: " << o.batch_size << "\n"
     << "  use_l1: " << flag(o.use_l1) << "\n"
     << "  per_layer_weights: " << flag(o.per_layer_weights) << "\n"
     << "  exact_solve: " << flag(o.exact_solve) << "\n"
     << "  stratified: " << flag(o.stratified) << "\n"
     << "  degeneracy_tolerance: " << real(o.degeneracy_tolerance) << "\n"
     << "  low_weight_threshold: " << real(o.low_weight_threshold) << "\n";
  os << "run:\n"
     << "  epochs: " << r.epochs << "\n"
     << "  seed: " << r.seed << "\n"
     << "  record_wall_clock: " << flag(r.record_wall_clock) << "\n";
  return os.str();
}

}  // namespace bilevel::harness
