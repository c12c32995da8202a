#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bilevel::harness {

enum class DataSource { Idx, Csv, SyntheticGlyphs, SyntheticMoons };
enum class Architecture { Mlp, DeskCnn };
enum class OptimizerKind { Sgd, Bilevel };

struct DatasetSpec {
  DataSource format = DataSource::SyntheticGlyphs;
  std::string train_path;     // idx prefix or csv file
  std::string test_path;
  std::size_t train_limit = 0;  // keep the first N training examples (0 = all)
  std::size_t test_limit = 0;
  std::size_t synthetic_train = 10000;
  std::size_t synthetic_test = 5000;
  std::uint64_t synthetic_seed = 2018;
  std::size_t classes = 0;      // 0 = infer from labels
  double noise = 0.0;
  bool pixel_permutation = false;
  double validation_ratio = 0.0;
};

struct ModelSpec {
  Architecture architecture = Architecture::Mlp;
  std::vector<std::size_t> hidden{256};
  double dropout_keep = 1.0;
  bool share_dropout_mask = true;
};

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::Bilevel;
  double learning_rate = 0.01;
  double decay = 0.95;
  double momentum = 0.9;
  double lambda_hat = 1.0;
  double mu_hat = 0.01;
  std::size_t k = 8;
  std::size_t batch_size = 64;
  bool use_l1 = true;
  bool per_layer_weights = false;
  bool exact_solve = false;
  bool stratified = true;
  double degeneracy_tolerance = 1e-12;
  double low_weight_threshold = 0.1;
};

struct RunSpec {
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  bool record_wall_clock = false;
};

struct RunConfig {
  DatasetSpec dataset;
  ModelSpec model;
  OptimizerSpec optimizer;
  RunSpec run;

  /// Throws ConfigError on out-of-range values.
  void check() const;
};

/// Parses the YAML config document. Sections: dataset, model, optimizer, run.
/// Unknown sections or keys are ConfigErrors naming the key; missing keys
/// keep their defaults. Relative data paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical YAML rendering; parse_run_config(to_yaml(c)) == c.
std::string to_yaml(const RunConfig& cfg);

std::string to_string(DataSource v);
std::string to_string(Architecture v);
std::string to_string(OptimizerKind v);

}  // namespace bilevel::harness
