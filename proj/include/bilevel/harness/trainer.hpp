#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "bilevel/data/dataset.hpp"
#include "bilevel/data/sampler.hpp"
#include "bilevel/harness/config.hpp"
#include "bilevel/harness/metrics.hpp"
#include "bilevel/nn/network.hpp"
#include "bilevel/opt/momentum.hpp"
#include "bilevel/opt/weights.hpp"

namespace bilevel::harness {

/// Seeds derived from RunSpec::seed; paired sgd/bilevel runs share all of them.
struct RunSeeds {
  std::uint64_t noise;
  std::uint64_t permutation;
  std::uint64_t split;
  std::uint64_t init;
  std::uint64_t sampler;
  std::uint64_t dropout;
};
RunSeeds derive_seeds(std::uint64_t seed);

/// Training, validation-pool and test splits after noise and permutation.
struct PreparedData {
  data::Dataset train;
  data::Dataset pool;  // empty unless validation_ratio > 0
  data::Dataset test;  // clean labels
  std::size_t corrupted = 0;  // relabelled examples across train and pool
};

/// Loads or generates the datasets and applies noise (training split only),
/// the pixel permutation (both splits) and the validation-pool split.
PreparedData prepare_data(const RunConfig& cfg);

/// Fresh model for the configured architecture, initialized from seeds.init.
nn::Network build_model(const RunConfig& cfg, const nn::Shape& input_shape, std::size_t classes);

/// What a single optimizer step did.
struct StepReport {
  double loss = 0.0;  // mean batch loss over the batches the step evaluated
  bool degenerate = false;
  bool low_weight = false;
  std::size_t weights = 0;
  std::size_t negative_weights = 0;
  double dispersion = 0.0;  // std-dev of the normalized weights
};

/// Owns the model and momentum buffer of one run and executes steps.
class Trainer {
 public:
  Trainer(nn::Network model, const RunConfig& cfg);

  /// Plain SGD with momentum on one mini-batch.
  StepReport sgd_step(const data::MiniBatch& batch, double learning_rate);
  /// Bilevel reweighted step on a batch group.
  StepReport bilevel_step(const data::BatchGroup& group, double learning_rate);
  /// Bilevel step from an explicit gradient set (training gradients already
  /// evaluated); exposed for tests.
  StepReport bilevel_update(const opt::GradientSet& grads, double learning_rate);

  const nn::Network& model() const { return model_; }
  nn::Network& model() { return model_; }
  std::size_t steps() const { return step_; }
  const opt::BilevelConfig& bilevel_config() const { return bilevel_; }

  /// Dropout spec of batch `batch_index` at the current step.
  nn::DropoutSpec dropout_for(std::size_t batch_index) const;

 private:
  nn::Network model_;
  opt::BilevelConfig bilevel_;
  opt::MomentumState momentum_;
  double keep_probability_;
  bool share_masks_;
  double low_weight_threshold_;
  std::uint64_t dropout_seed_;
  std::size_t step_ = 0;
};

/// Fraction of argmax-correct predictions with dropout disabled.
/// Throws ConfigError when class counts disagree.
double evaluate(const nn::Network& model, const data::Dataset& ds);

struct RunResult {
  std::vector<MetricsRow> rows;
  nn::Network model;
  std::size_t total_steps = 0;
  std::size_t samples_visited = 0;
};

using EpochCallback = std::function<void(const MetricsRow&)>;

/// Full training run. Any module error propagates; errors raised inside a
/// step are rethrown with the step index in the message.
RunResult run_training(const RunConfig& cfg, const EpochCallback& on_epoch = {});
RunResult run_training(const RunConfig& cfg, const PreparedData& data,
                       const EpochCallback& on_epoch = {});

}  // namespace bilevel::harness
