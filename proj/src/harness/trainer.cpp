#include "bilevel/harness/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <random>

#include "bilevel/data/io.hpp"
#include "bilevel/data/noise.hpp"
#include "bilevel/data/permutation.hpp"
#include "bilevel/data/synthetic.hpp"
#include "bilevel/error.hpp"

namespace bilevel::harness {
namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::pair<data::Dataset, data::Dataset> load_splits(const DatasetSpec& spec) {
  std::optional<std::size_t> classes;
  if (spec.classes) classes = spec.classes;
  switch (spec.format) {
    case DataSource::Idx:
    case DataSource::Csv: {
      const auto format = spec.format == DataSource::Idx ? data::Format::Idx : data::Format::Csv;
      return {data::load_dataset(spec.train_path, format, classes, data::Split::Train),
              data::load_dataset(spec.test_path, format, classes, data::Split::Test)};
    }
    case DataSource::SyntheticGlyphs:
      return {data::make_glyph_digits(spec.synthetic_train, spec.synthetic_seed),
              data::make_glyph_digits(spec.synthetic_test, mix(spec.synthetic_seed))};
    case DataSource::SyntheticMoons:
      return {data::make_two_moons(spec.synthetic_train, spec.synthetic_seed),
              data::make_two_moons(spec.synthetic_test, mix(spec.synthetic_seed))};
  }
  throw InternalError("unhandled data source");
}

// Rethrows a module error with the step index prepended, keeping its kind.
[[noreturn]] void rethrow_at_step(const Error& e, std::size_t step) {
  raise(e.kind(), "step " + std::to_string(step) + ": " + e.what());
}

double stddev(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

struct EpochStats {
  std::size_t steps = 0;
  double loss = 0.0;
  double dispersion = 0.0;
  std::size_t weights = 0;
  std::size_t negative = 0;
  std::size_t degenerate = 0;
  std::size_t low_weight = 0;

  void add(const StepReport& r) {
    ++steps;
    loss += r.loss;
    dispersion += r.dispersion;
    weights += r.weights;
    negative += r.negative_weights;
    degenerate += r.degenerate ? 1 : 0;
    low_weight += r.low_weight ? 1 : 0;
  }
};

double ratio(std::size_t a, std::size_t b) {
  return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
}

}  // namespace

RunSeeds derive_seeds(std::uint64_t seed) {
  const std::uint64_t base = mix(seed);
  return RunSeeds{mix(base ^ 1), mix(base ^ 2), mix(base ^ 3),
                  mix(base ^ 4), mix(base ^ 5), mix(base ^ 6)};
}

PreparedData prepare_data(const RunConfig& cfg) {
  cfg.check();
  const auto& spec = cfg.dataset;
  const RunSeeds seeds = derive_seeds(cfg.run.seed);
  auto [train, test] = load_splits(spec);
  const std::size_t classes = std::max(train.class_count, test.class_count);
  train.class_count = test.class_count = classes;
  train = train.head(spec.train_limit);
  test = test.head(spec.test_limit);
  train.split = data::Split::Train;
  test.split = data::Split::Test;
  test.check();

  PreparedData out;
  auto noisy = data::inject_label_noise(train, data::NoiseSpec{spec.noise, classes, seeds.noise});
  out.corrupted = noisy.corrupted_count();
  train = std::move(noisy.dataset);

  if (spec.pixel_permutation) {
    const auto perm = data::PixelPermutation::random(train.inputs.row_size(), seeds.permutation);
    train = data::permute_pixels(train, perm);
    test = data::permute_pixels(test, perm);
  }

  std::mt19937_64 split_rng(seeds.split);
  auto [fit, pool] = data::split_validation_pool(train, spec.validation_ratio, split_rng);
  fit.check_training();
  out.train = std::move(fit);
  out.pool = std::move(pool);
  out.test = std::move(test);
  return out;
}

nn::Network build_model(const RunConfig& cfg, const nn::Shape& input_shape, std::size_t classes) {
  nn::Network net = cfg.model.architecture == Architecture::Mlp
                        ? nn::make_mlp(input_shape, cfg.model.hidden, classes)
                        : nn::make_desk_cnn(input_shape, classes);
  net.initialize(derive_seeds(cfg.run.seed).init);
  return net;
}

Trainer::Trainer(nn::Network model, const RunConfig& cfg)
    : model_(std::move(model)),
      momentum_(model_.params().size(), cfg.optimizer.momentum),
      keep_probability_(cfg.model.dropout_keep),
      share_masks_(cfg.model.share_dropout_mask),
      low_weight_threshold_(cfg.optimizer.low_weight_threshold),
      dropout_seed_(derive_seeds(cfg.run.seed).dropout) {
  const auto& o = cfg.optimizer;
  bilevel_.epsilon = o.learning_rate;
  bilevel_.lambda_hat = o.lambda_hat;
  bilevel_.mu_hat = o.mu_hat;
  bilevel_.k = o.k;
  bilevel_.use_l1 = o.use_l1;
  bilevel_.per_layer_weights = o.per_layer_weights;
  bilevel_.exact_solve = o.exact_solve;
  bilevel_.degeneracy_tolerance = o.degeneracy_tolerance;
  bilevel_.check();
}

nn::DropoutSpec Trainer::dropout_for(std::size_t batch_index) const {
  nn::DropoutSpec spec;
  spec.keep_probability = keep_probability_;
  spec.shared_across_batches = share_masks_;
  spec.mask_seed = mix(dropout_seed_ + step_);
  if (!share_masks_) spec.mask_seed = mix(spec.mask_seed ^ mix(batch_index + 1));
  return spec;
}

StepReport Trainer::sgd_step(const data::MiniBatch& batch, double learning_rate) {
  try {
    auto lg = nn::loss_and_gradient(model_, batch.inputs, batch.labels, dropout_for(0));
    if (!std::isfinite(lg.loss)) throw NumericError("non-finite training loss");
    opt::sgd_baseline_step(model_.params(), lg.gradient, momentum_, learning_rate, step_);
    ++step_;
    return StepReport{lg.loss};
  } catch (const Error& e) {
    rethrow_at_step(e, step_);
  }
}

StepReport Trainer::bilevel_step(const data::BatchGroup& group, double learning_rate) {
  opt::GradientSet grads;
  grads.step = step_;
  double loss = 0.0;
  try {
    for (std::size_t b = 0; b < group.batches.size(); ++b) {
      const auto& batch = group.batches[b];
      auto lg = nn::loss_and_gradient(model_, batch.inputs, batch.labels, dropout_for(b));
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite loss on batch " + std::to_string(b));
      }
      loss += lg.loss;
      if (b == group.validation_index) {
        grads.validation = std::move(lg.gradient);
      } else {
        grads.training.push_back(std::move(lg.gradient));
      }
    }
  } catch (const Error& e) {
    rethrow_at_step(e, step_);
  }
  StepReport report = bilevel_update(grads, learning_rate);
  report.loss = loss / static_cast<double>(group.batches.size());
  return report;
}

StepReport Trainer::bilevel_update(const opt::GradientSet& grads, double learning_rate) {
  StepReport report;
  try {
    std::vector<opt::WeightVector> weights;
    nn::ParamVector update;
    bool degenerate = false;
    if (bilevel_.per_layer_weights) {
      weights = opt::compute_weights_per_layer(grads, bilevel_);
      degenerate = std::all_of(weights.begin(), weights.end(),
                               [](const auto& w) { return w.degenerate; });
      if (!degenerate) update = opt::combine_gradients(grads, weights);
    } else {
      weights.push_back(bilevel_.exact_solve ? opt::exact_weight_solve(grads, bilevel_)
                                             : opt::compute_weights(grads, bilevel_));
      degenerate = weights.front().degenerate;
      if (!degenerate) update = opt::combine_gradients(grads, weights.front());
    }

    double top_raw = 0.0;
    double dispersion = 0.0;
    for (const auto& w : weights) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        top_raw = std::max(top_raw, std::abs(w.raw[i]));
        if (w.raw[i] < 0.0) ++report.negative_weights;
      }
      report.weights += w.size();
      dispersion += stddev(w.normalized);
    }
    report.dispersion = dispersion / static_cast<double>(weights.size());
    report.degenerate = degenerate;
    report.low_weight = top_raw < low_weight_threshold_;

    // Degenerate steps leave parameters and velocity untouched.
    if (!degenerate) {
      opt::momentum_step(model_.params(), update, momentum_, learning_rate, step_);
    }
  } catch (const Error& e) {
    rethrow_at_step(e, step_);
  }
  ++step_;
  return report;
}

double evaluate(const nn::Network& model, const data::Dataset& ds) {
  if (model.class_count() != ds.class_count) {
    throw ConfigError("model predicts " + std::to_string(model.class_count()) +
                      " classes, dataset has " + std::to_string(ds.class_count));
  }
  if (ds.empty()) return 0.0;
  constexpr std::size_t kChunk = 1000;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    const std::size_t end = std::min(ds.size(), start + kChunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const data::MiniBatch chunk = ds.batch(idx);
    const auto predicted = nn::predict(model, chunk.inputs);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      if (predicted[i] == chunk.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

RunResult run_training(const RunConfig& cfg, const EpochCallback& on_epoch) {
  return run_training(cfg, prepare_data(cfg), on_epoch);
}

RunResult run_training(const RunConfig& cfg, const PreparedData& data,
                       const EpochCallback& on_epoch) {
  cfg.check();
  const RunSeeds seeds = derive_seeds(cfg.run.seed);
  const auto& o = cfg.optimizer;
  Trainer trainer(build_model(cfg, data.train.example_shape(), data.train.class_count), cfg);
  const bool bilevel = o.kind == OptimizerKind::Bilevel;

  std::unique_ptr<data::BatchComposer> composer;
  std::unique_ptr<data::EpochBatcher> batcher;
  if (bilevel) {
    composer = std::make_unique<data::BatchComposer>(
        data.train, data::ComposerOptions{o.batch_size, o.k, o.stratified},
        data.pool.empty() ? nullptr : &data.pool, seeds.sampler);
  } else {
    batcher = std::make_unique<data::EpochBatcher>(data.train, o.batch_size, seeds.sampler);
  }

  RunResult result;
  const auto started = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < cfg.run.epochs; ++epoch) {
    const double lr = opt::decayed_learning_rate(o.learning_rate, o.decay, epoch);
    EpochStats stats;
    if (bilevel) {
      if (epoch > 0) composer->begin_epoch();
      while (auto group = composer->next()) {
        stats.add(trainer.bilevel_step(*group, lr));
        for (const auto& b : group->batches) result.samples_visited += b.size();
      }
    } else {
      if (epoch > 0) batcher->begin_epoch();
      while (auto batch = batcher->next()) {
        stats.add(trainer.sgd_step(*batch, lr));
        result.samples_visited += batch->size();
      }
    }

    MetricsRow row;
    row.epoch = epoch + 1;
    row.steps = stats.steps;
    row.train_loss = stats.steps ? stats.loss / static_cast<double>(stats.steps) : 0.0;
    row.train_accuracy = evaluate(trainer.model(), data.train);
    row.test_accuracy = evaluate(trainer.model(), data.test);
    row.generalization_gap = row.train_accuracy - row.test_accuracy;
    if (bilevel) {
      row.weight_dispersion = stats.steps ? stats.dispersion / static_cast<double>(stats.steps) : 0.0;
      row.negative_weight_fraction = ratio(stats.negative, stats.weights);
      row.degenerate_fraction = ratio(stats.degenerate, stats.steps);
      row.low_weight_fraction = ratio(stats.low_weight, stats.steps);
    }
    if (cfg.run.record_wall_clock) {
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    result.rows.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  result.total_steps = trainer.steps();
  result.model = trainer.model();
  return result;
}

}  // namespace bilevel::harness
