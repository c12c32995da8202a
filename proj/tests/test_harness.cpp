#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "bilevel/error.hpp"
#include "bilevel/harness/config.hpp"
#include "bilevel/harness/metrics.hpp"
#include "bilevel/harness/preset.hpp"
#include "bilevel/harness/trainer.hpp"
#include "support.hpp"

using namespace bilevel;
using namespace bilevel::harness;

namespace {

RunConfig moons_config() {
  RunConfig cfg;
  cfg.dataset.format = DataSource::SyntheticMoons;
  cfg.dataset.synthetic_train = 1200;
  cfg.dataset.synthetic_test = 400;
  cfg.dataset.noise = 0.2;
  cfg.model.hidden = {16};
  cfg.optimizer.batch_size = 16;
  cfg.optimizer.learning_rate = 0.1;
  cfg.run.epochs = 3;
  return cfg;
}

std::string csv_of(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  write_metrics(rows, os);
  return os.str();
}

}  // namespace

TEST(Config, DefaultsMatchBaseline) {
  const auto cfg = parse_run_config("", {});
  EXPECT_EQ(cfg.optimizer.k, 8u);
  EXPECT_DOUBLE_EQ(cfg.optimizer.mu_hat, 0.01);
  EXPECT_DOUBLE_EQ(cfg.optimizer.lambda_hat, 1.0);
  EXPECT_DOUBLE_EQ(cfg.optimizer.momentum, 0.9);
  EXPECT_DOUBLE_EQ(cfg.optimizer.decay, 0.95);
  EXPECT_DOUBLE_EQ(cfg.optimizer.learning_rate, 0.01);
  EXPECT_TRUE(cfg.optimizer.use_l1);
  EXPECT_TRUE(cfg.optimizer.stratified);
  EXPECT_TRUE(cfg.model.share_dropout_mask);
}

TEST(Config, ParsesSectionsAndResolvesPaths) {
  const auto cfg = parse_run_config(R"(
dataset:
  format: idx
  train_path: data/train
  test_path: /abs/test
  noise: 0.3
model:
  architecture: desk-cnn
  dropout_keep: 0.5
optimizer:
  kind: sgd
  k: 4
  lambda_hat: .inf
run:
  epochs: 7
  seed: 99
)",
                                    "/base");
  EXPECT_EQ(cfg.dataset.format, DataSource::Idx);
  EXPECT_EQ(cfg.dataset.train_path, "/base/data/train");
  EXPECT_EQ(cfg.dataset.test_path, "/abs/test");
  EXPECT_DOUBLE_EQ(cfg.dataset.noise, 0.3);
  EXPECT_EQ(cfg.model.architecture, Architecture::DeskCnn);
  EXPECT_EQ(cfg.optimizer.kind, OptimizerKind::Sgd);
  EXPECT_EQ(cfg.optimizer.k, 4u);
  EXPECT_TRUE(std::isinf(cfg.optimizer.lambda_hat));
  EXPECT_EQ(cfg.run.epochs, 7u);
  EXPECT_EQ(cfg.run.seed, 99u);
}

TEST(Config, UnknownKeysAreErrorsWithLine) {
  try {
    parse_run_config("optimizer:\n  k: 4\n  mu: 0.1\n", {});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("optimizer.mu"), std::string::npos) << what;
    EXPECT_NE(what.find("line 3"), std::string::npos) << what;
  }
  EXPECT_THROW(parse_run_config("training:\n  epochs: 2\n", {}), ConfigError);
  EXPECT_THROW(parse_run_config("model:\n  architecture: resnet\n", {}), ConfigError);
  EXPECT_THROW(parse_run_config("optimizer:\n  k: many\n", {}), ConfigError);
  EXPECT_THROW(parse_run_config("dataset:\n  noise: 1.5\n", {}), ConfigError);
  EXPECT_THROW(parse_run_config("dataset:\n  format: idx\n", {}), ConfigError);
  EXPECT_THROW(parse_run_config("[1, 2", {}), ConfigError);
}

TEST(Config, YamlRoundTrip) {
  auto cfg = moons_config();
  cfg.optimizer.lambda_hat = std::numeric_limits<double>::infinity();
  cfg.optimizer.mu_hat = 0.1 + 0.2;
  cfg.model.hidden = {32, 8};
  const auto back = parse_run_config(to_yaml(cfg), {});
  EXPECT_EQ(to_yaml(back), to_yaml(cfg));
  EXPECT_EQ(back.optimizer.mu_hat, cfg.optimizer.mu_hat);
  EXPECT_EQ(back.model.hidden, cfg.model.hidden);
}

TEST(Config, CanonicalExampleLoads) {
  const auto cfg = load_run_config(std::filesystem::path(BILEVEL_SOURCE_DIR) / "configs" /
                                   "noisy-mlp.yaml");
  EXPECT_EQ(cfg.optimizer.kind, OptimizerKind::Bilevel);
  EXPECT_THROW(load_run_config("/nonexistent/config.yaml"), IoError);
}

TEST(Metrics, EmptyRunIsHeaderOnly) {
  EXPECT_EQ(csv_of({}), metrics_header() + "\n");
}

TEST(Metrics, RoundTripAndConstantColumns) {
  std::vector<MetricsRow> rows;
  for (std::size_t e = 1; e <= 4; ++e) {
    MetricsRow r;
    r.epoch = e;
    r.steps = 10 * e;
    r.train_loss = 1.0 / e;
    r.train_accuracy = 0.25 * e;
    r.test_accuracy = 0.125 * e;
    r.generalization_gap = r.train_accuracy - r.test_accuracy;
    r.negative_weight_fraction = 0.5;
    r.wall_seconds = 0.0;
    rows.push_back(r);
  }
  const auto text = csv_of(rows);
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) EXPECT_EQ(std::count(line.begin(), line.end(), ','), 10);
  std::istringstream in(text);
  const auto back = parse_metrics(in);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].epoch, rows[i].epoch);
    EXPECT_EQ(back[i].steps, rows[i].steps);
    EXPECT_NEAR(back[i].train_loss, rows[i].train_loss, 5e-7);
    EXPECT_EQ(back[i].train_accuracy, rows[i].train_accuracy);
    EXPECT_EQ(back[i].generalization_gap, rows[i].generalization_gap);
  }
  std::istringstream bad(metrics_header() + "\n1,2,3\n");
  EXPECT_THROW(parse_metrics(bad), DataError);
}

TEST(Metrics, UnwritablePathIsIoError) {
  EXPECT_THROW(emit_metrics({}, "/nonexistent-dir/x/metrics.csv"), IoError);
}

TEST(Evaluate, ConstantPredictorOnBalancedSet) {
  const auto ds = test::toy_dataset(200, 3, 10, 1);
  nn::Network net({3}, {nn::Dense{3, 10}});
  net.params()[30] = 1.0;  // bias of class 0
  EXPECT_DOUBLE_EQ(evaluate(net, ds), 0.10);
  const auto dup = ds.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1, 2, 3,
                                                      4, 5, 6, 7, 8, 9},
                             data::Split::Test);
  EXPECT_DOUBLE_EQ(evaluate(net, dup), 0.10);
  nn::Network wrong({3}, {nn::Dense{3, 4}});
  EXPECT_THROW(evaluate(wrong, ds), ConfigError);
}

TEST(Training, FixedSeedGivesByteIdenticalCsv) {
  for (auto kind : {OptimizerKind::Sgd, OptimizerKind::Bilevel}) {
    auto cfg = moons_config();
    cfg.optimizer.kind = kind;
    cfg.model.dropout_keep = 0.8;
    const auto a = run_training(cfg);
    const auto b = run_training(cfg);
    EXPECT_EQ(csv_of(a.rows), csv_of(b.rows));
    EXPECT_EQ(a.model.params(), b.model.params());
    ASSERT_EQ(a.rows.size(), 3u);
    for (const auto& r : a.rows) {
      EXPECT_EQ(r.generalization_gap, r.train_accuracy - r.test_accuracy);
    }
  }
}

TEST(Training, PairedRunsVisitEachSampleEqually) {
  auto cfg = moons_config();
  cfg.dataset.noise = 0.0;
  cfg.optimizer.batch_size = 10;
  cfg.optimizer.k = 4;
  const auto data = prepare_data(cfg);
  cfg.optimizer.kind = OptimizerKind::Sgd;
  const auto sgd = run_training(cfg, data);
  cfg.optimizer.kind = OptimizerKind::Bilevel;
  const auto bil = run_training(cfg, data);
  // 1200 balanced examples divide evenly into both batchings.
  EXPECT_EQ(sgd.samples_visited, 3u * 1200u);
  EXPECT_EQ(bil.samples_visited, 3u * 1200u);
  EXPECT_EQ(sgd.total_steps, 4 * bil.total_steps);
}

TEST(Training, PreparedDataAppliesNoiseOnlyToTraining) {
  auto cfg = moons_config();
  cfg.dataset.noise = 0.5;
  cfg.dataset.validation_ratio = 0.1;
  const auto d = prepare_data(cfg);
  EXPECT_EQ(d.corrupted, 600u);
  EXPECT_EQ(d.train.size() + d.pool.size(), 1200u);
  EXPECT_EQ(d.pool.size(), 120u);
  // Test labels stay clean: two-moons labels alternate by construction.
  EXPECT_EQ(d.test.class_counts(), (std::vector<std::size_t>{200, 200}));
}

TEST(Trainer, ReductionToSgdOverManySteps) {
  auto cfg = moons_config();
  cfg.optimizer.k = 2;
  const auto data = prepare_data(cfg);
  const auto model = build_model(cfg, data.train.example_shape(), data.train.class_count);
  Trainer sgd(model, cfg), bil(model, cfg);
  data::EpochBatcher batcher(data.train, cfg.optimizer.batch_size, 3);
  for (int t = 0; t < 50; ++t) {
    auto batch = batcher.next();
    ASSERT_TRUE(batch);
    const auto g = nn::batch_gradient(bil.model(), *batch, nn::DropoutSpec::disabled());
    const auto report = bil.bilevel_update(opt::GradientSet{g, {g}, 0}, 0.1);
    EXPECT_EQ(report.negative_weights, 0u);
    EXPECT_FALSE(report.degenerate);
    sgd.sgd_step(*batch, 0.1);
  }
  EXPECT_EQ(bil.model().params(), sgd.model().params());
}

TEST(Trainer, DegenerateStepLeavesParameters) {
  auto cfg = moons_config();
  const auto data = prepare_data(cfg);
  Trainer t(build_model(cfg, data.train.example_shape(), 2), cfg);
  const auto before = t.model().params();
  const auto zero = before.zeros_like();
  auto g = zero;
  g[0] = 1.0;
  const auto r = t.bilevel_update(opt::GradientSet{zero, {g, g}, 0}, 0.1);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(t.model().params(), before);
  EXPECT_EQ(t.steps(), 1u);
}

TEST(Trainer, StepErrorsCarryStepIndex) {
  auto cfg = moons_config();
  const auto data = prepare_data(cfg);
  Trainer t(build_model(cfg, data.train.example_shape(), 2), cfg);
  auto g = t.model().params().zeros_like();
  g[0] = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const auto ok = t.model().params().zeros_like();
    t.bilevel_update(opt::GradientSet{ok, {ok}, 0}, 0.1);
  }
  try {
    t.bilevel_update(opt::GradientSet{g, {g}, 0}, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos) << e.what();
  }
}

TEST(Trainer, DropoutMasksSharedOnlyWhenConfigured) {
  auto cfg = moons_config();
  cfg.model.dropout_keep = 0.5;
  const auto model = nn::make_mlp({2}, {4}, 2);
  Trainer shared(model, cfg);
  EXPECT_EQ(shared.dropout_for(0).mask_seed, shared.dropout_for(5).mask_seed);
  cfg.model.share_dropout_mask = false;
  Trainer independent(model, cfg);
  EXPECT_NE(independent.dropout_for(0).mask_seed, independent.dropout_for(5).mask_seed);
}

TEST(Presets, KSweep) {
  const auto cells = expand_preset("k-sweep", RunConfig{});
  ASSERT_EQ(cells.size(), 5u);
  const std::size_t ks[] = {2, 4, 8, 16, 32};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(cells[i].config.optimizer.k, ks[i]);
    EXPECT_EQ(cells[i].config.optimizer.k * cells[i].config.optimizer.batch_size, 512u);
  }
}

TEST(Presets, AblationGridRows) {
  const auto cells = expand_preset("ablation-grid", RunConfig{});
  ASSERT_EQ(cells.size(), 6u);
  std::map<std::string, RunConfig> by_name;
  for (const auto& c : cells) by_name[c.name] = c.config;
  EXPECT_EQ(by_name.at("sgd").optimizer.kind, OptimizerKind::Sgd);
  EXPECT_FALSE(by_name.at("a-no-l1").optimizer.use_l1);
  EXPECT_TRUE(by_name.at("b-per-layer").optimizer.per_layer_weights);
  EXPECT_FALSE(by_name.at("c-free-sampling").optimizer.stratified);
  EXPECT_FALSE(by_name.at("d-independent-dropout").model.share_dropout_mask);
  EXPECT_LT(by_name.at("d-independent-dropout").model.dropout_keep, 1.0);
  std::set<std::uint64_t> seeds;
  for (const auto& c : cells) seeds.insert(c.config.run.seed);
  EXPECT_EQ(seeds.size(), 1u);
}

TEST(Presets, NoiseSweepPairsShareSeeds) {
  const auto cells = expand_preset("noise-sweep", RunConfig{});
  ASSERT_EQ(cells.size(), 20u);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& sgd = cells[2 * i].config;
    const auto& bil = cells[2 * i + 1].config;
    EXPECT_EQ(sgd.optimizer.kind, OptimizerKind::Sgd);
    EXPECT_EQ(bil.optimizer.kind, OptimizerKind::Bilevel);
    EXPECT_NEAR(sgd.dataset.noise, 0.1 * i, 1e-12);
    EXPECT_EQ(sgd.dataset.noise, bil.dataset.noise);
    EXPECT_EQ(sgd.run.seed, bil.run.seed);
    seeds.insert(sgd.run.seed);
  }
  EXPECT_EQ(seeds.size(), 10u);
}

TEST(Presets, AllExpandDeterministically) {
  RunConfig base;
  base.run.seed = 5;
  for (const auto& name : preset_names()) {
    const auto a = expand_preset(name, base);
    const auto b = expand_preset(name, base);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_FALSE(a.empty());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].name, b[i].name);
      EXPECT_EQ(to_yaml(a[i].config), to_yaml(b[i].config));
    }
  }
  EXPECT_EQ(preset_names().size(), 7u);
  EXPECT_THROW(expand_preset("cifar", base), ConfigError);
}
