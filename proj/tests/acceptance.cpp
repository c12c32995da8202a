// Acceptance gate: one PASS/FAIL line per criterion on stdout, details on
// stderr. `acceptance --criterion N` runs a single criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bilevel/data/io.hpp"
#include "bilevel/data/noise.hpp"
#include "bilevel/data/sampler.hpp"
#include "bilevel/data/synthetic.hpp"
#include "bilevel/error.hpp"
#include "bilevel/harness/metrics.hpp"
#include "bilevel/harness/preset.hpp"
#include "bilevel/harness/trainer.hpp"
#include "bilevel/nn/network.hpp"
#include "bilevel/opt/momentum.hpp"
#include "bilevel/opt/weights.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace bilevel;
using harness::MetricsRow;
using harness::OptimizerKind;
using harness::RunConfig;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
};

template <class... Args>
void detail(const char* fmt, Args... args) {
  std::fprintf(stderr, "    ");
  std::fprintf(stderr, fmt, args...);
  std::fprintf(stderr, "\n");
}

std::string format(const char* fmt, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, a, b, c, d);
  return buf;
}

double l1(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += std::abs(x);
  return s;
}

int sign(double x) { return (x > 0) - (x < 0); }

// ---------------------------------------------------------------------------
// 1. Weight rule

Outcome weight_rule() {
  using test::flat;
  opt::BilevelConfig cfg;
  std::size_t failures = 0;
  auto near = [&](double got, double want, const char* what) {
    if (!(std::abs(got - want) <= 1e-9)) {
      ++failures;
      detail("%s: got %.17g want %.17g", what, got, want);
    }
  };

  {  // self-alignment, mu = 0
    opt::GradientSet g{flat({0.4, -1.0, 2.5}), {flat({0.4, -1.0, 2.5})}, 0};
    auto c = cfg;
    c.mu_hat = 0;
    const auto w = opt::compute_weights(g, c);
    near(w.raw[0], 1.0, "self-alignment raw");
    near(w.normalized[0], 1.0, "self-alignment normalized");
  }
  {  // orthogonality
    opt::GradientSet g{flat({1, 0, 0}), {flat({0, 1, 0}), flat({0, 0, 5})}, 0};
    const auto w = opt::compute_weights(g, cfg);
    if (!w.degenerate || w.raw[0] != 0 || w.raw[1] != 0) {
      ++failures;
      detail("orthogonal gradients not degenerate");
    }
  }
  {  // two-batch oracle (tests/oracles/weight_rule_oracle.py)
    opt::GradientSet g{flat({1, 0}), {flat({1, 0}), flat({1, 1})}, 0};
    const auto w = opt::compute_weights(g, cfg);
    near(w.raw[0], 0.99009900990099009, "two-batch raw[0]");
    near(w.raw[1], 0.49751243781094534, "two-batch raw[1]");
    near(w.normalized[0], 0.66556291390728484, "two-batch normalized[0]");
    near(w.normalized[1], 0.33443708609271527, "two-batch normalized[1]");
  }
  {  // opposed
    opt::GradientSet g{flat({1, 0}), {flat({-1, 0})}, 0};
    const auto w = opt::compute_weights(g, cfg);
    near(w.raw[0], -0.99009900990099009, "opposed raw");
    near(w.normalized[0], -1.0, "opposed normalized");
  }

  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dims(1, 64), count(1, 31);
  std::size_t property_failures = 0;
  double worst_l1 = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = test::random_gradients(dims(rng), count(rng), rng);
    const auto w = opt::compute_weights(g, cfg);
    if (w.degenerate) continue;
    worst_l1 = std::max(worst_l1, std::abs(l1(w.normalized) - 1.0));
    for (std::size_t i = 0; i < w.size(); ++i) {
      const int s = sign(nn::segment_dot(g.validation, g.training[i]));
      if (sign(w.raw[i]) != s || sign(w.normalized[i]) != s) ++property_failures;
    }
  }
  if (worst_l1 > 1e-12) ++property_failures;
  const bool pass = failures == 0 && property_failures == 0;
  return {pass, format("examples at 1e-9: %.0f failures; 1000 random sets: max |sum|w|-1| = %.1e, "
                       "%.0f sign-law violations",
                       double(failures), worst_l1, double(property_failures))};
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalence

Outcome oracle_equivalence() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> count(1, 8);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  opt::BilevelConfig cfg;
  double worst_diff = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = count(rng);
    std::uniform_int_distribution<std::size_t> dims(k, 64);
    const std::size_t d = dims(rng);
    auto g = test::random_gradients(d, k, rng);
    // Gram-Schmidt makes the training gradients mutually orthogonal.
    for (std::size_t i = 0; i < k; ++i) {
      auto& gi = g.training[i];
      for (std::size_t j = 0; j < i; ++j) {
        const auto& gj = g.training[j];
        const double c = nn::segment_dot(gi, gj) / nn::segment_dot(gj, gj);
        for (std::size_t t = 0; t < d; ++t) gi[t] -= c * gj[t];
      }
      const double s = scale(rng) / std::sqrt(nn::segment_dot(gi, gi));
      for (auto& v : gi.values()) v *= s;
    }
    const auto a = opt::compute_weights(g, cfg);
    const auto b = opt::exact_weight_solve(g, cfg);
    for (std::size_t i = 0; i < k; ++i) {
      worst_diff = std::max({worst_diff, std::abs(a.raw[i] - b.raw[i]),
                             std::abs(a.normalized[i] - b.normalized[i])});
    }
  }

  double worst_residual = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = count(rng);
    std::uniform_int_distribution<std::size_t> dims(1, 64);
    const auto g = test::random_gradients(dims(rng), k, rng);
    const auto w = opt::exact_weight_solve(g, cfg);
    double r2 = 0;
    for (std::size_t i = 0; i < k; ++i) {
      double lhs = cfg.mu_hat * w.raw[i];
      for (std::size_t j = 0; j < k; ++j) {
        lhs += nn::segment_dot(g.training[i], g.training[j]) * w.raw[j] / cfg.lambda_hat;
      }
      const double r = lhs - nn::segment_dot(g.validation, g.training[i]);
      r2 += r * r;
    }
    worst_residual = std::max(worst_residual, std::sqrt(r2));
  }
  const bool pass = worst_diff <= 1e-10 && worst_residual <= 1e-10;
  return {pass, format("orthogonal: max |diagonal - exact| = %.1e (<= 1e-10); general: max "
                       "residual = %.1e (<= 1e-10)",
                       worst_diff, worst_residual)};
}

// ---------------------------------------------------------------------------
// 3. Gradient correctness

Outcome gradient_check() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst = 0;
  std::size_t largest = 0;
  for (int trial = 0; trial < 20; ++trial) {
    nn::Network net;
    nn::Shape example;
    if (trial % 4 == 3) {
      example = {1, 7, 7};
      net = nn::Network(example, {nn::Conv2d{1, 2, 3}, nn::Relu{}, nn::MaxPool2{}, nn::Flatten{},
                                  nn::Dense{8, 5}, nn::Relu{}, nn::Dropout{}, nn::Dense{5, 3}});
    } else {
      const std::size_t in = 2 + trial % 5, hidden = 3 + trial % 6, classes = 2 + trial % 4;
      example = {in};
      net = nn::make_mlp(example, {hidden}, classes);
    }
    net.initialize(1000 + trial);
    largest = std::max(largest, net.params().size());
    const std::size_t batch = 5;
    nn::Shape shape{batch};
    shape.insert(shape.end(), example.begin(), example.end());
    nn::Tensor x(shape);
    for (auto& v : x.values()) v = gauss(rng);
    std::vector<int> y(batch);
    for (std::size_t i = 0; i < batch; ++i) y[i] = static_cast<int>((i * 7 + trial) % net.class_count());
    const nn::DropoutSpec dropout{trial % 2 ? 0.8 : 1.0, 55u + trial, true};

    const auto analytic = nn::loss_and_gradient(net, x, y, dropout).gradient;
    nn::Network probe = net;
    for (std::size_t i = 0; i < probe.params().size(); ++i) {
      const double keep = probe.params()[i];
      probe.params()[i] = keep + 1e-4;
      const double up = nn::batch_loss(probe, x, y, dropout);
      probe.params()[i] = keep - 1e-4;
      const double down = nn::batch_loss(probe, x, y, dropout);
      probe.params()[i] = keep;
      const double numeric = (up - down) / 2e-4;
      // Relative error, with coordinates below 1e-6 in magnitude compared absolutely.
      const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
    }
  }
  return {worst <= 1e-4, format("20 networks (d <= %.0f): max relative coordinate error %.2e "
                                "(<= 1e-4)",
                                double(largest), worst)};
}

// ---------------------------------------------------------------------------
// 4. Reduction to SGD

RunConfig glyph_config(double noise, bool permute, std::uint64_t seed, const fs::path& idx_dir);

Outcome reduction() {
  RunConfig cfg;
  cfg.dataset.format = harness::DataSource::SyntheticGlyphs;
  cfg.dataset.synthetic_train = 2000;
  cfg.dataset.synthetic_test = 100;
  cfg.model.hidden = {64};
  cfg.optimizer.k = 2;
  const auto data = harness::prepare_data(cfg);
  const auto model =
      harness::build_model(cfg, data.train.example_shape(), data.train.class_count);
  harness::Trainer sgd(model, cfg), bil(model, cfg);
  data::EpochBatcher batcher(data.train, cfg.optimizer.batch_size, 5);
  double worst = 0;
  for (int step = 0; step < 50; ++step) {
    auto batch = batcher.next();
    if (!batch) {
      batcher.begin_epoch();
      batch = batcher.next();
    }
    data::BatchGroup group;
    group.batches = {*batch, *batch};
    group.validation_index = 0;
    bil.bilevel_step(group, cfg.optimizer.learning_rate);
    sgd.sgd_step(*batch, cfg.optimizer.learning_rate);
    const auto& a = bil.model().params();
    const auto& b = sgd.model().params();
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return {worst <= 1e-10, format("k = 2, validation batch = training batch, 50 steps: max "
                                 "per-parameter deviation %.1e (<= 1e-10)",
                                 worst)};
}

// ---------------------------------------------------------------------------
// 5-7. Desk experiments

// Glyph digits written once as IDX files and read back through the loader.
const fs::path& glyph_idx_dir() {
  static test::TempDir dir("acceptance-idx");
  static bool written = false;
  if (!written) {
    data::write_idx(data::make_glyph_digits(10000, 2018), dir / "train");
    data::write_idx(data::make_glyph_digits(5000, 2019), dir / "test");
    written = true;
  }
  return dir.path();
}

RunConfig glyph_config(double noise, bool permute, std::uint64_t seed, const fs::path& idx_dir) {
  RunConfig cfg;
  cfg.dataset.format = harness::DataSource::Idx;
  cfg.dataset.train_path = (idx_dir / "train").string();
  cfg.dataset.test_path = (idx_dir / "test").string();
  cfg.dataset.train_limit = 10000;
  cfg.dataset.noise = noise;
  cfg.dataset.pixel_permutation = permute;
  cfg.model.architecture = harness::Architecture::Mlp;
  cfg.model.hidden = {256};
  cfg.run.epochs = 30;
  cfg.run.seed = seed;
  return cfg;
}

struct Pair {
  MetricsRow sgd;
  MetricsRow bilevel;
};

Pair run_pair(RunConfig cfg) {
  const auto data = harness::prepare_data(cfg);
  Pair p;
  cfg.optimizer.kind = OptimizerKind::Sgd;
  p.sgd = harness::run_training(cfg, data).rows.back();
  cfg.optimizer.kind = OptimizerKind::Bilevel;
  p.bilevel = harness::run_training(cfg, data).rows.back();
  detail("seed %llu  sgd: train %.4f test %.4f gap %+.4f | bilevel: train %.4f test %.4f gap %+.4f",
         static_cast<unsigned long long>(cfg.run.seed), p.sgd.train_accuracy,
         p.sgd.test_accuracy, p.sgd.generalization_gap, p.bilevel.train_accuracy,
         p.bilevel.test_accuracy, p.bilevel.generalization_gap);
  return p;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

Outcome noisy_labels() {
  int wins = 0;
  double gap_sgd = 0, gap_bil = 0;
  for (auto seed : kSeeds) {
    const auto p = run_pair(glyph_config(0.5, false, seed, glyph_idx_dir()));
    wins += p.bilevel.test_accuracy >= p.sgd.test_accuracy;
    gap_sgd += p.sgd.generalization_gap / 3;
    gap_bil += p.bilevel.generalization_gap / 3;
  }
  // Signed reduction relative to the SGD gap's magnitude.
  const double reduction = (gap_sgd - gap_bil) / std::abs(gap_sgd);
  const bool pass = wins == 3 && reduction >= 0.3;
  return {pass, format("pi = 0.5: bilevel test >= sgd test in %.0f/3 seeds; mean gap sgd %+.4f, "
                       "bilevel %+.4f, relative reduction %.1f%% (>= 30%%)",
                       wins, gap_sgd, gap_bil, 100 * reduction)};
}

Outcome pixel_permutation() {
  int wins = 0;
  double ratio_sum = 0;
  for (auto seed : kSeeds) {
    const auto p = run_pair(glyph_config(0.0, true, seed, glyph_idx_dir()));
    wins += p.bilevel.generalization_gap <= 0.5 * p.sgd.generalization_gap;
    ratio_sum += p.bilevel.generalization_gap / p.sgd.generalization_gap / 3;
  }
  return {wins == 3, format("fixed permutation, clean labels: bilevel gap <= 0.5 x sgd gap in "
                            "%.0f/3 seeds (mean ratio %.2f)",
                            wins, ratio_sum)};
}

Outcome clean_data() {
  double sgd = 0, bil = 0;
  for (auto seed : kSeeds) {
    const auto p = run_pair(glyph_config(0.0, false, seed, glyph_idx_dir()));
    sgd += p.sgd.test_accuracy / 3;
    bil += p.bilevel.test_accuracy / 3;
  }
  const double diff_pp = 100 * (bil - sgd);
  return {diff_pp >= -1.0, format("pi = 0: mean test accuracy sgd %.2f%%, bilevel %.2f%%, "
                                  "difference %+.2f pp (>= -1.0 pp)",
                                  100 * sgd, 100 * bil, diff_pp)};
}

// ---------------------------------------------------------------------------
// 8. Data layer

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome data_layer() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };

  // Noise exactness and never-self-relabel.
  const auto clean = test::toy_dataset(10000, 4, 10, 8);
  const auto noisy = data::inject_label_noise(clean, {0.5, 10, 17});
  std::vector<std::size_t> per_class(10, 0);
  std::size_t self = 0, correct = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (noisy.corrupted[i]) {
      ++per_class[clean.labels[i]];
      self += noisy.dataset.labels[i] == clean.labels[i];
    }
    correct += noisy.dataset.labels[i] == clean.labels[i];
  }
  expect(per_class == std::vector<std::size_t>(10, 500), "corrupted count per class != 500");
  expect(self == 0, "corrupted label equals original");
  expect(correct == 5000, "fraction still correct != 0.5");
  for (double pi : {0.1, 0.25, 0.33, 0.9}) {
    const auto n = data::inject_label_noise(clean, {pi, 10, 3});
    expect(n.corrupted_count() == 10 * data::round_half_up(pi * 1000), "count at other pi");
  }

  // Histogram equality in every group over several epochs.
  std::size_t groups = 0, unequal = 0;
  data::BatchComposer composer(noisy.dataset, {64, 8, true}, nullptr, 4);
  for (int epoch = 0; epoch < 3; ++epoch) {
    if (epoch) composer.begin_epoch();
    while (auto g = composer.next()) {
      ++groups;
      for (const auto& h : g->histograms) unequal += h != g->histograms[0];
    }
  }
  expect(groups > 0 && unequal == 0, "unequal histograms in a batch group");

  // IDX / CSV round trips.
  test::TempDir dir("acceptance-data");
  data::Dataset tiny;
  tiny.inputs = nn::Tensor({4, 2, 2}, {0, 1, 2, 3, 10, 20, 30, 40, 255, 0, 255, 0, 7, 7, 7, 7});
  for (auto& v : tiny.inputs.values()) v /= 255.0;
  tiny.labels = {0, 1, 2, 1};
  tiny.class_count = 3;
  data::write_idx(tiny, dir / "tiny");
  data::write_csv(tiny, dir / "tiny.csv");
  const auto from_idx = data::load_dataset(dir / "tiny", data::Format::Idx);
  const auto from_csv = data::load_dataset(dir / "tiny.csv", data::Format::Csv);
  expect(from_idx.inputs == tiny.inputs && from_idx.labels == tiny.labels, "IDX round trip");
  expect(from_csv.inputs == from_idx.inputs && from_csv.labels == from_idx.labels,
         "CSV differs from IDX");
  expect(slurp(dir / "tiny.csv") == "label,p0,p1,p2,p3\n0,0,1,2,3\n1,10,20,30,40\n"
                                    "2,255,0,255,0\n1,7,7,7,7\n",
         "CSV fixture bytes");

  // Byte-identical reruns.
  data::write_idx(data::make_glyph_digits(200, 9), dir / "a");
  data::write_idx(data::make_glyph_digits(200, 9), dir / "b");
  expect(slurp(data::idx_images_path(dir / "a")) == slurp(data::idx_images_path(dir / "b")),
         "IDX rerun bytes");
  RunConfig cfg;
  cfg.dataset.format = harness::DataSource::SyntheticMoons;
  cfg.dataset.synthetic_train = 800;
  cfg.dataset.synthetic_test = 200;
  cfg.dataset.noise = 0.3;
  cfg.dataset.validation_ratio = 0.1;
  cfg.model.hidden = {8};
  cfg.optimizer.batch_size = 8;
  cfg.run.epochs = 2;
  harness::emit_metrics(harness::run_training(cfg).rows, dir / "r1.csv");
  harness::emit_metrics(harness::run_training(cfg).rows, dir / "r2.csv");
  expect(slurp(dir / "r1.csv") == slurp(dir / "r2.csv"), "metrics CSV rerun bytes");
  const auto d1 = harness::prepare_data(cfg);
  const auto d2 = harness::prepare_data(cfg);
  expect(d1.train.labels == d2.train.labels && d1.pool.labels == d2.pool.labels &&
             d1.train.inputs == d2.train.inputs,
         "prepared splits differ");

  std::string why;
  for (const auto& f : failed) why += (why.empty() ? "; failed: " : ", ") + f;
  return {failed.empty(), "noise counts, self-relabel, " + std::to_string(groups) +
                              " stratified groups, IDX/CSV fixtures, reruns" + why};
}

// ---------------------------------------------------------------------------
// 9. Ablation grid smoke

Outcome ablation_grid() {
  auto base = glyph_config(0.5, false, 1, glyph_idx_dir());
  base.run.epochs = 3;
  const auto cells = harness::expand_preset("ablation-grid", base);
  test::TempDir dir("acceptance-ablation");
  std::size_t baseline_events = 0, free_events = 0;
  std::vector<std::string> failed;
  for (const auto& cell : cells) {
    const auto result = harness::run_training(cell.config);
    const auto path = dir / (cell.name + ".csv");
    harness::emit_metrics(result.rows, path);
    std::ifstream in(path);
    const auto back = harness::parse_metrics(in);
    if (back.size() != 3) failed.push_back(cell.name);
    std::size_t events = 0;
    for (const auto& r : result.rows) {
      events += static_cast<std::size_t>(
          std::llround((r.degenerate_fraction + r.low_weight_fraction) * r.steps));
    }
    detail("%-24s test %.4f  degenerate + low-weight steps %zu", cell.name.c_str(),
           result.rows.back().test_accuracy, events);
    if (cell.name == "baseline") baseline_events = events;
    if (cell.name == "c-free-sampling") free_events = events;
  }
  const bool pass = failed.empty() && free_events > baseline_events;
  return {pass, format("variants a-d ran 3 epochs with well-formed CSV; degenerate/low-weight "
                       "steps: free sampling %.0f vs stratified %.0f",
                       double(free_events), double(baseline_events)) +
                    (failed.empty() ? "" : "; malformed output")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--criterion", only, "Run only these criteria (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "weight-rule suite", 5, weight_rule},
      {2, "oracle equivalence", 10, oracle_equivalence},
      {3, "gradient correctness", 60, gradient_check},
      {4, "reduction to sgd", 30, reduction},
      {5, "noisy-label desk experiment", 600, noisy_labels},
      {6, "pixel-permutation desk experiment", 600, pixel_permutation},
      {7, "clean-data non-degradation", 600, clean_data},
      {8, "data-layer suite", 10, data_layer},
      {9, "ablation-grid smoke", 300, ablation_grid},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = seconds <= c.budget_seconds;
    const bool pass = out.pass && in_budget;
    failures += !pass;
    std::printf("criterion %d %s: %s | %s | %.1f s (budget %.0f s)\n", c.id,
                pass ? "PASS" : "FAIL", c.name, out.summary.c_str(), seconds, c.budget_seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
