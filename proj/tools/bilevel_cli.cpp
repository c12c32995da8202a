// Command-line driver: train, preset, eval, make-dataset.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bilevel/data/io.hpp"
#include "bilevel/data/synthetic.hpp"
#include "bilevel/error.hpp"
#include "bilevel/harness/config.hpp"
#include "bilevel/harness/metrics.hpp"
#include "bilevel/harness/preset.hpp"
#include "bilevel/harness/trainer.hpp"
#include "bilevel/nn/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace bilevel;

namespace {

harness::RunConfig base_config(const std::string& path) {
  return path.empty() ? harness::RunConfig{} : harness::load_run_config(path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

// Run metadata next to the metrics file: resolved config plus totals.
void write_sidecar(const fs::path& csv, const harness::RunConfig& cfg,
                   const harness::RunResult& result, const harness::PreparedData& data) {
  nlohmann::ordered_json meta;
  meta["config"] = harness::to_yaml(cfg);
  meta["epochs"] = cfg.run.epochs;
  meta["seed"] = cfg.run.seed;
  meta["optimizer"] = harness::to_string(cfg.optimizer.kind);
  meta["train_examples"] = data.train.size();
  meta["pool_examples"] = data.pool.size();
  meta["test_examples"] = data.test.size();
  meta["corrupted_labels"] = data.corrupted;
  meta["total_steps"] = result.total_steps;
  meta["samples_visited"] = result.samples_visited;
  if (!result.rows.empty()) {
    const auto& last = result.rows.back();
    meta["final"] = {{"train_accuracy", last.train_accuracy},
                     {"test_accuracy", last.test_accuracy},
                     {"generalization_gap", last.generalization_gap}};
  }
  fs::path path = csv;
  path += ".json";
  write_text(path, meta.dump(2) + "\n");
}

void print_row(const harness::MetricsRow& r) {
  std::fprintf(stderr, "epoch %3zu  loss %.4f  train %.4f  test %.4f  gap %+.4f\n", r.epoch,
               r.train_loss, r.train_accuracy, r.test_accuracy, r.generalization_gap);
}

harness::RunResult train_one(const harness::RunConfig& cfg, const std::string& out,
                             const std::string& model_out, bool quiet) {
  const auto data = harness::prepare_data(cfg);
  auto result = harness::run_training(cfg, data, quiet ? harness::EpochCallback{} : print_row);
  if (out.empty()) {
    harness::write_metrics(result.rows, std::cout);
  } else {
    harness::emit_metrics(result.rows, out);
    write_sidecar(out, cfg, result, data);
  }
  if (!model_out.empty()) nn::save_network(result.model, model_out);
  return result;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilevel mini-batch reweighting experiments"};
  app.require_subcommand(1);

  std::string config_path, out, model_out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "Run one training configuration");
  train->add_option("--config", config_path, "YAML run configuration")->required();
  train->add_option("--out", out, "Metrics CSV (stdout when omitted)");
  train->add_option("--seed", seed, "Override run.seed");
  train->add_option("--epochs", epochs, "Override run.epochs");
  train->add_option("--model-out", model_out, "Write the final model checkpoint");
  train->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  std::string preset_name, out_dir;
  auto* preset = app.add_subcommand("preset", "Expand and run a preset grid");
  preset->add_option("name", preset_name, "Preset name")->required();
  preset->add_option("--out-dir", out_dir, "Directory for per-cell CSV files")->required();
  preset->add_option("--config", config_path, "Base configuration");
  preset->add_option("--epochs", epochs, "Override run.epochs for every cell");
  preset->add_option("--seed", seed, "Override the base seed");
  bool list_only = false;
  preset->add_flag("--list", list_only, "Print the cells without running them");
  preset->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  std::string model_path, data_path, format_name = "idx";
  std::size_t classes = 0;
  auto* eval = app.add_subcommand("eval", "Accuracy of a checkpoint on a dataset");
  eval->add_option("--model", model_path, "Checkpoint file")->required();
  eval->add_option("--data", data_path, "IDX prefix or CSV file")->required();
  eval->add_option("--format", format_name, "idx or csv");
  eval->add_option("--classes", classes, "Class count (default: from labels)");

  std::string kind = "glyphs", prefix;
  std::size_t train_count = 10000, test_count = 5000;
  std::uint64_t data_seed = 2018;
  auto* make = app.add_subcommand("make-dataset", "Write a synthetic dataset to disk");
  make->add_option("--kind", kind, "glyphs (IDX) or moons (CSV)")
      ->check(CLI::IsMember({"glyphs", "moons"}));
  make->add_option("--out", prefix, "Output prefix")->required();
  make->add_option("--train", train_count, "Training examples");
  make->add_option("--test", test_count, "Test examples");
  make->add_option("--seed", data_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train) {
      auto cfg = base_config(config_path);
      if (seed) cfg.run.seed = *seed;
      if (epochs) cfg.run.epochs = *epochs;
      cfg.check();
      train_one(cfg, out, model_out, quiet);
    } else if (*preset) {
      auto base = base_config(config_path);
      if (seed) base.run.seed = *seed;
      if (epochs) base.run.epochs = *epochs;
      const auto cells = harness::expand_preset(preset_name, base);
      if (list_only) {
        for (const auto& c : cells) std::cout << c.name << "\n";
        return 0;
      }
      std::error_code ec;
      fs::create_directories(out_dir, ec);
      if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
      for (const auto& cell : cells) {
        if (!quiet) std::fprintf(stderr, "== %s\n", cell.name.c_str());
        const auto csv = (fs::path(out_dir) / (cell.name + ".csv")).string();
        write_text(fs::path(out_dir) / (cell.name + ".yaml"), harness::to_yaml(cell.config));
        train_one(cell.config, csv, "", quiet);
      }
    } else if (*eval) {
      const auto net = nn::load_network(model_path);
      std::optional<std::size_t> k;
      if (classes) k = classes;
      else k = net.class_count();
      const auto ds = data::load_dataset(data_path, data::parse_format(format_name), k,
                                         data::Split::Test);
      std::printf("accuracy %.6f on %zu examples\n", harness::evaluate(net, ds), ds.size());
    } else if (*make) {
      if (kind == "glyphs") {
        data::write_idx(data::make_glyph_digits(train_count, data_seed), prefix + "-train");
        data::write_idx(data::make_glyph_digits(test_count, data_seed + 1), prefix + "-test");
      } else {
        data::write_csv(data::make_two_moons(train_count, data_seed), prefix + "-train.csv");
        data::write_csv(data::make_two_moons(test_count, data_seed + 1), prefix + "-test.csv");
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
