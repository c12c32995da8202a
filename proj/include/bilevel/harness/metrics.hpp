#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace bilevel::harness {

/// Per-epoch record. Accuracies are fractions in [0, 1]; train accuracy is
/// measured against the (possibly noisy) training labels, test accuracy
/// against clean labels.
struct MetricsRow {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double generalization_gap = 0.0;  // train_accuracy - test_accuracy
  double weight_dispersion = 0.0;   // mean per-step std-dev of normalized weights
  double negative_weight_fraction = 0.0;
  double degenerate_fraction = 0.0;
  double low_weight_fraction = 0.0;
  double wall_seconds = 0.0;
};

std::string metrics_header();

/// CSV with one row per epoch; reals printed with 6 decimals.
void write_metrics(const std::vector<MetricsRow>& rows, std::ostream& out);
/// Throws IoError when the file cannot be written.
void emit_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);
/// Inverse of write_metrics. Throws DataError on malformed rows.
std::vector<MetricsRow> parse_metrics(std::istream& in);

}  // namespace bilevel::harness
