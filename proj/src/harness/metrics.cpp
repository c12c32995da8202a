#include "bilevel/harness/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "bilevel/error.hpp"

namespace bilevel::harness {
namespace {

constexpr std::size_t kColumns = 11;

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  // Avoid "-0.000000" so reruns that differ only in the sign of zero match.
  if (std::string_view(buf) == "-0.000000") return "0.000000";
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string metrics_header() {
  return "epoch,steps,train_loss,train_accuracy,test_accuracy,generalization_gap,"
         "weight_dispersion,negative_weight_fraction,degenerate_fraction,low_weight_fraction,"
         "wall_seconds";
}

void write_metrics(const std::vector<MetricsRow>& rows, std::ostream& out) {
  out << metrics_header() << '\n';
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.steps << ',' << fixed(r.train_loss) << ','
        << fixed(r.train_accuracy) << ',' << fixed(r.test_accuracy) << ','
        << fixed(r.generalization_gap) << ',' << fixed(r.weight_dispersion) << ','
        << fixed(r.negative_weight_fraction) << ',' << fixed(r.degenerate_fraction) << ','
        << fixed(r.low_weight_fraction) << ',' << fixed(r.wall_seconds) << '\n';
  }
}

void emit_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_metrics(rows, out);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<MetricsRow> parse_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != metrics_header()) {
    throw DataError("metrics: missing or unexpected header");
  }
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != kColumns) {
      throw DataError("metrics line " + std::to_string(line_no) + ": expected " +
                      std::to_string(kColumns) + " columns, got " + std::to_string(cells.size()));
    }
    MetricsRow r;
    try {
      r.epoch = std::stoul(cells[0]);
      r.steps = std::stoul(cells[1]);
      double* reals[] = {&r.train_loss,       &r.train_accuracy,
                         &r.test_accuracy,    &r.generalization_gap,
                         &r.weight_dispersion, &r.negative_weight_fraction,
                         &r.degenerate_fraction, &r.low_weight_fraction,
                         &r.wall_seconds};
      for (std::size_t i = 0; i < 9; ++i) {
        std::size_t used = 0;
        *reals[i] = std::stod(cells[i + 2], &used);
        if (used != cells[i + 2].size()) throw std::invalid_argument(cells[i + 2]);
      }
    } catch (const std::logic_error&) {
      throw DataError("metrics line " + std::to_string(line_no) + ": malformed number");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace bilevel::harness
