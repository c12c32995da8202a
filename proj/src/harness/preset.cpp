#include "bilevel/harness/preset.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>

#include "bilevel/error.hpp"

namespace bilevel::harness {
namespace {

// Seed of grid point `point`; both members of a pair use the same point.
std::uint64_t point_seed(std::uint64_t base, std::size_t point) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (point + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string label(const char* fmt, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

using Expander = std::function<std::vector<PresetCell>(const RunConfig&)>;

RunConfig with(const RunConfig& base, std::size_t point, OptimizerKind kind) {
  RunConfig cfg = base;
  cfg.run.seed = point_seed(base.run.seed, point);
  cfg.optimizer.kind = kind;
  return cfg;
}

void add_pair(std::vector<PresetCell>& cells, const std::string& name, const RunConfig& cfg) {
  RunConfig sgd = cfg;
  sgd.optimizer.kind = OptimizerKind::Sgd;
  RunConfig bil = cfg;
  bil.optimizer.kind = OptimizerKind::Bilevel;
  cells.push_back({name + "-sgd", sgd});
  cells.push_back({name + "-bilevel", bil});
}

const std::map<std::string, Expander, std::less<>>& expanders() {
  static const std::map<std::string, Expander, std::less<>> table{
      {"noise-sweep",
       [](const RunConfig& base) {
         std::vector<PresetCell> cells;
         for (std::size_t i = 0; i < 10; ++i) {
           RunConfig cfg = with(base, i, OptimizerKind::Bilevel);
           cfg.dataset.noise = 0.1 * static_cast<double>(i);
           add_pair(cells, label("noise-%.1f", cfg.dataset.noise), cfg);
         }
         return cells;
       }},
      {"k-sweep",
       [](const RunConfig& base) {
         // Steps per epoch stay fixed: k * batch_size matches the base setting.
         const std::size_t group = base.optimizer.k * base.optimizer.batch_size;
         std::vector<PresetCell> cells;
         std::size_t point = 0;
         for (std::size_t k : {2, 4, 8, 16, 32}) {
           RunConfig cfg = with(base, point++, OptimizerKind::Bilevel);
           cfg.optimizer.k = k;
           cfg.optimizer.batch_size = std::max<std::size_t>(1, group / k);
           cells.push_back({"k-" + std::to_string(k), cfg});
         }
         return cells;
       }},
      {"batch-size-sweep",
       [](const RunConfig& base) {
         std::vector<PresetCell> cells;
         std::size_t point = 0;
         for (std::size_t b : {16, 32, 64, 128, 256}) {
           RunConfig cfg = with(base, point++, OptimizerKind::Bilevel);
           cfg.optimizer.batch_size = b;
           cells.push_back({"batch-" + std::to_string(b), cfg});
         }
         return cells;
       }},
      {"mu-sweep",
       [](const RunConfig& base) {
         std::vector<PresetCell> cells;
         std::size_t point = 0;
         for (double mu : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
           RunConfig cfg = with(base, point++, OptimizerKind::Bilevel);
           cfg.optimizer.mu_hat = mu;
           cells.push_back({label("mu-%g", mu), cfg});
         }
         return cells;
       }},
      {"validation-ratio-sweep",
       [](const RunConfig& base) {
         std::vector<PresetCell> cells;
         std::size_t point = 0;
         for (double r : {0.0, 0.05, 0.1, 0.2, 0.5}) {
           RunConfig cfg = with(base, point++, OptimizerKind::Bilevel);
           cfg.dataset.validation_ratio = r;
           cells.push_back({label("val-%.2f", r), cfg});
         }
         return cells;
       }},
      {"pixel-perm",
       [](const RunConfig& base) {
         std::vector<PresetCell> cells;
         RunConfig cfg = with(base, 0, OptimizerKind::Bilevel);
         cfg.dataset.pixel_permutation = true;
         add_pair(cells, "perm", cfg);
         return cells;
       }},
      {"ablation-grid",
       [](const RunConfig& base) {
         const RunConfig cfg = with(base, 0, OptimizerKind::Bilevel);
         std::vector<PresetCell> cells;
         RunConfig sgd = cfg;
         sgd.optimizer.kind = OptimizerKind::Sgd;
         cells.push_back({"sgd", sgd});
         cells.push_back({"baseline", cfg});
         RunConfig a = cfg;
         a.optimizer.use_l1 = false;
         cells.push_back({"a-no-l1", a});
         RunConfig b = cfg;
         b.optimizer.per_layer_weights = true;
         b.optimizer.exact_solve = false;
         cells.push_back({"b-per-layer", b});
         RunConfig c = cfg;
         c.optimizer.stratified = false;
         cells.push_back({"c-free-sampling", c});
         RunConfig d = cfg;
         d.model.share_dropout_mask = false;
         if (d.model.dropout_keep >= 1.0) d.model.dropout_keep = 0.5;
         cells.push_back({"d-independent-dropout", d});
         return cells;
       }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : expanders()) out.push_back(name);
    return out;
  }();
  return names;
}

std::vector<PresetCell> expand_preset(std::string_view name, const RunConfig& base) {
  const auto it = expanders().find(name);
  if (it == expanders().end()) {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
  }
  auto cells = it->second(base);
  for (auto& cell : cells) cell.config.check();
  return cells;
}

}  // namespace bilevel::harness
