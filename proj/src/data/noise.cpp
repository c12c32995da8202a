#include "bilevel/data/noise.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "bilevel/data/sampler.hpp"
#include "bilevel/error.hpp"

namespace bilevel::data {

std::size_t NoisyDataset::corrupted_count() const {
  return static_cast<std::size_t>(std::count(corrupted.begin(), corrupted.end(), true));
}

NoisyDataset inject_label_noise(const Dataset& ds, const NoiseSpec& spec) {
  if (!(spec.level >= 0.0 && spec.level <= 1.0)) {
    throw ConfigError("noise level must lie in [0, 1], got " + std::to_string(spec.level));
  }
  if (spec.class_count != ds.class_count) {
    throw ConfigError("noise spec has " + std::to_string(spec.class_count) +
                      " classes, dataset has " + std::to_string(ds.class_count));
  }
  if (spec.class_count < 2 && spec.level > 0.0) {
    throw ConfigError("label noise needs at least 2 classes");
  }
  ds.check();

  NoisyDataset out{ds, std::vector<bool>(ds.size(), false)};
  if (spec.level == 0.0) return out;

  std::mt19937_64 rng(spec.seed);
  const auto classes = static_cast<int>(spec.class_count);
  std::vector<std::vector<std::size_t>> members(spec.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) members[ds.labels[i]].push_back(i);

  for (int c = 0; c < classes; ++c) {
    auto& idx = members[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t flips = std::min(idx.size(), round_half_up(spec.level * idx.size()));
    std::uniform_int_distribution<int> other(0, classes - 2);
    for (std::size_t j = 0; j < flips; ++j) {
      int label = other(rng);
      if (label >= c) ++label;  // skip the true class
      out.dataset.labels[idx[j]] = label;
      out.corrupted[idx[j]] = true;
    }
  }
  return out;
}

}  // namespace bilevel::data
