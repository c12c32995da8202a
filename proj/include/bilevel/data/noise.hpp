#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bilevel/data/dataset.hpp"

namespace bilevel::data {

struct NoiseSpec {
  double level = 0.0;  // fraction pi of each class to relabel, in [0, 1]
  std::size_t class_count = 0;
  std::uint64_t seed = 0;
};

struct NoisyDataset {
  Dataset dataset;
  std::vector<bool> corrupted;  // per example; true where the label was reassigned

  std::size_t corrupted_count() const;
};

/// Per class, relabels exactly round-half-up(level * class size) examples,
/// each with a label drawn uniformly from the other c - 1 classes.
NoisyDataset inject_label_noise(const Dataset& ds, const NoiseSpec& spec);

}  // namespace bilevel::data
