#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bilevel/data/minibatch.hpp"
#include "bilevel/nn/tensor.hpp"

namespace bilevel::data {

enum class Split { Train, Test, ValidationPool };

/// m labelled examples. Inputs have shape [m, ...example shape].
struct Dataset {
  nn::Tensor inputs;
  std::vector<int> labels;
  std::size_t class_count = 0;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  nn::Shape example_shape() const;

  /// Number of examples per class, length class_count.
  std::vector<std::size_t> class_counts() const;

  /// Throws DataError on label/input count mismatch or labels out of range.
  void check() const;
  /// check() plus: every class has at least one example.
  void check_training() const;

  /// Examples at `indices` (in that order) as a new dataset.
  Dataset subset(std::span<const std::size_t> indices, Split split) const;
  /// First `count` examples (all when count == 0 or count >= size()).
  Dataset head(std::size_t count) const;

  /// Resolves `indices` into a mini-batch.
  MiniBatch batch(std::span<const std::size_t> indices) const;
};

}  // namespace bilevel::data
