#pragma once

#include <cstddef>
#include <vector>

#include "bilevel/nn/tensor.hpp"

namespace bilevel::data {

/// Examples drawn from a Dataset, with inputs and labels resolved.
struct MiniBatch {
  std::vector<std::size_t> indices;  // unique positions in the source dataset
  nn::Tensor inputs;                 // [batch, ...example shape]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

}  // namespace bilevel::data
