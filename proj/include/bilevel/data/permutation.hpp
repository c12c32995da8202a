#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bilevel/data/dataset.hpp"

namespace bilevel::data {

/// Fixed reordering of the pixel positions of every image:
/// permuted[p] = original[order[p]].
class PixelPermutation {
 public:
  /// Throws ConfigError unless `order` is a bijection on [0, size).
  explicit PixelPermutation(std::vector<std::size_t> order, std::uint64_t seed = 0);

  static PixelPermutation identity(std::size_t size);
  static PixelPermutation random(std::size_t size, std::uint64_t seed);

  PixelPermutation inverse() const;

  std::size_t size() const { return order_.size(); }
  const std::vector<std::size_t>& order() const { return order_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<std::size_t> order_;
  std::uint64_t seed_ = 0;
};

/// Throws ConfigError when the permutation length differs from the number of
/// values per example.
Dataset permute_pixels(const Dataset& ds, const PixelPermutation& perm);

}  // namespace bilevel::data
