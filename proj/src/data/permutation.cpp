#include "bilevel/data/permutation.hpp"

#include <numeric>
#include <random>
#include <string>

#include "bilevel/error.hpp"

namespace bilevel::data {

PixelPermutation::PixelPermutation(std::vector<std::size_t> order, std::uint64_t seed)
    : order_(std::move(order)), seed_(seed) {
  std::vector<bool> seen(order_.size(), false);
  for (std::size_t p : order_) {
    if (p >= order_.size() || seen[p]) {
      throw ConfigError("pixel permutation is not a bijection on " + std::to_string(order_.size()) +
                        " positions");
    }
    seen[p] = true;
  }
}

PixelPermutation PixelPermutation::identity(std::size_t size) {
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return PixelPermutation(std::move(order));
}

PixelPermutation PixelPermutation::random(std::size_t size, std::uint64_t seed) {
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return PixelPermutation(std::move(order), seed);
}

PixelPermutation PixelPermutation::inverse() const {
  std::vector<std::size_t> inv(order_.size());
  for (std::size_t p = 0; p < order_.size(); ++p) inv[order_[p]] = p;
  return PixelPermutation(std::move(inv), seed_);
}

Dataset permute_pixels(const Dataset& ds, const PixelPermutation& perm) {
  const std::size_t pixels = ds.inputs.row_size();
  if (perm.size() != pixels) {
    throw ConfigError("permutation over " + std::to_string(perm.size()) +
                      " pixels applied to examples with " + std::to_string(pixels) + " values");
  }
  Dataset out = ds;
  const auto& order = perm.order();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto src = ds.inputs.row(i);
    auto dst = out.inputs.row(i);
    for (std::size_t p = 0; p < pixels; ++p) dst[p] = src[order[p]];
  }
  return out;
}

}  // namespace bilevel::data
