#pragma once

#include <filesystem>

#include "bilevel/nn/network.hpp"

namespace bilevel::nn {

// Little-endian layout:
//   char[4]  "BLNN"
//   u32      version (1)
//   u32      input rank, then u32 per input dimension
//   u32      layer count
//   per layer: u32 kind (0 dense, 1 relu, 2 dropout, 3 flatten, 4 conv2d,
//              5 maxpool2), u32 a, u32 b, u32 c
//              dense: a=inputs b=outputs; conv2d: a=in b=out c=kernel
//   u64      parameter count d
//   f64[d]   parameter values
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace bilevel::nn
