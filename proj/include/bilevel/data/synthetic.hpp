#pragma once

#include <cstddef>
#include <cstdint>

#include "bilevel/data/dataset.hpp"

namespace bilevel::data {

/// Handwriting-like 10-class digit glyphs rendered at side x side pixels
/// with random affine jitter, stroke width, vertex wobble, clutter strokes and
/// pixel noise. Pixel values are multiples of 1/255, so the set survives an
/// IDX/CSV round trip exactly. Classes are balanced.
Dataset make_glyph_digits(std::size_t count, std::uint64_t seed, std::size_t side = 28);

/// Two interleaved half-moons in 2-D, scaled into [0, 1]^2 and quantized to
/// 1/255 steps. Labels 0/1, balanced.
Dataset make_two_moons(std::size_t count, std::uint64_t seed, double noise = 0.15);

}  // namespace bilevel::data
