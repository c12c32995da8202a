#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "bilevel/nn/buffer.hpp"

namespace bilevel::nn {

/// Contiguous range of a flat vector owned by one trainable layer.
struct Segment {
  std::size_t layer = 0;  // index into Network::layers()
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Ordered segments that tile [0, d) without gaps or overlaps.
class SegmentLayout {
 public:
  SegmentLayout() = default;
  /// Throws InternalError unless the segments tile [0, total) in order.
  explicit SegmentLayout(std::vector<Segment> segments);

  /// Single segment covering [0, length); used for ad-hoc vectors.
  static SegmentLayout single(std::size_t length);

  std::size_t total() const { return total_; }
  std::size_t count() const { return segments_.size(); }
  const Segment& operator[](std::size_t i) const { return segments_[i]; }
  const std::vector<Segment>& segments() const { return segments_; }

  friend bool operator==(const SegmentLayout&, const SegmentLayout&) = default;

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

/// Flat parameter (or gradient) vector with its per-layer segment index.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(SegmentLayout layout);
  ParamVector(SegmentLayout layout, const std::vector<double>& values);
  ParamVector(SegmentLayout layout, Buffer values);

  /// Zero vector sharing this vector's layout.
  ParamVector zeros_like() const { return ParamVector(layout_); }

  std::size_t size() const { return values_.size(); }
  const SegmentLayout& layout() const { return layout_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<const double> segment(std::size_t s) const;
  std::span<double> segment(std::size_t s);

  bool all_finite() const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  SegmentLayout layout_;
  Buffer values_;
};

/// Inner product of two flat vectors; restricted to one segment when given.
/// Throws InternalError when the layouts differ.
double segment_dot(const ParamVector& a, const ParamVector& b,
                   std::optional<std::size_t> segment = std::nullopt);

}  // namespace bilevel::nn
