#include "bilevel/nn/param_vector.hpp"

#include <cmath>
#include <string>

#include "bilevel/error.hpp"

namespace bilevel::nn {

SegmentLayout::SegmentLayout(std::vector<Segment> segments) : segments_(std::move(segments)) {
  std::size_t next = 0;
  for (const auto& s : segments_) {
    if (s.offset != next || s.length == 0) {
      throw InternalError("segments must tile the parameter range: segment at offset " +
                          std::to_string(s.offset) + " expected at " + std::to_string(next));
    }
    next += s.length;
  }
  total_ = next;
}

SegmentLayout SegmentLayout::single(std::size_t length) {
  if (length == 0) return SegmentLayout();
  return SegmentLayout({Segment{0, 0, length}});
}

ParamVector::ParamVector(SegmentLayout layout)
    : layout_(std::move(layout)), values_(layout_.total(), 0.0) {}

ParamVector::ParamVector(SegmentLayout layout, const std::vector<double>& values)
    : ParamVector(std::move(layout), Buffer(values.begin(), values.end())) {}

ParamVector::ParamVector(SegmentLayout layout, Buffer values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.total()) {
    throw InternalError("parameter vector of length " + std::to_string(values_.size()) +
                        " does not match layout of length " + std::to_string(layout_.total()));
  }
}

std::span<const double> ParamVector::segment(std::size_t s) const {
  const auto& seg = layout_[s];
  return std::span<const double>(values_).subspan(seg.offset, seg.length);
}

std::span<double> ParamVector::segment(std::size_t s) {
  const auto& seg = layout_[s];
  return std::span<double>(values_).subspan(seg.offset, seg.length);
}

bool ParamVector::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double segment_dot(const ParamVector& a, const ParamVector& b, std::optional<std::size_t> segment) {
  if (!(a.layout() == b.layout())) {
    throw InternalError("segment_dot: vectors have different segment layouts");
  }
  std::span<const double> x = a.values();
  std::span<const double> y = b.values();
  if (segment) {
    if (*segment >= a.layout().count()) {
      throw InternalError("segment_dot: no segment " + std::to_string(*segment));
    }
    x = a.segment(*segment);
    y = b.segment(*segment);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += x[i] * y[i];
  return sum;
}

}  // namespace bilevel::nn
