#include "bilevel/data/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "bilevel/error.hpp"

namespace bilevel::data {
namespace {

struct Point {
  double x;
  double y;
};
using Stroke = std::vector<Point>;
using Glyph = std::vector<Stroke>;

Stroke ellipse(double cx, double cy, double rx, double ry, int segments = 12) {
  Stroke s;
  for (int i = 0; i <= segments; ++i) {
    const double t = 2.0 * std::numbers::pi * i / segments;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

// Unit-square outlines, y pointing down.
const std::array<Glyph, 10>& glyphs() {
  static const std::array<Glyph, 10> table = {
      Glyph{ellipse(0.5, 0.5, 0.25, 0.38)},
      Glyph{{{0.35, 0.25}, {0.52, 0.1}, {0.52, 0.9}}},
      Glyph{{{0.25, 0.3}, {0.38, 0.13}, {0.62, 0.12}, {0.75, 0.3}, {0.25, 0.88}, {0.78, 0.88}}},
      Glyph{{{0.25, 0.15}, {0.72, 0.15}, {0.45, 0.47}, {0.72, 0.62}, {0.66, 0.85}, {0.25, 0.88}}},
      Glyph{{{0.65, 0.9}, {0.65, 0.1}, {0.2, 0.65}, {0.82, 0.65}}},
      Glyph{{{0.75, 0.12}, {0.3, 0.12}, {0.28, 0.45}, {0.65, 0.45}, {0.76, 0.68}, {0.62, 0.88},
             {0.25, 0.88}}},
      Glyph{{{0.7, 0.12}, {0.36, 0.35}, {0.27, 0.7}, {0.45, 0.9}, {0.7, 0.78}, {0.68, 0.55},
             {0.3, 0.55}}},
      Glyph{{{0.22, 0.12}, {0.78, 0.12}, {0.42, 0.9}}},
      Glyph{ellipse(0.5, 0.29, 0.17, 0.16), ellipse(0.5, 0.68, 0.21, 0.21)},
      Glyph{ellipse(0.48, 0.32, 0.2, 0.18), {{0.68, 0.34}, {0.6, 0.9}}},
  };
  return table;
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

Dataset make_glyph_digits(std::size_t count, std::uint64_t seed, std::size_t side) {
  if (side < 8) throw ConfigError("glyph images need at least 8x8 pixels");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % 10);
  std::shuffle(labels.begin(), labels.end(), rng);

  const double s = static_cast<double>(side);
  std::vector<double> values(count * side * side);
  for (std::size_t n = 0; n < count; ++n) {
    const double angle = uniform(-0.2, 0.2);
    const double scale_x = s * uniform(0.6, 0.85);
    const double scale_y = s * uniform(0.6, 0.85);
    const double shear = uniform(-0.2, 0.2);
    const double shift_x = uniform(-0.1, 0.1) * s;
    const double shift_y = uniform(-0.1, 0.1) * s;
    const double width = uniform(0.9, 2.0);
    const double wobble = uniform(0.01, 0.04);
    const double ca = std::cos(angle), sa = std::sin(angle);
    auto place = [&](Point p) {
      const double x = (p.x - 0.5 + shear * (p.y - 0.5)) * scale_x;
      const double y = (p.y - 0.5) * scale_y;
      return Point{s / 2 + shift_x + ca * x - sa * y, s / 2 + shift_y + sa * x + ca * y};
    };

    std::vector<std::pair<Point, Point>> segments;
    for (const Stroke& stroke : glyphs()[labels[n]]) {
      Point prev{};
      for (std::size_t v = 0; v < stroke.size(); ++v) {
        Point p = place({stroke[v].x + wobble * gauss(rng), stroke[v].y + wobble * gauss(rng)});
        if (v) segments.emplace_back(prev, p);
        prev = p;
      }
    }
    // Occasional clutter stroke unrelated to the class.
    const bool clutter = unit(rng) < 0.1;
    std::pair<Point, Point> extra{{uniform(0, s), uniform(0, s)}, {uniform(0, s), uniform(0, s)}};

    const double contrast = uniform(0.6, 1.0);
    const double noise = uniform(0.0, 0.08);
    double* img = values.data() + n * side * side;
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const Point p{c + 0.5, r + 0.5};
        double d = 1e9;
        for (const auto& [a, b] : segments) d = std::min(d, segment_distance(p, a, b));
        double v = contrast * std::clamp(1.0 - (d - width / 2), 0.0, 1.0);
        if (clutter) {
          const double dc = segment_distance(p, extra.first, extra.second);
          v = std::max(v, 0.7 * std::clamp(1.0 - (dc - 0.5), 0.0, 1.0));
        }
        img[r * side + c] = quantize(v + noise * gauss(rng));
      }
    }
  }
  Dataset ds;
  ds.inputs = nn::Tensor({count, side, side}, std::move(values));
  ds.labels = std::move(labels);
  ds.class_count = 10;
  return ds;
}

Dataset make_two_moons(std::size_t count, std::uint64_t seed, double noise) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, noise);
  std::vector<double> values(count * 2);
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = angle(rng);
    double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
    x += gauss(rng);
    y += gauss(rng);
    // Fixed box [-1.5, 2.5] x [-1.25, 1.75] mapped onto [0, 1].
    values[2 * i] = quantize((x + 1.5) / 4.0);
    values[2 * i + 1] = quantize((y + 1.25) / 3.0);
    labels[i] = label;
  }
  Dataset ds;
  ds.inputs = nn::Tensor({count, 2}, std::move(values));
  ds.labels = std::move(labels);
  ds.class_count = 2;
  return ds;
}

}  // namespace bilevel::data
