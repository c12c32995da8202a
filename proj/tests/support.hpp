#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "bilevel/data/dataset.hpp"
#include "bilevel/nn/network.hpp"
#include "bilevel/nn/param_vector.hpp"
#include "bilevel/opt/weights.hpp"

namespace bilevel::test {

inline nn::ParamVector flat(std::vector<double> v) {
  const auto n = v.size();
  return nn::ParamVector(nn::SegmentLayout::single(n), std::move(v));
}

inline nn::ParamVector random_vector(const nn::SegmentLayout& layout, std::mt19937_64& rng,
                                     double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  nn::ParamVector v(layout);
  for (auto& x : v.values()) x = g(rng);
  return v;
}

/// k-1 training gradients plus a validation gradient in R^d.
inline opt::GradientSet random_gradients(std::size_t d, std::size_t training,
                                         std::mt19937_64& rng) {
  const auto layout = nn::SegmentLayout::single(d);
  opt::GradientSet set;
  set.validation = random_vector(layout, rng);
  for (std::size_t i = 0; i < training; ++i) set.training.push_back(random_vector(layout, rng));
  return set;
}

/// Deterministic labelled dataset of `count` examples with `features` inputs.
inline data::Dataset toy_dataset(std::size_t count, std::size_t features, std::size_t classes,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> values(count * features);
  for (auto& v : values) v = std::round(u(rng) * 255.0) / 255.0;
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % classes);
  data::Dataset ds;
  ds.inputs = nn::Tensor({count, features}, std::move(values));
  ds.labels = std::move(labels);
  ds.class_count = classes;
  return ds;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("bilevel-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace bilevel::test
