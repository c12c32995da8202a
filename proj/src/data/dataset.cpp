#include "bilevel/data/dataset.hpp"

#include <algorithm>
#include <string>

#include "bilevel/error.hpp"

namespace bilevel::data {

nn::Shape Dataset::example_shape() const {
  const nn::Shape& s = inputs.shape();
  return s.empty() ? nn::Shape{} : nn::Shape(s.begin() + 1, s.end());
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_count, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

void Dataset::check() const {
  if (inputs.rank() < 2 || inputs.dim(0) != labels.size()) {
    throw DataError("dataset has " + std::to_string(labels.size()) + " labels but inputs of shape " +
                    nn::shape_string(inputs.shape()));
  }
  if (class_count < 1) throw DataError("dataset has no classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw DataError("label " + std::to_string(labels[i]) + " of example " + std::to_string(i) +
                      " outside [0, " + std::to_string(class_count) + ")");
    }
  }
}

void Dataset::check_training() const {
  check();
  const auto counts = class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw DataError("class " + std::to_string(c) + " has no training examples");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices, Split to) const {
  Dataset out;
  out.class_count = class_count;
  out.split = to;
  nn::Shape shape = inputs.shape();
  shape[0] = indices.size();
  const std::size_t row = inputs.row_size();
  std::vector<double> values;
  values.reserve(indices.size() * row);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    auto r = inputs.row(i);
    values.insert(values.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
  }
  out.inputs = nn::Tensor(std::move(shape), std::move(values));
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  if (count == 0 || count >= size()) return *this;
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  return subset(idx, split);
}

MiniBatch Dataset::batch(std::span<const std::size_t> indices) const {
  Dataset sub = subset(indices, split);
  return MiniBatch{std::vector<std::size_t>(indices.begin(), indices.end()), std::move(sub.inputs),
                   std::move(sub.labels)};
}

}  // namespace bilevel::data
