#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bilevel/data/minibatch.hpp"
#include "bilevel/nn/param_vector.hpp"
#include "bilevel/nn/tensor.hpp"

namespace bilevel::nn {

struct Dense {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
};
struct Relu {};
struct Dropout {};
struct Flatten {};
/// Stride 1, valid padding, square kernel.
struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
};
/// 2x2 window, stride 2; odd trailing rows/columns are dropped.
struct MaxPool2 {};

using Layer = std::variant<Dense, Relu, Dropout, Flatten, Conv2d, MaxPool2>;

std::string layer_name(const Layer& layer);

/// Dropout behaviour for one forward/backward pass. Masks are a pure
/// function of (mask_seed, layer position, element index), so two batches of
/// equal size evaluated with the same seed see the same mask.
struct DropoutSpec {
  double keep_probability = 1.0;
  std::uint64_t mask_seed = 0;
  bool shared_across_batches = true;

  static DropoutSpec disabled() { return {}; }
  bool active() const { return keep_probability < 1.0; }
};

/// Sequential classifier over a fixed per-example input shape.
class Network {
 public:
  Network() = default;
  /// Validates that layer shapes compose; parameters start at zero.
  Network(Shape input_shape, std::vector<Layer> layers);

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  void initialize(std::uint64_t seed);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.back(); }
  /// Per-example shape entering layer `l` (l == layers().size() gives output).
  const Shape& shape_before(std::size_t l) const { return shapes_[l]; }
  std::size_t class_count() const { return shape_size(output_shape()); }
  const std::vector<Layer>& layers() const { return layers_; }

  const ParamVector& params() const { return params_; }
  ParamVector& params() { return params_; }
  /// Throws InternalError when the layout does not match.
  void set_params(ParamVector params);

  /// Segment index of a trainable layer, or -1 for parameter-free layers.
  std::ptrdiff_t segment_of(std::size_t layer) const { return segment_of_[layer]; }

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
  std::vector<std::ptrdiff_t> segment_of_;
  ParamVector params_;
};

/// 784 -> hidden... -> classes MLP with one dropout layer after the last
/// hidden activation.
Network make_mlp(const Shape& input_shape, const std::vector<std::size_t>& hidden,
                 std::size_t classes);

/// conv(5x5) relu pool conv(5x5) relu pool flatten dense relu dropout dense.
Network make_desk_cnn(const Shape& input_shape, std::size_t classes,
                      std::size_t conv1 = 8, std::size_t conv2 = 16,
                      std::size_t hidden = 64);

/// Class scores, shape [batch, classes].
Tensor forward(const Network& net, const Tensor& inputs, const DropoutSpec& dropout);

/// Mean softmax cross-entropy over the batch.
double batch_loss(const Network& net, const Tensor& inputs, std::span<const int> labels,
                  const DropoutSpec& dropout);
double batch_loss(const Network& net, const data::MiniBatch& batch,
                  const DropoutSpec& dropout);

struct LossAndGradient {
  double loss = 0.0;
  ParamVector gradient;
};

/// Loss and its exact reverse-mode gradient with respect to params().
LossAndGradient loss_and_gradient(const Network& net, const Tensor& inputs,
                                  std::span<const int> labels, const DropoutSpec& dropout);

ParamVector batch_gradient(const Network& net, const data::MiniBatch& batch,
                           const DropoutSpec& dropout);

/// Argmax class per example with dropout disabled.
std::vector<int> predict(const Network& net, const Tensor& inputs);

}  // namespace bilevel::nn
