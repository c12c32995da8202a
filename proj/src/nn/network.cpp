#include "bilevel/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "bilevel/error.hpp"

namespace bilevel::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t param_count(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense& d) { return d.outputs * d.inputs + d.outputs; },
                        [](const Conv2d& c) {
                          return c.out_channels * c.in_channels * c.kernel * c.kernel +
                                 c.out_channels;
                        },
                        [](const auto&) { return std::size_t{0}; },
                    },
                    layer);
}

std::size_t fan_in(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense& d) { return d.inputs; },
                        [](const Conv2d& c) { return c.in_channels * c.kernel * c.kernel; },
                        [](const auto&) { return std::size_t{0}; },
                    },
                    layer);
}

Shape output_shape_of(const Layer& layer, const Shape& in, std::size_t position) {
  auto fail = [&](const std::string& why) {
    return ConfigError("layer " + std::to_string(position) + " (" + layer_name(layer) +
                       "): " + why + ", input shape " + shape_string(in));
  };
  return std::visit(
      Overloaded{
          [&](const Dense& d) -> Shape {
            if (d.inputs == 0 || d.outputs == 0) throw fail("zero-sized dense layer");
            if (in.size() != 1 || in[0] != d.inputs) {
              throw fail("expects [" + std::to_string(d.inputs) + "]");
            }
            return {d.outputs};
          },
          [&](const Relu&) -> Shape { return in; },
          [&](const Dropout&) -> Shape { return in; },
          [&](const Flatten&) -> Shape { return {shape_size(in)}; },
          [&](const Conv2d& c) -> Shape {
            if (c.kernel == 0 || c.out_channels == 0) throw fail("zero-sized convolution");
            if (in.size() != 3 || in[0] != c.in_channels || in[1] < c.kernel ||
                in[2] < c.kernel) {
              throw fail("expects [" + std::to_string(c.in_channels) + ",H,W] with H,W >= " +
                         std::to_string(c.kernel));
            }
            return {c.out_channels, in[1] - c.kernel + 1, in[2] - c.kernel + 1};
          },
          [&](const MaxPool2&) -> Shape {
            if (in.size() != 3 || in[1] < 2 || in[2] < 2) throw fail("expects [C,H,W], H,W >= 2");
            return {in[0], in[1] / 2, in[2] / 2};
          },
      },
      layer);
}

// splitmix64 finalizer; counter-based so masks need no stored RNG state.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void dropout_mask(const DropoutSpec& spec, std::size_t layer, std::size_t count,
                  Buffer& mask) {
  mask.resize(count);
  const double scale = 1.0 / spec.keep_probability;
  const std::uint64_t base = mix(spec.mask_seed ^ mix(layer + 0x5bd1e995ULL));
  for (std::size_t i = 0; i < count; ++i) {
    const double u = static_cast<double>(mix(base + i) >> 11) * 0x1.0p-53;
    mask[i] = u < spec.keep_probability ? scale : 0.0;
  }
}

// Lowers one [C,H,W] example into a [C*k*k, Ho*Wo] patch matrix.
void im2col(const double* x, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t k, double* cols) {
  const std::size_t oh = height - k + 1;
  const std::size_t ow = width - k + 1;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx, ++row) {
        double* dst = cols + row * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const double* src = x + (c * height + y + ky) * width + kx;
          std::copy(src, src + ow, dst + y * ow);
        }
      }
    }
  }
}

void col2im_add(const double* cols, std::size_t channels, std::size_t height, std::size_t width,
                std::size_t k, double* dx) {
  const std::size_t oh = height - k + 1;
  const std::size_t ow = width - k + 1;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx, ++row) {
        const double* src = cols + row * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          double* dst = dx + (c * height + y + ky) * width + kx;
          for (std::size_t x = 0; x < ow; ++x) dst[x] += src[y * ow + x];
        }
      }
    }
  }
}

// Activations recorded during a forward pass for use by backward().
struct Trace {
  std::vector<Buffer> inputs;            // input to each layer
  std::vector<Buffer> masks;             // dropout masks
  std::vector<std::vector<std::uint32_t>> argmaxes;   // maxpool winners
  Buffer output;
};

class Engine {
 public:
  Engine(const Network& net, std::size_t batch) : net_(net), batch_(batch) {}

  void run(const Tensor& inputs, const DropoutSpec& dropout, Trace& trace, bool keep) const {
    const auto& layers = net_.layers();
    if (keep) trace.inputs.resize(layers.size());
    trace.masks.resize(layers.size());
    trace.argmaxes.resize(layers.size());
    Buffer current(inputs.values().begin(), inputs.values().end());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Buffer next = apply(l, current, dropout, trace);
      for (double v : next) {
        if (!std::isfinite(v)) {
          throw NumericError("non-finite activation after layer " + std::to_string(l) + " (" +
                             layer_name(layers[l]) + ")");
        }
      }
      if (keep) {
        trace.inputs[l] = std::move(current);
      }
      current = std::move(next);
    }
    trace.output = std::move(current);
  }

  // dout: gradient w.r.t. network output; fills grad (zero-initialized).
  void backward(const Trace& trace, Buffer dout, ParamVector& grad) const {
    const auto& layers = net_.layers();
    for (std::size_t l = layers.size(); l-- > 0;) {
      dout = back(l, trace, dout, grad, l > 0);
    }
  }

 private:
  std::span<const double> layer_params(std::size_t l) const {
    return net_.params().segment(static_cast<std::size_t>(net_.segment_of(l)));
  }

  Buffer apply(std::size_t l, const Buffer& x, const DropoutSpec& dropout, Trace& trace) const {
    const Shape& in = net_.shape_before(l);
    const Shape& out = net_.shape_before(l + 1);
    const std::size_t n_in = shape_size(in);
    const std::size_t n_out = shape_size(out);
    Buffer y(batch_ * n_out);
    const Layer& layer = net_.layers()[l];

    if (const auto* d = std::get_if<Dense>(&layer)) {
      auto p = layer_params(l);
      ConstMapMat X(x.data(), batch_, d->inputs);
      ConstMapMat W(p.data(), d->outputs, d->inputs);
      ConstMapVec b(p.data() + d->outputs * d->inputs, d->outputs);
      MapMat Y(y.data(), batch_, d->outputs);
      Y.noalias() = X * W.transpose();
      Y.rowwise() += b.transpose();
    } else if (std::holds_alternative<Relu>(layer)) {
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    } else if (std::holds_alternative<Dropout>(layer)) {
      if (!dropout.active()) {
        y = x;
      } else {
        Buffer& mask = trace.masks[l];
        dropout_mask(dropout, l, y.size(), mask);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * mask[i];
      }
    } else if (std::holds_alternative<Flatten>(layer)) {
      y = x;
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      auto p = layer_params(l);
      const std::size_t k = c->kernel;
      const std::size_t patch = c->in_channels * k * k;
      const std::size_t pixels = out[1] * out[2];
      ConstMapMat W(p.data(), c->out_channels, patch);
      ConstMapVec b(p.data() + c->out_channels * patch, c->out_channels);
      Buffer cols(patch * pixels);
      for (std::size_t n = 0; n < batch_; ++n) {
        im2col(x.data() + n * n_in, c->in_channels, in[1], in[2], k, cols.data());
        MapMat Y(y.data() + n * n_out, c->out_channels, pixels);
        Y.noalias() = W * ConstMapMat(cols.data(), patch, pixels);
        Y.colwise() += b;
      }
    } else if (std::holds_alternative<MaxPool2>(layer)) {
      std::vector<std::uint32_t>& arg = trace.argmaxes[l];
      arg.resize(y.size());
      const std::size_t channels = in[0], h = in[1], w = in[2];
      const std::size_t oh = out[1], ow = out[2];
      for (std::size_t n = 0; n < batch_; ++n) {
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const std::size_t plane = (n * channels + ch) * h * w;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
              std::size_t best = plane + (2 * oy) * w + 2 * ox;
              for (std::size_t dy = 0; dy < 2; ++dy) {
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const std::size_t at = plane + (2 * oy + dy) * w + 2 * ox + dx;
                  if (x[at] > x[best]) best = at;
                }
              }
              const std::size_t o = ((n * channels + ch) * oh + oy) * ow + ox;
              y[o] = x[best];
              arg[o] = static_cast<std::uint32_t>(best - n * n_in);
            }
          }
        }
      }
    }
    return y;
  }

  Buffer back(std::size_t l, const Trace& trace, const Buffer& dy,
               ParamVector& grad, bool need_input_grad) const {
    const Shape& in = net_.shape_before(l);
    const Shape& out = net_.shape_before(l + 1);
    const std::size_t n_in = shape_size(in);
    const std::size_t n_out = shape_size(out);
    const Buffer& x = trace.inputs[l];
    const Layer& layer = net_.layers()[l];
    Buffer dx;

    if (const auto* d = std::get_if<Dense>(&layer)) {
      auto p = layer_params(l);
      auto g = grad.segment(static_cast<std::size_t>(net_.segment_of(l)));
      ConstMapMat X(x.data(), batch_, d->inputs);
      ConstMapMat dY(dy.data(), batch_, d->outputs);
      MapMat dW(g.data(), d->outputs, d->inputs);
      MapVec db(g.data() + d->outputs * d->inputs, d->outputs);
      dW.noalias() += dY.transpose() * X;
      db += dY.colwise().sum().transpose();
      if (need_input_grad) {
        dx.resize(batch_ * n_in);
        ConstMapMat W(p.data(), d->outputs, d->inputs);
        MapMat dX(dx.data(), batch_, d->inputs);
        dX.noalias() = dY * W;
      }
    } else if (std::holds_alternative<Relu>(layer)) {
      dx.resize(dy.size());
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
    } else if (std::holds_alternative<Dropout>(layer)) {
      const Buffer& mask = trace.masks[l];
      if (mask.empty()) {
        dx = dy;
      } else {
        dx.resize(dy.size());
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
      }
    } else if (std::holds_alternative<Flatten>(layer)) {
      dx = dy;
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      auto p = layer_params(l);
      auto g = grad.segment(static_cast<std::size_t>(net_.segment_of(l)));
      const std::size_t k = c->kernel;
      const std::size_t patch = c->in_channels * k * k;
      const std::size_t pixels = out[1] * out[2];
      ConstMapMat W(p.data(), c->out_channels, patch);
      MapMat dW(g.data(), c->out_channels, patch);
      MapVec db(g.data() + c->out_channels * patch, c->out_channels);
      Buffer cols(patch * pixels);
      Buffer dcols(need_input_grad ? patch * pixels : 0);
      if (need_input_grad) dx.assign(batch_ * n_in, 0.0);
      for (std::size_t n = 0; n < batch_; ++n) {
        im2col(x.data() + n * n_in, c->in_channels, in[1], in[2], k, cols.data());
        ConstMapMat dY(dy.data() + n * n_out, c->out_channels, pixels);
        dW.noalias() += dY * ConstMapMat(cols.data(), patch, pixels).transpose();
        db += dY.rowwise().sum();
        if (need_input_grad) {
          MapMat(dcols.data(), patch, pixels).noalias() = W.transpose() * dY;
          col2im_add(dcols.data(), c->in_channels, in[1], in[2], k, dx.data() + n * n_in);
        }
      }
    } else if (std::holds_alternative<MaxPool2>(layer)) {
      const std::vector<std::uint32_t>& arg = trace.argmaxes[l];
      dx.assign(batch_ * n_in, 0.0);
      for (std::size_t n = 0; n < batch_; ++n) {
        for (std::size_t o = 0; o < n_out; ++o) {
          dx[n * n_in + arg[n * n_out + o]] += dy[n * n_out + o];
        }
      }
    }
    return dx;
  }

  const Network& net_;
  std::size_t batch_;
};

std::size_t check_inputs(const Network& net, const Tensor& inputs) {
  const Shape& shape = inputs.shape();
  const Shape& want = net.input_shape();
  if (shape.size() != want.size() + 1 || !std::equal(want.begin(), want.end(), shape.begin() + 1)) {
    throw ConfigError("input batch shape " + shape_string(shape) +
                      " does not match network input " + shape_string(want));
  }
  if (!inputs.all_finite()) throw NumericError("non-finite network input");
  return shape[0];
}

void check_labels(const Network& net, std::span<const int> labels, std::size_t batch) {
  if (labels.size() != batch) {
    throw DataError("batch has " + std::to_string(batch) + " inputs but " +
                    std::to_string(labels.size()) + " labels");
  }
  const auto classes = static_cast<int>(net.class_count());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at batch position " +
                      std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// Mean cross-entropy; writes d loss / d scores into dscores when non-null.
double softmax_cross_entropy(const Buffer& scores, std::span<const int> labels,
                             std::size_t classes, Buffer* dscores) {
  const std::size_t batch = labels.size();
  if (dscores) dscores->resize(scores.size());
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* s = scores.data() + n * classes;
    const double top = *std::max_element(s, s + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(s[c] - top);
    const double log_z = std::log(z);
    total += log_z - (s[labels[n]] - top);
    if (dscores) {
      double* d = dscores->data() + n * classes;
      for (std::size_t c = 0; c < classes; ++c) {
        d[c] = std::exp(s[c] - top - log_z) / static_cast<double>(batch);
      }
      d[labels[n]] -= 1.0 / static_cast<double>(batch);
    }
  }
  return batch ? total / static_cast<double>(batch) : 0.0;
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense& d) {
                          return "dense(" + std::to_string(d.inputs) + "->" +
                                 std::to_string(d.outputs) + ")";
                        },
                        [](const Relu&) { return std::string("relu"); },
                        [](const Dropout&) { return std::string("dropout"); },
                        [](const Flatten&) { return std::string("flatten"); },
                        [](const Conv2d& c) {
                          return "conv2d(" + std::to_string(c.in_channels) + "->" +
                                 std::to_string(c.out_channels) + ",k" +
                                 std::to_string(c.kernel) + ")";
                        },
                        [](const MaxPool2&) { return std::string("maxpool2"); },
                    },
                    layer);
}

Network::Network(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("network has no layers");
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw ConfigError("network input shape " + shape_string(input_shape_) + " is empty");
  }
  shapes_.push_back(input_shape_);
  std::vector<Segment> segments;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    shapes_.push_back(output_shape_of(layers_[l], shapes_.back(), l));
    const std::size_t count = param_count(layers_[l]);
    if (count) {
      segment_of_.push_back(static_cast<std::ptrdiff_t>(segments.size()));
      segments.push_back(Segment{l, offset, count});
      offset += count;
    } else {
      segment_of_.push_back(-1);
    }
  }
  if (segments.empty()) throw ConfigError("network has no trainable layers");
  if (output_shape().size() != 1) {
    throw ConfigError("network output shape " + shape_string(output_shape()) +
                      " is not a class-score vector");
  }
  params_ = ParamVector(SegmentLayout(std::move(segments)));
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < params_.layout().count(); ++s) {
    const Segment& seg = params_.layout()[s];
    const Layer& layer = layers_[seg.layer];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(layer)));
    const std::size_t biases = std::holds_alternative<Dense>(layer)
                                   ? std::get<Dense>(layer).outputs
                                   : std::get<Conv2d>(layer).out_channels;
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto values = params_.segment(s);
    for (std::size_t i = 0; i + biases < values.size(); ++i) values[i] = dist(rng);
    std::fill(values.end() - static_cast<std::ptrdiff_t>(biases), values.end(), 0.0);
  }
}

void Network::set_params(ParamVector params) {
  if (!(params.layout() == params_.layout())) {
    throw InternalError("parameter layout does not match the network");
  }
  params_ = std::move(params);
}

Network make_mlp(const Shape& input_shape, const std::vector<std::size_t>& hidden,
                 std::size_t classes) {
  std::vector<Layer> layers;
  std::size_t width = shape_size(input_shape);
  if (input_shape.size() != 1) layers.emplace_back(Flatten{});
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers.emplace_back(Dense{width, hidden[i]});
    layers.emplace_back(Relu{});
    if (i + 1 == hidden.size()) layers.emplace_back(Dropout{});
    width = hidden[i];
  }
  layers.emplace_back(Dense{width, classes});
  return Network(input_shape, std::move(layers));
}

Network make_desk_cnn(const Shape& input_shape, std::size_t classes, std::size_t conv1,
                      std::size_t conv2, std::size_t hidden) {
  Shape shape = input_shape;
  if (shape.size() == 2) shape.insert(shape.begin(), 1);
  if (shape.size() != 3) {
    throw ConfigError("desk CNN needs image inputs, got " + shape_string(input_shape));
  }
  // Probe the flattened width through the conv stack.
  Network probe(shape, {Conv2d{shape[0], conv1, 5}, Relu{}, MaxPool2{}, Conv2d{conv1, conv2, 5},
                        Relu{}, MaxPool2{}, Flatten{}});
  const std::size_t flat = shape_size(probe.output_shape());
  std::vector<Layer> layers{Conv2d{shape[0], conv1, 5},
                            Relu{},
                            MaxPool2{},
                            Conv2d{conv1, conv2, 5},
                            Relu{},
                            MaxPool2{},
                            Flatten{},
                            Dense{flat, hidden},
                            Relu{},
                            Dropout{},
                            Dense{hidden, classes}};
  return Network(shape, std::move(layers));
}

Tensor forward(const Network& net, const Tensor& inputs, const DropoutSpec& dropout) {
  const std::size_t batch = check_inputs(net, inputs);
  Trace trace;
  Engine(net, batch).run(inputs, dropout, trace, false);
  return Tensor({batch, net.class_count()}, std::move(trace.output));
}

double batch_loss(const Network& net, const Tensor& inputs, std::span<const int> labels,
                  const DropoutSpec& dropout) {
  const std::size_t batch = check_inputs(net, inputs);
  check_labels(net, labels, batch);
  Tensor scores = forward(net, inputs, dropout);
  Buffer s(scores.values().begin(), scores.values().end());
  return softmax_cross_entropy(s, labels, net.class_count(), nullptr);
}

double batch_loss(const Network& net, const data::MiniBatch& batch, const DropoutSpec& dropout) {
  return batch_loss(net, batch.inputs, batch.labels, dropout);
}

LossAndGradient loss_and_gradient(const Network& net, const Tensor& inputs,
                                  std::span<const int> labels, const DropoutSpec& dropout) {
  const std::size_t batch = check_inputs(net, inputs);
  check_labels(net, labels, batch);
  Engine engine(net, batch);
  Trace trace;
  engine.run(inputs, dropout, trace, true);
  Buffer dscores;
  LossAndGradient result;
  result.loss = softmax_cross_entropy(trace.output, labels, net.class_count(), &dscores);
  result.gradient = net.params().zeros_like();
  engine.backward(trace, std::move(dscores), result.gradient);
  return result;
}

ParamVector batch_gradient(const Network& net, const data::MiniBatch& batch,
                           const DropoutSpec& dropout) {
  return loss_and_gradient(net, batch.inputs, batch.labels, dropout).gradient;
}

std::vector<int> predict(const Network& net, const Tensor& inputs) {
  Tensor scores = forward(net, inputs, DropoutSpec::disabled());
  std::vector<int> out(scores.dim(0));
  for (std::size_t n = 0; n < out.size(); ++n) {
    auto row = scores.row(n);
    out[n] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace bilevel::nn
