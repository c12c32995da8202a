#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bilevel/nn/param_vector.hpp"

namespace bilevel::opt {

using nn::ParamVector;

/// Gradients of the k mini-batches compared at one step: one validation
/// gradient and k-1 training gradients, all on the same segment layout.
struct GradientSet {
  ParamVector validation;
  std::vector<ParamVector> training;
  std::size_t step = 0;

  /// Throws InternalError on empty training set or mismatched layouts.
  void check() const;
};

struct WeightVector {
  std::vector<double> raw;
  std::vector<double> normalized;
  bool degenerate = false;

  std::size_t size() const { return raw.size(); }
};

struct BilevelConfig {
  double epsilon = 0.01;
  double lambda_hat = 1.0;  // may be +infinity
  double mu_hat = 0.01;
  std::size_t k = 8;
  bool use_l1 = true;
  bool per_layer_weights = false;
  bool exact_solve = false;
  double degeneracy_tolerance = 1e-12;

  /// Throws ConfigError for out-of-range values.
  void check() const;
};

/// Applies the L1 normalization (or passes raw through when use_l1 is off)
/// and flags the degenerate case sum|raw| < tolerance, where normalized is
/// all zero.
WeightVector normalize_weights(std::vector<double> raw, const BilevelConfig& cfg);

/// Diagonal-approximation weights:
///   raw_i = (g_v . g_i) / (|g_i|^2 / lambda_hat + mu_hat)
/// followed by normalize_weights(). Throws ConfigError when a denominator is
/// zero (mu_hat == 0 with a vanishing training gradient).
WeightVector compute_weights(const GradientSet& grads, const BilevelConfig& cfg);

/// compute_weights() evaluated separately on every layer segment, with
/// normalization inside each layer. One WeightVector per segment.
std::vector<WeightVector> compute_weights_per_layer(const GradientSet& grads,
                                                    const BilevelConfig& cfg);

/// Solves the full stationarity system (K / lambda_hat + mu_hat I) w = c with
/// K_ik = g_i . g_k and c_i = g_v . g_i by a dense factorization, then
/// normalizes like compute_weights(). Intended as a verification oracle for
/// up to 64 training gradients. Throws NumericError on a singular system.
WeightVector exact_weight_solve(const GradientSet& grads, const BilevelConfig& cfg);

/// sum_i normalized_i * g_i, accumulated in training-batch order. Zero when
/// the weights are degenerate.
ParamVector combine_gradients(const GradientSet& grads, const WeightVector& weights);

/// Per-layer variant: segment s of the result is sum_i w[s].normalized_i * g_i[s].
ParamVector combine_gradients(const GradientSet& grads, std::span<const WeightVector> per_layer);

}  // namespace bilevel::opt
