#include "bilevel/opt/weights.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "bilevel/error.hpp"

namespace bilevel::opt {
namespace {

constexpr std::size_t kExactSolveLimit = 64;

double squared_norm(const ParamVector& g, std::optional<std::size_t> segment) {
  return nn::segment_dot(g, g, segment);
}

WeightVector weights_on(const GradientSet& grads, const BilevelConfig& cfg,
                        std::optional<std::size_t> segment) {
  std::vector<double> raw;
  raw.reserve(grads.training.size());
  for (std::size_t i = 0; i < grads.training.size(); ++i) {
    const ParamVector& g = grads.training[i];
    const double denom = squared_norm(g, segment) / cfg.lambda_hat + cfg.mu_hat;
    if (denom == 0.0) {
      throw ConfigError("zero weight denominator for training batch " + std::to_string(i) +
                        " at step " + std::to_string(grads.step) +
                        ": mu_hat must be positive when gradients can vanish");
    }
    raw.push_back(nn::segment_dot(grads.validation, g, segment) / denom);
  }
  return normalize_weights(std::move(raw), cfg);
}

}  // namespace

void GradientSet::check() const {
  if (training.empty()) throw InternalError("gradient set has no training gradients");
  for (const auto& g : training) {
    if (!(g.layout() == validation.layout())) {
      throw InternalError("training and validation gradients have different segment layouts");
    }
  }
}

void BilevelConfig::check() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("epsilon must be positive, got " + std::to_string(epsilon));
  }
  if (!(lambda_hat > 0.0)) {
    throw ConfigError("lambda_hat must be positive, got " + std::to_string(lambda_hat));
  }
  if (!(mu_hat >= 0.0) || !std::isfinite(mu_hat)) {
    throw ConfigError("mu_hat must be non-negative, got " + std::to_string(mu_hat));
  }
  if (k < 2) throw ConfigError("k must be at least 2, got " + std::to_string(k));
  if (!(degeneracy_tolerance >= 0.0)) {
    throw ConfigError("degeneracy tolerance must be non-negative");
  }
}

WeightVector normalize_weights(std::vector<double> raw, const BilevelConfig& cfg) {
  WeightVector w;
  double l1 = 0.0;
  for (double r : raw) l1 += std::abs(r);
  if (!std::isfinite(l1)) throw NumericError("non-finite mini-batch weights");
  w.degenerate = l1 < cfg.degeneracy_tolerance || l1 == 0.0;
  if (w.degenerate) {
    w.normalized.assign(raw.size(), 0.0);
  } else if (cfg.use_l1) {
    w.normalized.reserve(raw.size());
    for (double r : raw) w.normalized.push_back(r / l1);
  } else {
    w.normalized = raw;
  }
  w.raw = std::move(raw);
  return w;
}

WeightVector compute_weights(const GradientSet& grads, const BilevelConfig& cfg) {
  grads.check();
  return weights_on(grads, cfg, std::nullopt);
}

std::vector<WeightVector> compute_weights_per_layer(const GradientSet& grads,
                                                    const BilevelConfig& cfg) {
  grads.check();
  std::vector<WeightVector> out;
  const std::size_t layers = grads.validation.layout().count();
  out.reserve(layers);
  for (std::size_t s = 0; s < layers; ++s) out.push_back(weights_on(grads, cfg, s));
  return out;
}

WeightVector exact_weight_solve(const GradientSet& grads, const BilevelConfig& cfg) {
  grads.check();
  const std::size_t n = grads.training.size();
  if (n > kExactSolveLimit) {
    throw ConfigError("exact weight solve supports at most " + std::to_string(kExactSolveLimit) +
                      " training gradients, got " + std::to_string(n));
  }
  Eigen::MatrixXd system(n, n);
  Eigen::VectorXd rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    rhs(i) = nn::segment_dot(grads.validation, grads.training[i]);
    for (std::size_t j = i; j < n; ++j) {
      const double kij = nn::segment_dot(grads.training[i], grads.training[j]) / cfg.lambda_hat;
      system(i, j) = kij;
      system(j, i) = kij;
    }
    system(i, i) += cfg.mu_hat;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) {
    throw NumericError("singular weight system at step " + std::to_string(grads.step) +
                       " (mu_hat = " + std::to_string(cfg.mu_hat) + ")");
  }
  Eigen::VectorXd solution = lu.solve(rhs);
  return normalize_weights(std::vector<double>(solution.data(), solution.data() + n), cfg);
}

ParamVector combine_gradients(const GradientSet& grads, const WeightVector& weights) {
  grads.check();
  if (weights.normalized.size() != grads.training.size()) {
    throw InternalError("have " + std::to_string(weights.normalized.size()) + " weights for " +
                        std::to_string(grads.training.size()) + " training gradients");
  }
  ParamVector out = grads.validation.zeros_like();
  if (weights.degenerate) return out;
  auto acc = out.values();
  for (std::size_t i = 0; i < grads.training.size(); ++i) {
    const double w = weights.normalized[i];
    auto g = grads.training[i].values();
    for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += w * g[p];
  }
  return out;
}

ParamVector combine_gradients(const GradientSet& grads, std::span<const WeightVector> per_layer) {
  grads.check();
  const auto& layout = grads.validation.layout();
  if (per_layer.size() != layout.count()) {
    throw InternalError("have weights for " + std::to_string(per_layer.size()) +
                        " layers, gradient has " + std::to_string(layout.count()) + " segments");
  }
  ParamVector out = grads.validation.zeros_like();
  for (std::size_t s = 0; s < layout.count(); ++s) {
    const WeightVector& w = per_layer[s];
    if (w.normalized.size() != grads.training.size()) {
      throw InternalError("layer " + std::to_string(s) + " has " +
                          std::to_string(w.normalized.size()) + " weights for " +
                          std::to_string(grads.training.size()) + " training gradients");
    }
    if (w.degenerate) continue;
    auto acc = out.segment(s);
    for (std::size_t i = 0; i < grads.training.size(); ++i) {
      auto g = grads.training[i].segment(s);
      for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += w.normalized[i] * g[p];
    }
  }
  return out;
}

}  // namespace bilevel::opt
