// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eigennet/errors.hpp"
#include "eigennet/ops.hpp"
#include "eigennet/parameter.hpp"
#include "eigennet/tensor.hpp"

namespace eigennet {

inline constexpr double kDefaultOrthWeight = 2e-4;

enum class UpdateRule { kSgdMomentum, kAdaptiveDecoupled };

struct OptimConfig {
  UpdateRule rule = UpdateRule::kAdaptiveDecoupled;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // sgd-momentum only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  std::optional<double> clip_norm;  // max global gradient L2 norm

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw ConfigError("momentum must lie in [0, 1)");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
    if (clip_norm && !(*clip_norm > 0.0)) {
      throw ConfigError("clip norm must be > 0");
    }
  }
};

/// Moment buffers indexed like the parameter list they were created for.
struct OptimState {
  std::vector<std::vector<double>> first;   // momentum velocity or m_t
  std::vector<std::vector<double>> second;  // v_t (adaptive only)
  std::size_t steps = 0;
};

namespace detail {

inline void require_scalar(const Tensor& t, const char* what) {
  if (t.rank() != 0) {
    throw RankError(std::string(what) + " must be a scalar, got " +
                    to_string(t.shape()));
  }
}

inline Tensor weighted_sum(const Tensor& task, const Tensor& orth,
                           double weight) {
  require_scalar(task, "task loss");
  require_scalar(orth, "orthogonality term");
  if (!(weight >= 0.0)) {
    throw ConfigError("orthogonality weight must be >= 0, got " +
                      std::to_string(weight));
  }
  return add(task, scale(orth, weight));
}

}  // namespace detail

/// task_loss + weight * orth_sum, where orth_sum covers every layer.
inline Tensor global_loss(const Tensor& task_loss, const Tensor& orth_sum,
                          double weight) {
  return detail::weighted_sum(task_loss, orth_sum, weight);
}

/// One block's cls_loss + weight * orth.
inline Tensor local_loss(const Tensor& cls_loss, const Tensor& orth,
                         double weight) {
  return detail::weighted_sum(cls_loss, orth, weight);
}

/// Applies one in-place update to `params` from their grad buffers.
///
/// Decoupled decay scales a parameter by (1 - lr * weight_decay) before the
/// gradient step, for parameters flagged `decay`.
inline void step(std::span<Parameter> params, OptimState& state,
                 const OptimConfig& cfg) {
  cfg.validate();
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) {
      throw OptimizerError("parameter '" + p.name + "' has no gradient");
    }
  }
  if (state.first.empty()) {
    state.first.resize(params.size());
    state.second.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first[i].assign(params[i].tensor.size(), 0.0);
      if (cfg.rule == UpdateRule::kAdaptiveDecoupled) {
        state.second[i].assign(params[i].tensor.size(), 0.0);
      }
    }
  }
  if (state.first.size() != params.size()) {
    throw OptimizerError("optimizer state was built for " +
                         std::to_string(state.first.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first[i].size() != params[i].tensor.size()) {
      throw OptimizerError("optimizer state shape mismatch for '" +
                           params[i].name + "'");
    }
  }

  double grad_scale = 1.0;
  if (cfg.clip_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
      for (double g : p.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > *cfg.clip_norm) grad_scale = *cfg.clip_norm / norm;
  }

  state.steps += 1;
  const double lr = cfg.learning_rate;
  const double t = static_cast<double>(state.steps);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor tensor = params[i].tensor;
    auto value = tensor.mutable_data();
    const auto grad = tensor.grad();
    auto& m = state.first[i];
    if (params[i].decay && cfg.weight_decay > 0.0) {
      const double shrink = 1.0 - lr * cfg.weight_decay;
      for (double& v : value) v *= shrink;
    }
    if (cfg.rule == UpdateRule::kSgdMomentum) {
      for (std::size_t k = 0; k < value.size(); ++k) {
        m[k] = cfg.momentum * m[k] + grad_scale * grad[k];
        value[k] -= lr * m[k];
      }
    } else {
      auto& v = state.second[i];
      for (std::size_t k = 0; k < value.size(); ++k) {
        const double g = grad_scale * grad[k];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m[k] / bias1;
        const double v_hat = v[k] / bias2;
        value[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      }
    }
  }
}

}  // namespace eigennet
