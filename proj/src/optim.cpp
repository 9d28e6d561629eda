// SPDX-License-Identifier: Apache-2.0
#include "arcl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "arcl/errors.hpp"

namespace arcl {

namespace {

void require_shapes(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw DimensionError(std::string(op) + ": shape mismatch");
}

}  // namespace

Matrix adam_delta(const Matrix& grad, AdamState& state, const AdamConfig& config) {
  if (state.m.empty() && state.v.empty()) state = AdamState(grad.rows(), grad.cols());
  require_shapes(grad, state.m, "adam_delta");
  state.step += 1;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  Matrix delta(grad.rows(), grad.cols());
  auto m = state.m.values();
  auto v = state.v.values();
  const auto g = grad.values();
  auto out = delta.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    out[i] = m_hat / (std::sqrt(v_hat) + config.eps);
  }
  require_finite(delta, "adam_delta");
  return delta;
}

Matrix update_ratio(const Matrix& grad, const Matrix& grad_masked, const RatioPolicy& policy) {
  require_shapes(grad, grad_masked, "update_ratio");
  if (!(policy.eps_ratio > 0.0)) throw UsageError("update_ratio: eps_ratio must be positive");
  Matrix ratio(grad.rows(), grad.cols());
  const auto g = grad.values();
  const auto gm = grad_masked.values();
  auto r = ratio.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (gm[i] == g[i]) {
      r[i] = 1.0;
    } else if (std::abs(g[i]) < policy.eps_ratio) {
      r[i] = 0.0;
    } else {
      r[i] = std::clamp(gm[i] / g[i], -policy.r_max, policy.r_max);
    }
  }
  require_finite(ratio, "update_ratio");
  return ratio;
}

MaskedStep scaled_masked_step(Matrix& w, const Matrix& grad, const Matrix& grad_masked,
                              AdamState& state, double lr, const AdamConfig& config,
                              const RatioPolicy& policy, bool masked_moments) {
  require_shapes(w, grad, "scaled_masked_step");
  MaskedStep step;
  step.ratio = update_ratio(grad, grad_masked, policy);
  step.delta = adam_delta(masked_moments ? grad_masked : grad, state, config);
  step.update = hadamard(step.ratio, step.delta);
  auto wv = w.values();
  const auto u = step.update.values();
  for (std::size_t i = 0; i < wv.size(); ++i) wv[i] -= lr * u[i];
  require_finite(w, "scaled_masked_step");
  return step;
}

void adam_step(Matrix& w, const Matrix& grad, AdamState& state, double lr, const AdamConfig& config) {
  require_shapes(w, grad, "adam_step");
  const Matrix delta = adam_delta(grad, state, config);
  auto wv = w.values();
  const auto d = delta.values();
  for (std::size_t i = 0; i < wv.size(); ++i) wv[i] -= lr * d[i];
  require_finite(w, "adam_step");
}

void sgd_masked_step(Matrix& w, const Matrix& grad_masked, double lr) {
  require_shapes(w, grad_masked, "sgd_masked_step");
  auto wv = w.values();
  const auto g = grad_masked.values();
  for (std::size_t i = 0; i < wv.size(); ++i) wv[i] -= lr * g[i];
  require_finite(w, "sgd_masked_step");
}

ModelOptimizer::ModelOptimizer(const ModelParams& params, OptimizerConfig config)
    : config_(config) {
  const auto d = static_cast<std::size_t>(params.config.embed_dim);
  projection_.assign(params.blocks.size(), std::vector<AdamState>(3, AdamState(d, d)));
}

const AdamState& ModelOptimizer::projection_state(std::size_t layer, Projection p) const {
  return projection_.at(layer).at(static_cast<std::size_t>(p));
}

void ModelOptimizer::step(ModelParams& params, const GradientSet& grads, const StepObserver* observer) {
  if (grads.layers.size() != params.blocks.size() || grads.task_id < 0 ||
      grads.task_id >= params.learned_tasks()) {
    throw UsageError("ModelOptimizer::step: gradients do not match the model");
  }
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    for (Projection p : {Projection::query, Projection::key, Projection::value}) {
      Matrix& w = projection_weight(params, l, p);
      AdamState& state = projection_[l][static_cast<std::size_t>(p)];
      const Matrix& g = grads.layers[l][p];
      if (!grads.masked) {
        adam_step(w, g, state, config_.lr_projection, config_.adam);
        continue;
      }
      const Matrix& gm = (*grads.masked)[l][p];
      if (observer != nullptr) {
        const Matrix before = w;
        const MaskedStep s = scaled_masked_step(w, g, gm, state, config_.lr_projection, config_.adam,
                                                config_.ratio, config_.masked_moments);
        (*observer)(StepRecord{l, p, g, gm, s, before, w, config_.lr_projection});
      } else {
        scaled_masked_step(w, g, gm, state, config_.lr_projection, config_.adam, config_.ratio,
                           config_.masked_moments);
      }
    }
  }

  const auto task = static_cast<std::size_t>(grads.task_id);
  while (classifiers_.size() <= task) {
    const Classifier& head = params.classifiers[classifiers_.size()];
    classifiers_.push_back({AdamState(head.weight.rows(), head.weight.cols()),
                            AdamState(head.bias.rows(), head.bias.cols())});
  }
  Classifier& head = params.classifiers[task];
  adam_step(head.weight, grads.classifier_weight, classifiers_[task].weight, config_.lr_classifier,
            config_.adam);
  adam_step(head.bias, grads.classifier_bias, classifiers_[task].bias, config_.lr_classifier,
            config_.adam);
  ++steps_;
}

}  // namespace arcl
