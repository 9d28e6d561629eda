// SPDX-License-Identifier: Apache-2.0
//
// Adam with update-ratio scaling for masked gradients.
//
// Adam proposes ΔW from the unmasked gradient. The applied update is the
// elementwise rescaling ΔW' = (∇'/∇) ⊙ ΔW, so the masked-to-unmasked ratio of
// the updates equals that of the gradients, and W <- W - γ ΔW'.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "arcl/grad.hpp"
#include "arcl/numkernel.hpp"
#include "arcl/vit.hpp"

namespace arcl {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Matrix m;
  Matrix v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(std::size_t rows, std::size_t cols) : m(rows, cols), v(rows, cols) {}
};

/// Ratio policy for ∇'/∇.
struct RatioPolicy {
  /// |∇| below this yields ratio 0.
  double eps_ratio = 1e-12;
  /// Ratios are clamped to [-r_max, r_max].
  double r_max = 10.0;
};

/// Advances the moments with `grad` and returns the bias-corrected direction
/// m̂ / (sqrt(v̂) + eps).
Matrix adam_delta(const Matrix& grad, AdamState& state, const AdamConfig& config);

/// Elementwise ∇'/∇ under `policy`. Entries where ∇' == ∇ exactly get ratio 1,
/// so an unmasked position is always updated exactly like plain Adam.
Matrix update_ratio(const Matrix& grad, const Matrix& grad_masked, const RatioPolicy& policy);

struct MaskedStep {
  Matrix ratio;   // clamped ∇'/∇
  Matrix delta;   // ΔW from Adam
  Matrix update;  // ΔW' = ratio ⊙ ΔW, applied as W -= γ ΔW'
};

/// W <- W - lr * ΔW'. Moments come from `grad` unless `masked_moments`.
MaskedStep scaled_masked_step(Matrix& w, const Matrix& grad, const Matrix& grad_masked,
                              AdamState& state, double lr, const AdamConfig& config,
                              const RatioPolicy& policy, bool masked_moments = false);

/// W <- W - lr * adam_delta(grad).
void adam_step(Matrix& w, const Matrix& grad, AdamState& state, double lr, const AdamConfig& config);

/// Plain gradient descent on the masked gradient, W <- W - lr * ∇'.
void sgd_masked_step(Matrix& w, const Matrix& grad_masked, double lr);

struct OptimizerConfig {
  double lr_projection = 1e-4;
  double lr_classifier = 1e-2;
  AdamConfig adam;
  RatioPolicy ratio;
  /// Ablation: feed Adam's moments with ∇' instead of ∇.
  bool masked_moments = false;
};

struct StepRecord {
  std::size_t layer;
  Projection projection;
  const Matrix& grad;
  const Matrix& grad_masked;
  const MaskedStep& step;
  const Matrix& before;
  const Matrix& after;
  double lr;
};

using StepObserver = std::function<void(const StepRecord&)>;

/// Adam state for every trainable tensor of a model: W_q/W_k/W_v of each block
/// (projection learning rate) and each task classifier (classifier learning
/// rate, always unmasked).
class ModelOptimizer {
 public:
  ModelOptimizer(const ModelParams& params, OptimizerConfig config);

  /// Applies one step. Projections use scaled_masked_step iff `grads.masked`
  /// is present, plain Adam otherwise. `observer` sees every masked
  /// projection step.
  void step(ModelParams& params, const GradientSet& grads, const StepObserver* observer = nullptr);

  const OptimizerConfig& config() const noexcept { return config_; }
  const AdamState& projection_state(std::size_t layer, Projection p) const;
  std::int64_t steps_taken() const noexcept { return steps_; }

 private:
  struct ClassifierState {
    AdamState weight, bias;
  };

  OptimizerConfig config_;
  std::vector<std::vector<AdamState>> projection_;  // [layer][q, k, v]
  std::vector<ClassifierState> classifiers_;
  std::int64_t steps_ = 0;
};

}  // namespace arcl
