// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode gradients of the cross-entropy loss with respect to the
// trainable tensors (attention projections of every block and the active
// task's classifier), chained by hand through the final LayerNorm, FFN,
// LayerNorm and residual paths of the traced forward pass.
//
// Per head, with c = dh^(-1/2), X the block's normalized input and dF the
// gradient reaching the head output:
//   dWq = c X^T dA K        dWk = c X^T dA^T Q        dWv = X^T S^T dF
// With a mask M the same products are formed from (dA ⊙ M) and (S ⊙ M);
// the gradient handed to earlier layers always comes from the unmasked terms.

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "arcl/attnmask.hpp"
#include "arcl/numkernel.hpp"
#include "arcl/vit.hpp"

namespace arcl {

enum class Projection { query, key, value };

const char* projection_name(Projection p) noexcept;
Matrix& projection_weight(ModelParams& params, std::size_t layer, Projection p);
const Matrix& projection_weight(const ModelParams& params, std::size_t layer, Projection p);

struct ProjectionGrads {
  Matrix w_q, w_k, w_v;  // D x D, head h in columns [h*dh, (h+1)*dh)

  Matrix& operator[](Projection p) noexcept;
  const Matrix& operator[](Projection p) const noexcept;
  bool operator==(const ProjectionGrads&) const = default;
};

struct GradientSet {
  int task_id = -1;
  std::vector<ProjectionGrads> layers;
  /// Present iff a mask was supplied to backward().
  std::optional<std::vector<ProjectionGrads>> masked;
  Matrix classifier_weight;  // D x classes_per_task
  Matrix classifier_bias;    // 1 x classes_per_task

  /// Zero gradients shaped for `params` and `task_id`.
  static GradientSet zeros(const ModelParams& params, int task_id, bool with_masked);
  /// Elementwise sum; both sets must have the same layout.
  void accumulate(const GradientSet& other);

  bool operator==(const GradientSet&) const = default;
};

double cross_entropy(std::span<const double> logits, int label);
/// d loss / d logits = softmax(logits) - onehot(label).
std::vector<double> cross_entropy_grad(std::span<const double> logits, int label);

/// Gradients for one traced sample. `logit_grad` is d loss / d logits for the
/// trace's task. With `mask`, the masked projection gradients are filled too.
GradientSet backward(const ForwardTrace& trace, std::span<const double> logit_grad,
                     const ModelParams& params, const AttentionMaskSet* mask = nullptr);

/// Cross-entropy loss of one sample under the classifier of `task_id`.
double sample_loss(const Matrix& image, int label, const ModelParams& params, int task_id);

/// Central differences (f(x+eps) - f(x-eps)) / 2eps for every entry of `at`.
Matrix central_difference(const std::function<double(const Matrix&)>& f, const Matrix& at,
                          double eps);

/// Numeric gradient of the cross-entropy loss with respect to one projection
/// matrix, evaluated through ReferenceModel<long double>.
Matrix finite_diff_oracle(const Matrix& image, int label, const ModelParams& params, int task_id,
                          std::size_t layer, Projection which, double eps);

}  // namespace arcl
