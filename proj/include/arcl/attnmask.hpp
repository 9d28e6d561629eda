// SPDX-License-Identifier: Apache-2.0
//
// Attention-map extraction and gradient-mask construction.
//
// For one sample and one head, the pipeline is
//   per-layer softmax attention S^1..S^L
//     -> layer-wise rollout  R^l = (I + S^1)(I + S^2)...(I + S^l)
//     -> class attention     U^l = R^l[0, 1..N] reshaped to sqrt(N) x sqrt(N)
//     -> adaptive threshold  tau = u_(k*), k* = argmin second difference of sorted U
//     -> binary mask         M_i = 0 where U_i >= tau, else 1
//     -> extended mask       every row equals [0, flatten(M)]
// and the extended masks of every sample of every finished task are folded
// into one running mean, which is what the backward pass multiplies in.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "arcl/numkernel.hpp"
#include "arcl/vit.hpp"

namespace arcl {

/// Per layer, per head continuous masks in [0, 1] of shape (N+1) x (N+1).
/// Column 0 is always zero and all rows of a slice are equal.
struct AttentionMaskSet {
  std::vector<Tensor3> layers;  // layers[l][h]
  int first_task = -1;          // provenance: tasks folded into the mean
  int last_task = -1;
  std::size_t sample_count = 0;

  static AttentionMaskSet filled(const ModelConfig& config, double value);

  bool empty() const noexcept { return layers.empty(); }
  const Matrix& at(std::size_t layer, std::size_t head) const { return layers.at(layer)[head]; }
  /// Throws DimensionError unless shaped for `config`.
  void require_shape(const ModelConfig& config) const;

  bool operator==(const AttentionMaskSet&) const = default;
};

/// Binary extended masks of one sample, indexed [layer][head].
using SampleMasks = std::vector<Tensor3>;

/// Attention mass the class token puts on each image token, on the patch grid.
struct ClassAttentionMap {
  Matrix grid;  // sqrt(N) x sqrt(N), entries >= 0
};

struct Threshold {
  double tau = 0.0;
  /// 1-based index into the ascending-sorted values.
  int k_star = 0;
};

/// Product (I + S^1)(I + S^2)...(I + S^layers) in layer order; 1 <= layers <= stack.size().
Matrix layerwise_rollout(std::span<const Matrix> attention_stack, int layers);
/// All prefixes of the rollout product, element l holding the product up to layer l+1.
std::vector<Matrix> layerwise_rollout_all(std::span<const Matrix> attention_stack);

ClassAttentionMap extract_class_attention(const Matrix& rollout);

Threshold adaptive_threshold(std::span<const double> values);
inline Threshold adaptive_threshold(const ClassAttentionMap& map) {
  return adaptive_threshold(map.grid.values());
}

/// 0 where u >= tau (attention region), 1 elsewhere.
Matrix binarize(const Matrix& u, double tau);

/// Flattens M, prepends a 0 for the class token, broadcasts to N+1 rows.
Matrix extend_mask(const Matrix& m);

/// The per-head softmax attention of every layer, for one head.
std::vector<Matrix> head_attention_stack(const ForwardTrace& trace, std::size_t head);

/// Runs the single-sample pipeline on every layer and head of a trace.
SampleMasks sample_masks(const ForwardTrace& trace);

/// Folds one sample into the running mean: mean += (x - mean) / (n + 1).
AttentionMaskSet accumulate_masks(AttentionMaskSet running, const SampleMasks& sample, int task_id);

/// Forward every image through `params`, build its masks and fold them into
/// `running` (which may be empty). Evaluation only; no parameter changes.
AttentionMaskSet build_task_masks(const ModelParams& params, std::span<const Matrix> images,
                                  int task_id, AttentionMaskSet running, int threads = 1);

/// Final-layer rollout class attention, computed per head then averaged over heads.
Matrix mean_class_attention(const ForwardTrace& trace, int layers);

/// Mean over samples of ||U_current - U_reference||_F / ||U_reference||_F, in percent.
/// Samples with a zero reference map are skipped; all skipped throws NumericalError.
double attention_drift(const ModelParams& current, const ModelParams& reference,
                       std::span<const Matrix> images, int threads = 1);

}  // namespace arcl
