// SPDX-License-Identifier: Apache-2.0
//
// A small pre-norm Vision Transformer. Only the attention projections and
// the per-task classifiers are trainable; every other tensor stands in for a
// frozen pre-trained backbone. The forward pass records every activation the
// analytic backward pass in grad.hpp consumes.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "arcl/numkernel.hpp"

namespace arcl {

struct ModelConfig {
  int image_side = 16;
  int patch_side = 4;
  int embed_dim = 32;
  int depth = 4;
  int heads = 2;
  int ffn_hidden = 64;
  int classes_per_task = 4;
  int tasks = 5;
  /// Std of the seeded Gaussian used for every weight (frozen and trainable).
  double init_std = 0.02;
  /// Added to LayerNorm variances.
  double norm_eps = 1e-6;

  int grid_side() const noexcept { return image_side / patch_side; }
  /// N, the number of image tokens.
  int tokens() const noexcept { return grid_side() * grid_side(); }
  /// N + 1, image tokens plus the class token.
  int sequence_length() const noexcept { return tokens() + 1; }
  int head_dim() const noexcept { return embed_dim / heads; }
  int patch_dim() const noexcept { return patch_side * patch_side; }

  /// Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LayerNormParams {
  Matrix scale;  // 1 x D
  Matrix shift;  // 1 x D

  bool operator==(const LayerNormParams&) const = default;
};

struct BlockParams {
  // Trainable.
  Matrix w_q, w_k, w_v;  // D x D; head h owns columns [h*dh, (h+1)*dh)
  // Frozen.
  LayerNormParams ln1, ln2;
  Matrix ffn_w1;  // D x ffn_hidden
  Matrix ffn_b1;  // 1 x ffn_hidden
  Matrix ffn_w2;  // ffn_hidden x D
  Matrix ffn_b2;  // 1 x D

  bool operator==(const BlockParams&) const = default;
};

struct Classifier {
  Matrix weight;  // D x classes_per_task
  Matrix bias;    // 1 x classes_per_task

  bool operator==(const Classifier&) const = default;
};

struct ModelParams {
  ModelConfig config;
  Matrix patch_embed;  // patch_dim x D
  Matrix cls_token;    // 1 x D
  Matrix pos_embed;    // (N+1) x D
  std::vector<BlockParams> blocks;
  LayerNormParams final_norm;
  /// One head per task that has begun training, in task order.
  std::vector<Classifier> classifiers;

  /// Seeded initialization of the backbone; no classifiers yet.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  /// Appends the classifier for the next task.
  void add_classifier(std::uint64_t seed);
  int learned_tasks() const noexcept { return static_cast<int>(classifiers.size()); }
  int learned_classes() const noexcept { return learned_tasks() * config.classes_per_task; }

  bool operator==(const ModelParams&) const = default;
};

/// True iff every frozen tensor of `a` equals the one in `b`.
bool frozen_equal(const ModelParams& a, const ModelParams& b);

struct HeadTrace {
  Matrix q, k, v;  // (N+1) x dh
  Matrix a;        // scaled scores, (N+1) x (N+1)
  Matrix s;        // softmax(a)
};

struct NormCache {
  Matrix normalized;         // (x - mean) * rstd, before scale/shift
  std::vector<double> rstd;  // per row
};

struct LayerTrace {
  Matrix input;  // residual stream entering the block
  NormCache ln1;
  Matrix x;  // LayerNorm output fed to the projections
  std::vector<HeadTrace> heads;
  Matrix f;  // concatenated head outputs, (N+1) x D
  Matrix mid;  // input + f
  NormCache ln2;
  Matrix x2;
  Matrix hidden_pre;  // x2 * W1 + b1
  Matrix hidden;      // gelu(hidden_pre)
  Matrix output;      // mid + hidden * W2 + b2
};

struct ForwardTrace {
  /// Task whose classifier produced `logits`; -1 for a backbone-only trace.
  int task_id = -1;
  std::vector<LayerTrace> layers;
  NormCache final_norm;
  Matrix cls_out;  // 1 x D, class token after the final LayerNorm
  std::vector<double> logits;
};

/// Splits the image into patches, projects them, prepends the class token
/// and adds positional embeddings.
Matrix patch_embed(const Matrix& image, const ModelParams& params);

/// Backbone only; the trace carries no logits.
ForwardTrace forward_backbone(const Matrix& image, const ModelParams& params);
/// Backbone plus the classifier of `task_id`.
ForwardTrace forward(const Matrix& image, const ModelParams& params, int task_id);

std::vector<double> classifier_logits(const Matrix& cls_out, const Classifier& head);

/// Logits of every learned classifier concatenated in task order.
std::vector<double> concatenated_logits(const Matrix& image, const ModelParams& params);
/// Argmax with ties broken by the lowest index.
int argmax_lowest(std::span<const double> logits);
/// Class id over all learned classes, no task identity needed.
int predict_all(const Matrix& image, const ModelParams& params);

double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

}  // namespace arcl
