// SPDX-License-Identifier: Apache-2.0
#include "arcl/attnmask.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "arcl/errors.hpp"
#include "arcl/parallel.hpp"

namespace arcl {

AttentionMaskSet AttentionMaskSet::filled(const ModelConfig& config, double value) {
  const auto n1 = static_cast<std::size_t>(config.sequence_length());
  Matrix slice(n1, n1, value);
  for (std::size_t r = 0; r < n1; ++r) slice(r, 0) = 0.0;
  AttentionMaskSet set;
  set.layers.assign(static_cast<std::size_t>(config.depth),
                    Tensor3(std::vector<Matrix>(static_cast<std::size_t>(config.heads), slice)));
  return set;
}

void AttentionMaskSet::require_shape(const ModelConfig& config) const {
  const auto n1 = static_cast<std::size_t>(config.sequence_length());
  if (layers.size() != static_cast<std::size_t>(config.depth)) {
    throw DimensionError("mask set has " + std::to_string(layers.size()) + " layers, model has " +
                         std::to_string(config.depth));
  }
  for (const Tensor3& layer : layers) {
    if (layer.depth() != static_cast<std::size_t>(config.heads) || layer.rows() != n1 ||
        layer.cols() != n1) {
      throw DimensionError("mask set slice shape does not match (N+1)x(N+1) per head");
    }
  }
}

std::vector<Matrix> layerwise_rollout_all(std::span<const Matrix> attention_stack) {
  std::vector<Matrix> prefixes;
  prefixes.reserve(attention_stack.size());
  for (const Matrix& s : attention_stack) {
    if (s.rows() != s.cols()) throw DimensionError("layerwise_rollout: attention must be square");
    Matrix factor = add(Matrix::identity(s.rows()), s);
    if (prefixes.empty()) {
      prefixes.push_back(std::move(factor));
    } else {
      prefixes.push_back(matmul(prefixes.back(), factor));
    }
  }
  return prefixes;
}

Matrix layerwise_rollout(std::span<const Matrix> attention_stack, int layers) {
  if (layers < 1 || static_cast<std::size_t>(layers) > attention_stack.size()) {
    throw UsageError("layerwise_rollout: layer " + std::to_string(layers) + " outside 1.." +
                     std::to_string(attention_stack.size()));
  }
  return std::move(layerwise_rollout_all(attention_stack.first(static_cast<std::size_t>(layers))).back());
}

ClassAttentionMap extract_class_attention(const Matrix& rollout) {
  if (rollout.rows() != rollout.cols() || rollout.rows() < 2) {
    throw DimensionError("extract_class_attention: expected (N+1)x(N+1)");
  }
  const std::size_t n = rollout.cols() - 1;
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) {
    throw ConfigError("tokens", "N = " + std::to_string(n) + " is not a perfect square");
  }
  Matrix grid(side, side);
  for (std::size_t i = 0; i < n; ++i) grid(i / side, i % side) = rollout(0, i + 1);
  return {std::move(grid)};
}

Threshold adaptive_threshold(std::span<const double> values) {
  if (values.size() < 3) {
    throw UsageError("adaptive_threshold: need at least 3 values, got " + std::to_string(values.size()));
  }
  std::vector<double> u(values.begin(), values.end());
  std::sort(u.begin(), u.end());
  std::size_t best = 1;
  double best_curvature = u[2] - 2.0 * u[1] + u[0];
  for (std::size_t i = 2; i + 1 < u.size(); ++i) {
    const double curvature = u[i + 1] - 2.0 * u[i] + u[i - 1];
    if (curvature < best_curvature) {
      best_curvature = curvature;
      best = i;
    }
  }
  return {u[best], static_cast<int>(best) + 1};
}

Matrix binarize(const Matrix& u, double tau) {
  if (!std::isfinite(tau)) throw UsageError("binarize: threshold must be finite");
  Matrix m(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.size(); ++i) m.values()[i] = u.values()[i] >= tau ? 0.0 : 1.0;
  return m;
}

Matrix extend_mask(const Matrix& m) {
  const std::size_t n1 = m.size() + 1;
  Matrix out(n1, n1);
  for (std::size_t r = 0; r < n1; ++r) {
    auto row = out.row(r);
    row[0] = 0.0;
    std::copy(m.values().begin(), m.values().end(), row.begin() + 1);
  }
  return out;
}

std::vector<Matrix> head_attention_stack(const ForwardTrace& trace, std::size_t head) {
  std::vector<Matrix> stack;
  stack.reserve(trace.layers.size());
  for (const LayerTrace& layer : trace.layers) stack.push_back(layer.heads.at(head).s);
  return stack;
}

SampleMasks sample_masks(const ForwardTrace& trace) {
  if (trace.layers.empty()) throw UsageError("sample_masks: empty trace");
  const std::size_t heads = trace.layers.front().heads.size();
  SampleMasks masks(trace.layers.size(), Tensor3());
  std::vector<std::vector<Matrix>> slices(trace.layers.size());
  for (std::size_t h = 0; h < heads; ++h) {
    const auto rollouts = layerwise_rollout_all(head_attention_stack(trace, h));
    for (std::size_t l = 0; l < rollouts.size(); ++l) {
      const ClassAttentionMap u = extract_class_attention(rollouts[l]);
      const Threshold t = adaptive_threshold(u);
      slices[l].push_back(extend_mask(binarize(u.grid, t.tau)));
    }
  }
  for (std::size_t l = 0; l < slices.size(); ++l) masks[l] = Tensor3(std::move(slices[l]));
  return masks;
}

AttentionMaskSet accumulate_masks(AttentionMaskSet running, const SampleMasks& sample, int task_id) {
  if (running.empty()) {
    running.layers.reserve(sample.size());
    for (const Tensor3& layer : sample) {
      running.layers.emplace_back(layer.depth(), layer.rows(), layer.cols());
    }
  }
  if (running.layers.size() != sample.size()) {
    throw DimensionError("accumulate_masks: layer count mismatch");
  }
  const auto count = static_cast<double>(running.sample_count + 1);
  for (std::size_t l = 0; l < sample.size(); ++l) {
    Tensor3& mean = running.layers[l];
    const Tensor3& x = sample[l];
    if (mean.depth() != x.depth() || mean.rows() != x.rows() || mean.cols() != x.cols()) {
      throw DimensionError("accumulate_masks: slice shape mismatch at layer " + std::to_string(l));
    }
    for (std::size_t h = 0; h < x.depth(); ++h) {
      auto m = mean[h].values();
      const auto v = x[h].values();
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += (v[i] - m[i]) / count;
    }
  }
  running.sample_count += 1;
  if (running.first_task < 0 || task_id < running.first_task) running.first_task = task_id;
  running.last_task = std::max(running.last_task, task_id);
  return running;
}

AttentionMaskSet build_task_masks(const ModelParams& params, std::span<const Matrix> images,
                                  int task_id, AttentionMaskSet running, int threads) {
  std::vector<SampleMasks> per_sample(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    per_sample[i] = sample_masks(forward_backbone(images[i], params));
  });
  for (const SampleMasks& masks : per_sample) {
    running = accumulate_masks(std::move(running), masks, task_id);
  }
  return running;
}

Matrix mean_class_attention(const ForwardTrace& trace, int layers) {
  if (trace.layers.empty()) throw UsageError("mean_class_attention: empty trace");
  const std::size_t heads = trace.layers.front().heads.size();
  Matrix mean;
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix rollout = layerwise_rollout(head_attention_stack(trace, h), layers);
    Matrix u = extract_class_attention(rollout).grid;
    if (mean.empty()) {
      mean = std::move(u);
    } else {
      add_inplace(mean, u);
    }
  }
  return scale(mean, 1.0 / static_cast<double>(heads));
}

double attention_drift(const ModelParams& current, const ModelParams& reference,
                       std::span<const Matrix> images, int threads) {
  if (!(current.config == reference.config)) {
    throw UsageError("attention_drift: models do not share a config");
  }
  if (images.empty()) throw UsageError("attention_drift: empty probe set");
  const int depth = current.config.depth;
  std::vector<double> drift(images.size(), -1.0);
  parallel_for(images.size(), threads, [&](std::size_t i) {
    const Matrix u_ref = mean_class_attention(forward_backbone(images[i], reference), depth);
    const double ref_norm = frobenius_norm(u_ref);
    if (ref_norm == 0.0) return;
    const Matrix u_cur = mean_class_attention(forward_backbone(images[i], current), depth);
    drift[i] = frobenius_norm(subtract(u_cur, u_ref)) / ref_norm;
  });
  double total = 0.0;
  std::size_t used = 0;
  for (double d : drift) {
    if (d < 0.0) continue;
    total += d;
    ++used;
  }
  if (used == 0) throw NumericalError("attention_drift: every reference map has zero norm");
  return 100.0 * total / static_cast<double>(used);
}

}  // namespace arcl
