// SPDX-License-Identifier: Apache-2.0
#include "arcl/grad.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "arcl/errors.hpp"
#include "arcl/reference_vit.hpp"

namespace arcl {

const char* projection_name(Projection p) noexcept {
  switch (p) {
    case Projection::query: return "W_q";
    case Projection::key: return "W_k";
    case Projection::value: return "W_v";
  }
  return "?";
}

Matrix& projection_weight(ModelParams& params, std::size_t layer, Projection p) {
  BlockParams& b = params.blocks.at(layer);
  return p == Projection::query ? b.w_q : p == Projection::key ? b.w_k : b.w_v;
}

const Matrix& projection_weight(const ModelParams& params, std::size_t layer, Projection p) {
  const BlockParams& b = params.blocks.at(layer);
  return p == Projection::query ? b.w_q : p == Projection::key ? b.w_k : b.w_v;
}

Matrix& ProjectionGrads::operator[](Projection p) noexcept {
  return p == Projection::query ? w_q : p == Projection::key ? w_k : w_v;
}

const Matrix& ProjectionGrads::operator[](Projection p) const noexcept {
  return p == Projection::query ? w_q : p == Projection::key ? w_k : w_v;
}

GradientSet GradientSet::zeros(const ModelParams& params, int task_id, bool with_masked) {
  const auto d = static_cast<std::size_t>(params.config.embed_dim);
  const auto c = static_cast<std::size_t>(params.config.classes_per_task);
  GradientSet g;
  g.task_id = task_id;
  g.layers.assign(params.blocks.size(), ProjectionGrads{Matrix(d, d), Matrix(d, d), Matrix(d, d)});
  if (with_masked) g.masked = g.layers;
  g.classifier_weight = Matrix(d, c);
  g.classifier_bias = Matrix(1, c);
  return g;
}

void GradientSet::accumulate(const GradientSet& other) {
  if (other.task_id != task_id || other.layers.size() != layers.size() ||
      other.masked.has_value() != masked.has_value()) {
    throw UsageError("GradientSet::accumulate: incompatible gradient sets");
  }
  auto sum_layers = [](std::vector<ProjectionGrads>& into, const std::vector<ProjectionGrads>& from) {
    for (std::size_t l = 0; l < into.size(); ++l) {
      add_inplace(into[l].w_q, from[l].w_q);
      add_inplace(into[l].w_k, from[l].w_k);
      add_inplace(into[l].w_v, from[l].w_v);
    }
  };
  sum_layers(layers, other.layers);
  if (masked) sum_layers(*masked, *other.masked);
  add_inplace(classifier_weight, other.classifier_weight);
  add_inplace(classifier_bias, other.classifier_bias);
}

double cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw UsageError("cross_entropy: label " + std::to_string(label) + " out of range");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  const double loss = std::log(total) + peak - logits[static_cast<std::size_t>(label)];
  if (!std::isfinite(loss)) throw NumericalError("cross_entropy: produced a non-finite value");
  return loss;
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw UsageError("cross_entropy_grad: label " + std::to_string(label) + " out of range");
  }
  const Matrix probs = softmax_rows(Matrix::row_vector(logits));
  std::vector<double> grad(probs.values().begin(), probs.values().end());
  grad[static_cast<std::size_t>(label)] -= 1.0;
  return grad;
}

namespace {

Matrix layer_norm_backward(const Matrix& grad_out, const NormCache& cache, const LayerNormParams& p) {
  const std::size_t n = grad_out.rows();
  const std::size_t d = grad_out.cols();
  Matrix grad_in(n, d);
  std::vector<double> g(d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_g = 0.0;
    double mean_gx = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      g[j] = grad_out(i, j) * p.scale(0, j);
      mean_g += g[j];
      mean_gx += g[j] * cache.normalized(i, j);
    }
    mean_g /= static_cast<double>(d);
    mean_gx /= static_cast<double>(d);
    const double rstd = cache.rstd[i];
    for (std::size_t j = 0; j < d; ++j) {
      grad_in(i, j) = rstd * (g[j] - mean_g - cache.normalized(i, j) * mean_gx);
    }
  }
  require_finite(grad_in, "layer_norm_backward");
  return grad_in;
}

/// dA = S ⊙ (dS - rowsum(S ⊙ dS)).
Matrix softmax_backward(const Matrix& s, const Matrix& grad_s) {
  Matrix grad_a(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j) dot += s(i, j) * grad_s(i, j);
    for (std::size_t j = 0; j < s.cols(); ++j) grad_a(i, j) = s(i, j) * (grad_s(i, j) - dot);
  }
  require_finite(grad_a, "softmax_backward");
  return grad_a;
}

}  // namespace

GradientSet backward(const ForwardTrace& trace, std::span<const double> logit_grad,
                     const ModelParams& params, const AttentionMaskSet* mask) {
  const ModelConfig& cfg = params.config;
  if (trace.task_id < 0 || trace.task_id >= params.learned_tasks()) {
    throw UsageError("backward: trace has no classifier output for these params");
  }
  if (trace.layers.size() != params.blocks.size()) {
    throw UsageError("backward: trace depth does not match the model");
  }
  if (logit_grad.size() != static_cast<std::size_t>(cfg.classes_per_task)) {
    throw DimensionError("backward: logit gradient has " + std::to_string(logit_grad.size()) +
                         " entries, classifier has " + std::to_string(cfg.classes_per_task));
  }
  if (mask != nullptr) mask->require_shape(cfg);

  const auto dh = static_cast<std::size_t>(cfg.head_dim());
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Classifier& head = params.classifiers[static_cast<std::size_t>(trace.task_id)];

  GradientSet grads = GradientSet::zeros(params, trace.task_id, mask != nullptr);

  const Matrix dlogits = Matrix::row_vector(logit_grad);
  grads.classifier_weight = matmul_tn(trace.cls_out, dlogits);
  grads.classifier_bias = dlogits;
  const Matrix dcls = layer_norm_backward(matmul_nt(dlogits, head.weight), trace.final_norm,
                                          params.final_norm);

  Matrix d_tokens(static_cast<std::size_t>(cfg.sequence_length()), static_cast<std::size_t>(cfg.embed_dim));
  for (std::size_t j = 0; j < d_tokens.cols(); ++j) d_tokens(0, j) = dcls(0, j);

  for (std::size_t li = params.blocks.size(); li-- > 0;) {
    const BlockParams& block = params.blocks[li];
    const LayerTrace& lt = trace.layers[li];

    // FFN branch: output = mid + gelu(x2 W1 + b1) W2 + b2.
    Matrix d_hidden = matmul_nt(d_tokens, block.ffn_w2);
    for (std::size_t i = 0; i < d_hidden.size(); ++i) {
      d_hidden.values()[i] *= gelu_derivative(lt.hidden_pre.values()[i]);
    }
    const Matrix d_x2 = matmul_nt(d_hidden, block.ffn_w1);
    Matrix d_mid = add(d_tokens, layer_norm_backward(d_x2, lt.ln2, block.ln2));

    // Attention branch: mid = input + concat_h(S_h V_h).
    const Matrix& d_f = d_mid;
    Matrix d_x(lt.x.rows(), lt.x.cols());
    ProjectionGrads& g = grads.layers[li];
    for (std::size_t h = 0; h < lt.heads.size(); ++h) {
      const HeadTrace& ht = lt.heads[h];
      const std::size_t first = h * dh;
      const Matrix d_fh = col_block(d_f, first, dh);

      const Matrix d_s = matmul_nt(d_fh, ht.v);
      const Matrix d_v = matmul_tn(ht.s, d_fh);
      const Matrix d_a = softmax_backward(ht.s, d_s);
      const Matrix d_q = scale(matmul(d_a, ht.k), score_scale);
      const Matrix d_k = scale(matmul_tn(d_a, ht.q), score_scale);

      set_col_block(g.w_q, first, matmul_tn(lt.x, d_q));
      set_col_block(g.w_k, first, matmul_tn(lt.x, d_k));
      set_col_block(g.w_v, first, matmul_tn(lt.x, d_v));

      if (mask != nullptr) {
        const Matrix& m = mask->at(li, h);
        const Matrix d_a_masked = hadamard(d_a, m);
        const Matrix s_masked = hadamard(ht.s, m);
        ProjectionGrads& gm = (*grads.masked)[li];
        set_col_block(gm.w_q, first, matmul_tn(lt.x, scale(matmul(d_a_masked, ht.k), score_scale)));
        set_col_block(gm.w_k, first, matmul_tn(lt.x, scale(matmul_tn(d_a_masked, ht.q), score_scale)));
        set_col_block(gm.w_v, first, matmul_tn(lt.x, matmul_tn(s_masked, d_fh)));
      }

      if (li > 0) {
        add_inplace(d_x, matmul_nt(d_q, col_block(block.w_q, first, dh)));
        add_inplace(d_x, matmul_nt(d_k, col_block(block.w_k, first, dh)));
        add_inplace(d_x, matmul_nt(d_v, col_block(block.w_v, first, dh)));
      }
    }

    // Nothing upstream of the first block is trainable.
    if (li > 0) d_tokens = add(d_mid, layer_norm_backward(d_x, lt.ln1, block.ln1));
  }
  return grads;
}

double sample_loss(const Matrix& image, int label, const ModelParams& params, int task_id) {
  return cross_entropy(forward(image, params, task_id).logits, label);
}

Matrix central_difference(const std::function<double(const Matrix&)>& f, const Matrix& at, double eps) {
  if (!(eps > 0.0)) throw UsageError("central_difference: eps must be positive");
  Matrix probe = at;
  Matrix grad(at.rows(), at.cols());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double original = at.values()[i];
    probe.values()[i] = original + eps;
    const double plus = f(probe);
    probe.values()[i] = original - eps;
    const double minus = f(probe);
    probe.values()[i] = original;
    grad.values()[i] = (plus - minus) / (2.0 * eps);
  }
  return grad;
}

Matrix finite_diff_oracle(const Matrix& image, int label, const ModelParams& params, int task_id,
                          std::size_t layer, Projection which, double eps) {
  if (!(eps > 0.0)) throw UsageError("finite_diff_oracle: eps must be positive");
  ReferenceModel<long double> model(params);
  auto& block = model.block(layer);
  auto& weights = which == Projection::query ? block.w_q : which == Projection::key ? block.w_k : block.w_v;
  const Matrix& shape = projection_weight(params, layer, which);
  const long double step = eps;
  Matrix grad(shape.rows(), shape.cols());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const long double original = weights[i];
    weights[i] = original + step;
    const long double plus = model.loss(image, label, task_id);
    weights[i] = original - step;
    const long double minus = model.loss(image, label, task_id);
    weights[i] = original;
    grad.values()[i] = static_cast<double>((plus - minus) / (2.0L * step));
  }
  require_finite(grad, "finite_diff_oracle");
  return grad;
}

}  // namespace arcl
