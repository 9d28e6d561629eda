// SPDX-License-Identifier: Apache-2.0
#include "arcl/vit.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "arcl/errors.hpp"
#include "arcl/random.hpp"

namespace arcl {

void ModelConfig::validate() const {
  auto positive = [](int value, const char* field) {
    if (value < 1) throw ConfigError(field, "must be >= 1, got " + std::to_string(value));
  };
  positive(image_side, "image_side");
  positive(patch_side, "patch_side");
  positive(embed_dim, "embed_dim");
  positive(depth, "depth");
  positive(heads, "heads");
  positive(ffn_hidden, "ffn_hidden");
  positive(classes_per_task, "classes_per_task");
  positive(tasks, "tasks");
  if (image_side % patch_side != 0) {
    throw ConfigError("patch_side", "must divide image_side (" + std::to_string(image_side) +
                                        " % " + std::to_string(patch_side) + " != 0)");
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("heads", "must divide embed_dim (" + std::to_string(embed_dim) + " % " +
                                   std::to_string(heads) + " != 0)");
  }
  if (!(init_std > 0.0) || !std::isfinite(init_std)) {
    throw ConfigError("init_std", "must be positive and finite");
  }
  if (!(norm_eps > 0.0)) throw ConfigError("norm_eps", "must be positive");
}

namespace {

LayerNormParams unit_norm(int dim) {
  return {Matrix(1, static_cast<std::size_t>(dim), 1.0), Matrix(1, static_cast<std::size_t>(dim))};
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias(0, j);
  }
}

Matrix layer_norm(const Matrix& in, const LayerNormParams& p, double eps, NormCache& cache) {
  const std::size_t n = in.rows();
  const std::size_t d = in.cols();
  cache.normalized = Matrix(n, d);
  cache.rstd.assign(n, 0.0);
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = in.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    cache.rstd[i] = rstd;
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (r[j] - mean) * rstd;
      cache.normalized(i, j) = xhat;
      out(i, j) = xhat * p.scale(0, j) + p.shift(0, j);
    }
  }
  require_finite(out, "layer_norm");
  return out;
}

void run_blocks(ForwardTrace& trace, Matrix tokens, const ModelParams& params) {
  const ModelConfig& cfg = params.config;
  const std::size_t dh = static_cast<std::size_t>(cfg.head_dim());
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  trace.layers.resize(params.blocks.size());
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    const BlockParams& block = params.blocks[l];
    LayerTrace& lt = trace.layers[l];
    lt.input = std::move(tokens);
    lt.x = layer_norm(lt.input, block.ln1, cfg.norm_eps, lt.ln1);

    const Matrix q_all = matmul(lt.x, block.w_q);
    const Matrix k_all = matmul(lt.x, block.w_k);
    const Matrix v_all = matmul(lt.x, block.w_v);
    lt.f = Matrix(lt.x.rows(), static_cast<std::size_t>(cfg.embed_dim));
    lt.heads.resize(static_cast<std::size_t>(cfg.heads));
    for (std::size_t h = 0; h < lt.heads.size(); ++h) {
      HeadTrace& ht = lt.heads[h];
      ht.q = col_block(q_all, h * dh, dh);
      ht.k = col_block(k_all, h * dh, dh);
      ht.v = col_block(v_all, h * dh, dh);
      ht.a = scale(matmul_nt(ht.q, ht.k), score_scale);
      ht.s = softmax_rows(ht.a);
      set_col_block(lt.f, h * dh, matmul(ht.s, ht.v));
    }

    lt.mid = add(lt.input, lt.f);
    lt.x2 = layer_norm(lt.mid, block.ln2, cfg.norm_eps, lt.ln2);
    lt.hidden_pre = matmul(lt.x2, block.ffn_w1);
    add_row_bias(lt.hidden_pre, block.ffn_b1);
    lt.hidden = lt.hidden_pre;
    for (double& v : lt.hidden.values()) v = gelu(v);
    Matrix ffn_out = matmul(lt.hidden, block.ffn_w2);
    add_row_bias(ffn_out, block.ffn_b2);
    lt.output = add(lt.mid, ffn_out);
    tokens = lt.output;
  }

  const Matrix cls_row = Matrix::row_vector(tokens.row(0));
  trace.cls_out = layer_norm(cls_row, params.final_norm, cfg.norm_eps, trace.final_norm);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x5eed));
  const auto d = static_cast<std::size_t>(config.embed_dim);
  const auto ff = static_cast<std::size_t>(config.ffn_hidden);
  const double sd = config.init_std;

  ModelParams p;
  p.config = config;
  p.patch_embed = gaussian_matrix(static_cast<std::size_t>(config.patch_dim()), d, sd, rng);
  p.cls_token = gaussian_matrix(1, d, sd, rng);
  p.pos_embed = gaussian_matrix(static_cast<std::size_t>(config.sequence_length()), d, sd, rng);
  p.blocks.resize(static_cast<std::size_t>(config.depth));
  for (BlockParams& b : p.blocks) {
    b.w_q = gaussian_matrix(d, d, sd, rng);
    b.w_k = gaussian_matrix(d, d, sd, rng);
    b.w_v = gaussian_matrix(d, d, sd, rng);
    b.ln1 = unit_norm(config.embed_dim);
    b.ln2 = unit_norm(config.embed_dim);
    b.ffn_w1 = gaussian_matrix(d, ff, sd, rng);
    b.ffn_b1 = Matrix(1, ff);
    b.ffn_w2 = gaussian_matrix(ff, d, sd, rng);
    b.ffn_b2 = Matrix(1, d);
  }
  p.final_norm = unit_norm(config.embed_dim);
  return p;
}

void ModelParams::add_classifier(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xc1a55 + classifiers.size()));
  const auto d = static_cast<std::size_t>(config.embed_dim);
  const auto c = static_cast<std::size_t>(config.classes_per_task);
  classifiers.push_back({gaussian_matrix(d, c, config.init_std, rng), Matrix(1, c)});
}

bool frozen_equal(const ModelParams& a, const ModelParams& b) {
  if (!(a.config == b.config) || a.blocks.size() != b.blocks.size()) return false;
  if (!(a.patch_embed == b.patch_embed && a.cls_token == b.cls_token &&
        a.pos_embed == b.pos_embed && a.final_norm == b.final_norm)) {
    return false;
  }
  for (std::size_t l = 0; l < a.blocks.size(); ++l) {
    const BlockParams& x = a.blocks[l];
    const BlockParams& y = b.blocks[l];
    if (!(x.ln1 == y.ln1 && x.ln2 == y.ln2 && x.ffn_w1 == y.ffn_w1 && x.ffn_b1 == y.ffn_b1 &&
          x.ffn_w2 == y.ffn_w2 && x.ffn_b2 == y.ffn_b2)) {
      return false;
    }
  }
  return true;
}

Matrix patch_embed(const Matrix& image, const ModelParams& params) {
  const ModelConfig& cfg = params.config;
  const auto side = static_cast<std::size_t>(cfg.image_side);
  if (image.rows() != side || image.cols() != side) {
    throw DimensionError("patch_embed: image is " + std::to_string(image.rows()) + "x" +
                         std::to_string(image.cols()) + ", config expects " +
                         std::to_string(side) + "x" + std::to_string(side));
  }
  const auto ps = static_cast<std::size_t>(cfg.patch_side);
  const auto grid = static_cast<std::size_t>(cfg.grid_side());

  Matrix patches(grid * grid, ps * ps);
  for (std::size_t gr = 0; gr < grid; ++gr)
    for (std::size_t gc = 0; gc < grid; ++gc)
      for (std::size_t r = 0; r < ps; ++r)
        for (std::size_t c = 0; c < ps; ++c)
          patches(gr * grid + gc, r * ps + c) = image(gr * ps + r, gc * ps + c);

  const Matrix projected = matmul(patches, params.patch_embed);
  Matrix tokens(grid * grid + 1, static_cast<std::size_t>(cfg.embed_dim));
  for (std::size_t j = 0; j < tokens.cols(); ++j) tokens(0, j) = params.cls_token(0, j);
  for (std::size_t i = 0; i < projected.rows(); ++i)
    for (std::size_t j = 0; j < tokens.cols(); ++j) tokens(i + 1, j) = projected(i, j);
  add_inplace(tokens, params.pos_embed);
  return tokens;
}

ForwardTrace forward_backbone(const Matrix& image, const ModelParams& params) {
  ForwardTrace trace;
  run_blocks(trace, patch_embed(image, params), params);
  return trace;
}

std::vector<double> classifier_logits(const Matrix& cls_out, const Classifier& head) {
  const Matrix out = add(matmul(cls_out, head.weight), head.bias);
  return {out.values().begin(), out.values().end()};
}

ForwardTrace forward(const Matrix& image, const ModelParams& params, int task_id) {
  if (task_id < 0 || task_id >= params.learned_tasks()) {
    throw UsageError("forward: no classifier for task " + std::to_string(task_id) + " (" +
                     std::to_string(params.learned_tasks()) + " learned)");
  }
  ForwardTrace trace = forward_backbone(image, params);
  trace.task_id = task_id;
  trace.logits = classifier_logits(trace.cls_out, params.classifiers[static_cast<std::size_t>(task_id)]);
  return trace;
}

std::vector<double> concatenated_logits(const Matrix& image, const ModelParams& params) {
  if (params.classifiers.empty()) throw UsageError("predict_all: no task has been trained");
  const ForwardTrace trace = forward_backbone(image, params);
  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(params.learned_classes()));
  for (const Classifier& head : params.classifiers) {
    const auto part = classifier_logits(trace.cls_out, head);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

int argmax_lowest(std::span<const double> logits) {
  if (logits.empty()) throw UsageError("argmax_lowest: empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}

int predict_all(const Matrix& image, const ModelParams& params) {
  return argmax_lowest(concatenated_logits(image, params));
}

double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) noexcept {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace arcl
