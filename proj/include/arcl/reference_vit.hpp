// SPDX-License-Identifier: Apache-2.0
//
// Straight-loop scalar re-implementation of the transformer forward pass,
// templated on the scalar type. It shares no code with vit.cpp and serves as
// the independent oracle for logits and, instantiated with long double, for
// finite-difference gradients, where the extra precision keeps cancellation
// roundoff well below the gradient-check tolerance.

#pragma once

#include <cmath>
#include <vector>

#include "arcl/errors.hpp"
#include "arcl/vit.hpp"

namespace arcl {

template <typename T>
class ReferenceModel {
 public:
  using Tensor = std::vector<T>;  // row-major

  struct Block {
    Tensor w_q, w_k, w_v, ln1_scale, ln1_shift, ln2_scale, ln2_shift, w1, b1, w2, b2;
  };

  explicit ReferenceModel(const ModelParams& p) : cfg_(p.config) {
    patch_embed_ = convert(p.patch_embed);
    cls_ = convert(p.cls_token);
    pos_ = convert(p.pos_embed);
    for (const BlockParams& b : p.blocks) {
      blocks_.push_back({convert(b.w_q), convert(b.w_k), convert(b.w_v), convert(b.ln1.scale),
                         convert(b.ln1.shift), convert(b.ln2.scale), convert(b.ln2.shift),
                         convert(b.ffn_w1), convert(b.ffn_b1), convert(b.ffn_w2), convert(b.ffn_b2)});
    }
    final_scale_ = convert(p.final_norm.scale);
    final_shift_ = convert(p.final_norm.shift);
    for (const Classifier& c : p.classifiers) {
      head_w_.push_back(convert(c.weight));
      head_b_.push_back(convert(c.bias));
    }
  }

  Block& block(std::size_t l) { return blocks_.at(l); }

  std::vector<T> logits(const Matrix& image, int task) const {
    const int n1 = cfg_.sequence_length();
    const int d = cfg_.embed_dim;
    const int ps = cfg_.patch_side;
    const int grid = cfg_.grid_side();
    if (task < 0 || static_cast<std::size_t>(task) >= head_w_.size()) {
      throw UsageError("ReferenceModel: no classifier for task");
    }

    Tensor z(static_cast<std::size_t>(n1 * d), T(0));
    for (int j = 0; j < d; ++j) z[at(0, j, d)] = cls_[j] + pos_[at(0, j, d)];
    for (int g = 0; g < grid * grid; ++g) {
      const int gr = g / grid;
      const int gc = g % grid;
      for (int j = 0; j < d; ++j) {
        T acc = T(0);
        for (int r = 0; r < ps; ++r)
          for (int c = 0; c < ps; ++c)
            acc += T(image(gr * ps + r, gc * ps + c)) * patch_embed_[at(r * ps + c, j, d)];
        z[at(g + 1, j, d)] = acc + pos_[at(g + 1, j, d)];
      }
    }

    const int heads = cfg_.heads;
    const int dh = d / heads;
    const T inv_sqrt_dh = T(1) / std::sqrt(T(dh));
    for (const Block& b : blocks_) {
      const Tensor x = norm(z, n1, d, b.ln1_scale, b.ln1_shift);
      const Tensor q = project(x, b.w_q, n1, d, d);
      const Tensor k = project(x, b.w_k, n1, d, d);
      const Tensor v = project(x, b.w_v, n1, d, d);
      Tensor f(static_cast<std::size_t>(n1 * d), T(0));
      for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < n1; ++i) {
          std::vector<T> score(static_cast<std::size_t>(n1));
          T peak = T(0);
          for (int j = 0; j < n1; ++j) {
            T acc = T(0);
            for (int e = 0; e < dh; ++e) acc += q[at(i, h * dh + e, d)] * k[at(j, h * dh + e, d)];
            score[j] = acc * inv_sqrt_dh;
            if (j == 0 || score[j] > peak) peak = score[j];
          }
          T total = T(0);
          for (int j = 0; j < n1; ++j) {
            score[j] = std::exp(score[j] - peak);
            total += score[j];
          }
          for (int e = 0; e < dh; ++e) {
            T acc = T(0);
            for (int j = 0; j < n1; ++j) acc += score[j] / total * v[at(j, h * dh + e, d)];
            f[at(i, h * dh + e, d)] = acc;
          }
        }
      }
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += f[i];

      const int ff = cfg_.ffn_hidden;
      const Tensor x2 = norm(z, n1, d, b.ln2_scale, b.ln2_shift);
      Tensor hidden = project(x2, b.w1, n1, d, ff);
      for (int i = 0; i < n1; ++i)
        for (int j = 0; j < ff; ++j) {
          const T pre = hidden[at(i, j, ff)] + b.b1[j];
          hidden[at(i, j, ff)] = T(0.5) * pre * (T(1) + std::erf(pre / std::sqrt(T(2))));
        }
      const Tensor out = project(hidden, b.w2, n1, ff, d);
      for (int i = 0; i < n1; ++i)
        for (int j = 0; j < d; ++j) z[at(i, j, d)] += out[at(i, j, d)] + b.b2[j];
    }

    const Tensor cls_row(z.begin(), z.begin() + d);
    const Tensor y = norm(cls_row, 1, d, final_scale_, final_shift_);
    const int classes = cfg_.classes_per_task;
    const Tensor& w = head_w_[static_cast<std::size_t>(task)];
    const Tensor& bias = head_b_[static_cast<std::size_t>(task)];
    std::vector<T> out(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
      T acc = T(0);
      for (int j = 0; j < d; ++j) acc += y[j] * w[at(j, c, classes)];
      out[c] = acc + bias[c];
    }
    return out;
  }

  T loss(const Matrix& image, int label, int task) const {
    const std::vector<T> z = logits(image, task);
    T peak = z[0];
    for (T v : z) peak = v > peak ? v : peak;
    T total = T(0);
    for (T v : z) total += std::exp(v - peak);
    return std::log(total) + peak - z.at(static_cast<std::size_t>(label));
  }

 private:
  static std::size_t at(int r, int c, int cols) { return static_cast<std::size_t>(r * cols + c); }

  static Tensor convert(const Matrix& m) { return Tensor(m.values().begin(), m.values().end()); }

  Tensor norm(const Tensor& in, int rows, int d, const Tensor& g, const Tensor& b) const {
    Tensor out(in.size());
    for (int i = 0; i < rows; ++i) {
      T mean = T(0);
      for (int j = 0; j < d; ++j) mean += in[at(i, j, d)];
      mean /= T(d);
      T var = T(0);
      for (int j = 0; j < d; ++j) var += (in[at(i, j, d)] - mean) * (in[at(i, j, d)] - mean);
      var /= T(d);
      const T rstd = T(1) / std::sqrt(var + T(cfg_.norm_eps));
      for (int j = 0; j < d; ++j) out[at(i, j, d)] = (in[at(i, j, d)] - mean) * rstd * g[j] + b[j];
    }
    return out;
  }

  static Tensor project(const Tensor& x, const Tensor& w, int rows, int in, int out_dim) {
    Tensor out(static_cast<std::size_t>(rows * out_dim), T(0));
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < out_dim; ++j) {
        T acc = T(0);
        for (int e = 0; e < in; ++e) acc += x[at(i, e, in)] * w[at(e, j, out_dim)];
        out[at(i, j, out_dim)] = acc;
      }
    return out;
  }

  ModelConfig cfg_;
  Tensor patch_embed_, cls_, pos_;
  std::vector<Block> blocks_;
  Tensor final_scale_, final_shift_;
  std::vector<Tensor> head_w_, head_b_;
};

}  // namespace arcl
