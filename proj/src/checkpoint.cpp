// SPDX-License-Identifier: Apache-2.0
#include "arcl/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace arcl {

namespace {

constexpr std::array<char, 8> kMagic{'A', 'R', 'C', 'L', 'C', 'K', 'P', 'T'};
// Bounds a corrupt header before it turns into a huge allocation.
constexpr std::uint64_t kMaxTensorEntries = std::uint64_t{1} << 28;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw CheckpointError("checkpoint: truncated file");
  return value;
}

void put_matrix(std::ostream& out, const Matrix& m) {
  put<std::uint64_t>(out, m.rows());
  put<std::uint64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.values().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix get_matrix(std::istream& in, std::size_t rows, std::size_t cols) {
  const auto r = get<std::uint64_t>(in);
  const auto c = get<std::uint64_t>(in);
  if (r != rows || c != cols || r * c > kMaxTensorEntries) {
    throw CheckpointError("checkpoint: tensor shape " + std::to_string(r) + "x" +
                          std::to_string(c) + " does not match config (" + std::to_string(rows) +
                          "x" + std::to_string(cols) + ")");
  }
  std::vector<double> data(r * c);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!in) throw CheckpointError("checkpoint: truncated tensor data");
  return Matrix(r, c, std::move(data));
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& p) {
  const ModelConfig& c = p.config;
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  for (int v : {c.image_side, c.patch_side, c.embed_dim, c.depth, c.heads, c.ffn_hidden,
                c.classes_per_task, c.tasks}) {
    put<std::int32_t>(out, v);
  }
  put<double>(out, c.init_std);
  put<double>(out, c.norm_eps);

  put_matrix(out, p.patch_embed);
  put_matrix(out, p.cls_token);
  put_matrix(out, p.pos_embed);
  for (const BlockParams& b : p.blocks) {
    for (const Matrix* m : {&b.w_q, &b.w_k, &b.w_v, &b.ln1.scale, &b.ln1.shift, &b.ln2.scale,
                            &b.ln2.shift, &b.ffn_w1, &b.ffn_b1, &b.ffn_w2, &b.ffn_b2}) {
      put_matrix(out, *m);
    }
  }
  put_matrix(out, p.final_norm.scale);
  put_matrix(out, p.final_norm.shift);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.classifiers.size()));
  for (const Classifier& head : p.classifiers) {
    put_matrix(out, head.weight);
    put_matrix(out, head.bias);
  }
  if (!out) throw CheckpointError("checkpoint: write failed");
}

ModelParams read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError("checkpoint: bad magic");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }

  ModelParams p;
  ModelConfig& c = p.config;
  for (int* v : {&c.image_side, &c.patch_side, &c.embed_dim, &c.depth, &c.heads, &c.ffn_hidden,
                 &c.classes_per_task, &c.tasks}) {
    *v = get<std::int32_t>(in);
  }
  c.init_std = get<double>(in);
  c.norm_eps = get<double>(in);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: invalid config: ") + e.what());
  }

  const auto d = static_cast<std::size_t>(c.embed_dim);
  const auto ff = static_cast<std::size_t>(c.ffn_hidden);
  p.patch_embed = get_matrix(in, static_cast<std::size_t>(c.patch_dim()), d);
  p.cls_token = get_matrix(in, 1, d);
  p.pos_embed = get_matrix(in, static_cast<std::size_t>(c.sequence_length()), d);
  p.blocks.resize(static_cast<std::size_t>(c.depth));
  for (BlockParams& b : p.blocks) {
    b.w_q = get_matrix(in, d, d);
    b.w_k = get_matrix(in, d, d);
    b.w_v = get_matrix(in, d, d);
    b.ln1.scale = get_matrix(in, 1, d);
    b.ln1.shift = get_matrix(in, 1, d);
    b.ln2.scale = get_matrix(in, 1, d);
    b.ln2.shift = get_matrix(in, 1, d);
    b.ffn_w1 = get_matrix(in, d, ff);
    b.ffn_b1 = get_matrix(in, 1, ff);
    b.ffn_w2 = get_matrix(in, ff, d);
    b.ffn_b2 = get_matrix(in, 1, d);
  }
  p.final_norm.scale = get_matrix(in, 1, d);
  p.final_norm.shift = get_matrix(in, 1, d);
  const auto heads = get<std::uint32_t>(in);
  if (heads > static_cast<std::uint32_t>(c.tasks)) {
    throw CheckpointError("checkpoint: more classifiers than tasks");
  }
  const auto classes = static_cast<std::size_t>(c.classes_per_task);
  for (std::uint32_t t = 0; t < heads; ++t) {
    Classifier head;
    head.weight = get_matrix(in, d, classes);
    head.bias = get_matrix(in, 1, classes);
    p.classifiers.push_back(std::move(head));
  }
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace arcl
