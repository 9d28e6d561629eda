// SPDX-License-Identifier: Apache-2.0
#include "arcl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "arcl/errors.hpp"
#include "arcl/random.hpp"

namespace arcl {

void StreamConfig::validate() const {
  if (train_per_class < 1) throw ConfigError("train_per_class", "must be >= 1");
  if (test_per_class < 1) throw ConfigError("test_per_class", "must be >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std", "must be >= 0");
  if (!(glyph_amplitude > 0.0)) throw ConfigError("glyph_amplitude", "must be > 0");
  if (!(amplitude_jitter >= 0.0 && amplitude_jitter < 1.0)) {
    throw ConfigError("amplitude_jitter", "must be in [0, 1)");
  }
  if (cells_per_class < 1) throw ConfigError("cells_per_class", "must be >= 1");
  if (distractors < 0) throw ConfigError("distractors", "must be >= 0");
}

namespace {

std::vector<ClassPattern> make_patterns(const ModelConfig& model, const StreamConfig& stream, int classes,
                                        Rng& rng) {
  const int cells = model.tokens();
  const int pixels = model.patch_dim();
  const int lit = std::max(1, pixels / 2);
  const int span = stream.cells_per_class;

  std::vector<int> cell_order(static_cast<std::size_t>(cells));
  std::iota(cell_order.begin(), cell_order.end(), 0);
  std::shuffle(cell_order.begin(), cell_order.end(), rng);

  std::vector<ClassPattern> patterns;
  std::vector<int> pixel_order(static_cast<std::size_t>(pixels));
  for (int c = 0; c < classes; ++c) {
    ClassPattern p;
    // Consecutive slots of one shuffled order: classes of a task never share a cell.
    for (int i = 0; i < span; ++i) p.cells.push_back(cell_order[static_cast<std::size_t>((c * span + i) % cells)]);
    // Patterns sharing cells must differ; bounded retries then accept.
    for (int attempt = 0; attempt < 64; ++attempt) {
      p.glyphs.clear();
      for (int i = 0; i < span; ++i) {
        std::iota(pixel_order.begin(), pixel_order.end(), 0);
        std::shuffle(pixel_order.begin(), pixel_order.end(), rng);
        Matrix g(static_cast<std::size_t>(model.patch_side), static_cast<std::size_t>(model.patch_side));
        for (int k = 0; k < lit; ++k) g.values()[static_cast<std::size_t>(pixel_order[static_cast<std::size_t>(k)])] = 1.0;
        p.glyphs.push_back(std::move(g));
      }
      if (std::find(patterns.begin(), patterns.end(), p) == patterns.end()) break;
    }
    patterns.push_back(std::move(p));
  }
  return patterns;
}

Sample draw_sample(const ModelConfig& model, const StreamConfig& cfg, const ClassPattern& pattern,
                   int label, Rng& rng) {
  const auto side = static_cast<std::size_t>(model.image_side);
  const auto ps = static_cast<std::size_t>(model.patch_side);
  const auto grid = static_cast<std::size_t>(model.grid_side());
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  std::uniform_real_distribution<double> jitter(-cfg.amplitude_jitter, cfg.amplitude_jitter);

  Sample s{Matrix(side, side), label};
  for (double& v : s.image.values()) v = cfg.noise_std > 0.0 ? noise(rng) : 0.0;
  const double amplitude = cfg.glyph_amplitude * (1.0 + jitter(rng));
  auto stamp = [&](int cell, const Matrix& glyph, double a) {
    const std::size_t r0 = static_cast<std::size_t>(cell) / grid * ps;
    const std::size_t c0 = static_cast<std::size_t>(cell) % grid * ps;
    for (std::size_t r = 0; r < ps; ++r)
      for (std::size_t c = 0; c < ps; ++c) s.image(r0 + r, c0 + c) += a * glyph(r, c);
  };
  for (std::size_t i = 0; i < pattern.cells.size(); ++i) stamp(pattern.cells[i], pattern.glyphs[i], amplitude);

  if (cfg.distractors > 0) {
    std::vector<int> free_cells;
    for (int c = 0; c < model.tokens(); ++c)
      if (std::find(pattern.cells.begin(), pattern.cells.end(), c) == pattern.cells.end()) free_cells.push_back(c);
    std::shuffle(free_cells.begin(), free_cells.end(), rng);
    const std::size_t pixels = ps * ps;
    std::vector<std::size_t> order(pixels);
    const auto count = std::min(free_cells.size(), static_cast<std::size_t>(cfg.distractors));
    for (std::size_t d = 0; d < count; ++d) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      Matrix glyph(ps, ps);
      for (std::size_t k = 0; k < std::max<std::size_t>(1, pixels / 2); ++k) glyph.values()[order[k]] = 1.0;
      stamp(free_cells[d], glyph, cfg.glyph_amplitude * (1.0 + jitter(rng)));
    }
  }
  return s;
}

}  // namespace

TaskStream generate_task_stream(const ModelConfig& model, const StreamConfig& stream, std::uint64_t seed) {
  model.validate();
  stream.validate();
  const int per_task = model.classes_per_task;
  if (per_task * stream.cells_per_class > model.tokens()) {
    throw ConfigError("cells_per_class", "classes_per_task * cells_per_class exceeds the " +
                                             std::to_string(model.tokens()) + " grid cells");
  }
  const int classes = model.tasks * per_task;

  TaskStream out;
  out.seed = seed;
  Rng pattern_rng(mix_seed(seed, 0x91a9));
  out.patterns = make_patterns(model, stream, classes, pattern_rng);

  for (int t = 0; t < model.tasks; ++t) {
    TaskData task;
    task.task_id = t;
    Rng rng(mix_seed(seed, 0xda7a0000ULL + static_cast<std::uint64_t>(t)));
    for (int k = 0; k < per_task; ++k) {
      const int label = t * per_task + k;
      task.classes.push_back(label);
      const ClassPattern& pattern = out.patterns[static_cast<std::size_t>(label)];
      for (int i = 0; i < stream.train_per_class; ++i) task.train.push_back(draw_sample(model, stream, pattern, label, rng));
      for (int i = 0; i < stream.test_per_class; ++i) task.test.push_back(draw_sample(model, stream, pattern, label, rng));
    }
    out.tasks.push_back(std::move(task));
  }
  return out;
}

double nearest_centroid_accuracy(std::span<const Sample> train, std::span<const Sample> test) {
  if (train.empty() || test.empty()) throw UsageError("nearest_centroid_accuracy: empty split");
  std::vector<int> labels;
  for (const Sample& s : train) {
    if (std::find(labels.begin(), labels.end(), s.label) == labels.end()) labels.push_back(s.label);
  }
  std::sort(labels.begin(), labels.end());
  const std::size_t rows = train.front().image.rows();
  const std::size_t cols = train.front().image.cols();
  std::vector<Matrix> centroids(labels.size(), Matrix(rows, cols));
  std::vector<int> counts(labels.size(), 0);
  for (const Sample& s : train) {
    const auto k = static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), s.label) - labels.begin());
    add_inplace(centroids[k], s.image);
    ++counts[k];
  }
  for (std::size_t k = 0; k < centroids.size(); ++k) centroids[k] = scale(centroids[k], 1.0 / counts[k]);

  int correct = 0;
  for (const Sample& s : test) {
    double best = std::numeric_limits<double>::infinity();
    int predicted = -1;
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      const double d = frobenius_norm(subtract(s.image, centroids[k]));
      if (d < best) {
        best = d;
        predicted = labels[k];
      }
    }
    correct += predicted == s.label ? 1 : 0;
  }
  return 100.0 * correct / static_cast<double>(test.size());
}

std::vector<Matrix> images_of(std::span<const Sample> samples) {
  std::vector<Matrix> images;
  images.reserve(samples.size());
  for (const Sample& s : samples) images.push_back(s.image);
  return images;
}

const char* purpose_name(DataPurpose p) noexcept {
  switch (p) {
    case DataPurpose::training: return "training";
    case DataPurpose::mask_generation: return "mask_generation";
    case DataPurpose::drift_probe: return "drift_probe";
  }
  return "?";
}

std::size_t DataAccessLog::violations() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(events_.begin(), events_.end(), [](const Event& e) { return e.after_release; }));
}

std::span<const Sample> TrainingSet::read(DataPurpose purpose) {
  if (log_ != nullptr) log_->record(task_, purpose, released_);
  if (released_) {
    throw DataFreeViolation("training data of task " + std::to_string(task_ + 1) +
                            " was read after the task completed");
  }
  return samples_;
}

void TrainingSet::release() noexcept {
  released_ = true;
  std::vector<Sample>().swap(samples_);
}

}  // namespace arcl
