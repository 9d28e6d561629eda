// SPDX-License-Identifier: Apache-2.0
//
// Synthetic class-incremental task stream. Each class is a set of binary
// glyphs stamped into its own cells of the patch grid on top of Gaussian
// noise, so a classifier has to look at those cells to tell classes apart.
// Tasks own disjoint, contiguous class-id ranges.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "arcl/numkernel.hpp"
#include "arcl/vit.hpp"

namespace arcl {

struct Sample {
  Matrix image;
  int label = 0;  // global class id

  bool operator==(const Sample&) const = default;
};

struct StreamConfig {
  int train_per_class = 100;
  int test_per_class = 50;
  double noise_std = 0.5;
  double glyph_amplitude = 1.0;
  /// Uniform relative jitter of the glyph amplitude per sample.
  double amplitude_jitter = 0.25;
  /// Patch-grid cells covered by one class's glyph.
  int cells_per_class = 1;
  /// Random non-class glyphs stamped into other cells of every image.
  int distractors = 6;

  void validate() const;
  bool operator==(const StreamConfig&) const = default;
};

struct ClassPattern {
  std::vector<int> cells;     // row-major indices into the patch grid
  std::vector<Matrix> glyphs;  // one per cell, patch_side x patch_side, entries in {0, 1}

  bool operator==(const ClassPattern&) const = default;
};

struct TaskData {
  int task_id = 0;
  std::vector<int> classes;
  std::vector<Sample> train;
  std::vector<Sample> test;

  bool operator==(const TaskData&) const = default;
};

struct TaskStream {
  std::uint64_t seed = 0;
  std::vector<ClassPattern> patterns;  // indexed by global class id
  std::vector<TaskData> tasks;

  bool operator==(const TaskStream&) const = default;
};

TaskStream generate_task_stream(const ModelConfig& model, const StreamConfig& stream, std::uint64_t seed);

/// Percent of `test` classified correctly by a per-class pixel centroid fit on `train`.
double nearest_centroid_accuracy(std::span<const Sample> train, std::span<const Sample> test);

std::vector<Matrix> images_of(std::span<const Sample> samples);

enum class DataPurpose { training, mask_generation, drift_probe };

const char* purpose_name(DataPurpose p) noexcept;

/// Records every read of a task's training split.
class DataAccessLog {
 public:
  struct Event {
    int task = 0;
    DataPurpose purpose = DataPurpose::training;
    bool after_release = false;
  };

  void record(int task, DataPurpose purpose, bool after_release) {
    events_.push_back({task, purpose, after_release});
  }
  const std::vector<Event>& events() const noexcept { return events_; }
  /// Reads of a released training split.
  std::size_t violations() const noexcept;

 private:
  std::vector<Event> events_;
};

/// Owning handle to one task's training split. After release() the samples
/// are freed and any read throws DataFreeViolation (and is logged).
class TrainingSet {
 public:
  TrainingSet(int task, std::vector<Sample> samples, DataAccessLog* log)
      : task_(task), samples_(std::move(samples)), log_(log) {}

  TrainingSet(const TrainingSet&) = delete;
  TrainingSet& operator=(const TrainingSet&) = delete;
  TrainingSet(TrainingSet&&) = default;
  TrainingSet& operator=(TrainingSet&&) = default;

  std::span<const Sample> read(DataPurpose purpose);
  void release() noexcept;
  bool released() const noexcept { return released_; }
  int task() const noexcept { return task_; }

 private:
  int task_;
  std::vector<Sample> samples_;
  DataAccessLog* log_;
  bool released_ = false;
};

}  // namespace arcl
