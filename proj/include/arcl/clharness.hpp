// SPDX-License-Identifier: Apache-2.0
//
// Sequential class-incremental training and evaluation.
//
// seq_ft trains every task with unmasked gradients and plain Adam. arcl
// trains the first task the same way; after each task it folds that task's
// attention masks into a running mean and trains every later task with
// masked projection gradients and update-ratio scaling. Evaluation
// concatenates all learned classifiers (no task identity).

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "arcl/attnmask.hpp"
#include "arcl/dataset.hpp"
#include "arcl/optim.hpp"
#include "arcl/vit.hpp"

namespace arcl {

enum class Mode { seq_ft, arcl };

const char* mode_name(Mode m) noexcept;
/// Accepts "seq_ft" / "seqft" / "seq-ft" and "arcl"; throws ConfigError.
Mode parse_mode(const std::string& text);

struct HarnessConfig {
  int epochs = 30;
  int batch_size = 16;
  /// Task-1 training samples per class kept aside for the drift metric only.
  int drift_probe_per_class = 8;
  int threads = 1;

  void validate() const;
  bool operator==(const HarnessConfig&) const = default;
};

struct ExperimentConfig {
  ModelConfig model;
  StreamConfig stream;
  OptimizerConfig optim;
  HarnessConfig harness;

  void validate() const;
};

struct TaskTrainLog {
  std::vector<double> epoch_loss;  // mean cross-entropy over each epoch
};

/// a[t][j]: accuracy (percent) on task j's test set after training task t, j <= t.
using AccuracyMatrix = std::vector<std::vector<double>>;

struct ForgettingMetrics {
  double final_average_accuracy = 0.0;
  double final_average_forgetting = 0.0;
};

ForgettingMetrics compute_metrics(const AccuracyMatrix& accuracy);

struct DriftPoint {
  int task = 0;  // 1-based task index after which drift was measured
  double percent = 0.0;
};

struct MetricsReport {
  Mode mode = Mode::seq_ft;
  std::uint64_t seed = 0;
  AccuracyMatrix accuracy;
  ForgettingMetrics metrics;
  std::vector<DriftPoint> drift;
  std::vector<TaskTrainLog> training;

  bool operator==(const MetricsReport& other) const;
};

struct RunResult {
  MetricsReport report;
  ModelParams final_model;
  ModelParams first_task_model;
  /// arcl only: the running mask set after each task.
  std::vector<AttentionMaskSet> masks_after_task;
  DataAccessLog access_log;
};

/// Trains `params` on one task. Adds the task's classifier if it is the next
/// one. In arcl mode `masks` must be given for every task after the first.
TaskTrainLog train_task(ModelParams& params, std::span<const Sample> train, int task_id, Mode mode,
                        const AttentionMaskSet* masks, const ExperimentConfig& config,
                        std::uint64_t seed, const StepObserver* observer = nullptr);

/// The first `per_class` samples of each label, in dataset order.
std::vector<Matrix> select_drift_probe(std::span<const Sample> train, int per_class);

/// Percent of `test` that predict_all classifies correctly.
double evaluate_accuracy(const ModelParams& params, std::span<const Sample> test, int threads = 1);

using ProgressCallback = std::function<void(const std::string&)>;

struct RunOptions {
  ProgressCallback progress;
  /// Test hook: rewrites the running mask set after it is rebuilt (arcl only).
  std::function<void(AttentionMaskSet&)> mask_hook;
  /// Sees every masked projection step.
  const StepObserver* observer = nullptr;
};

RunResult run_continual(const ExperimentConfig& config, std::uint64_t seed, Mode mode,
                        const RunOptions& options = {});

}  // namespace arcl
