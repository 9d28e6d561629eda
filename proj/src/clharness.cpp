// SPDX-License-Identifier: Apache-2.0
#include "arcl/clharness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "arcl/errors.hpp"
#include "arcl/parallel.hpp"
#include "arcl/random.hpp"

namespace arcl {

const char* mode_name(Mode m) noexcept { return m == Mode::arcl ? "arcl" : "seq_ft"; }

Mode parse_mode(const std::string& text) {
  if (text == "arcl") return Mode::arcl;
  if (text == "seq_ft" || text == "seqft" || text == "seq-ft") return Mode::seq_ft;
  throw ConfigError("mode", "expected arcl or seq_ft, got '" + text + "'");
}

void HarnessConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (drift_probe_per_class < 1) throw ConfigError("drift_probe_per_class", "must be >= 1");
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
}

void ExperimentConfig::validate() const {
  model.validate();
  stream.validate();
  harness.validate();
  if (harness.drift_probe_per_class > stream.train_per_class) {
    throw ConfigError("drift_probe_per_class", "exceeds train_per_class");
  }
  if (!(optim.lr_projection > 0.0)) throw ConfigError("lr_projection", "must be > 0");
  if (!(optim.lr_classifier > 0.0)) throw ConfigError("lr_classifier", "must be > 0");
  if (!(optim.ratio.eps_ratio > 0.0)) throw ConfigError("eps_ratio", "must be > 0");
  if (!(optim.ratio.r_max > 0.0)) throw ConfigError("r_max", "must be > 0");
  if (!(optim.adam.beta1 >= 0.0 && optim.adam.beta1 < 1.0)) throw ConfigError("beta1", "must be in [0, 1)");
  if (!(optim.adam.beta2 >= 0.0 && optim.adam.beta2 < 1.0)) throw ConfigError("beta2", "must be in [0, 1)");
  if (!(optim.adam.eps > 0.0)) throw ConfigError("adam_eps", "must be > 0");
}

ForgettingMetrics compute_metrics(const AccuracyMatrix& a) {
  const std::size_t tasks = a.size();
  if (tasks == 0) throw UsageError("compute_metrics: empty accuracy matrix");
  for (std::size_t t = 0; t < tasks; ++t) {
    if (a[t].size() != t + 1) {
      throw UsageError("compute_metrics: row " + std::to_string(t + 1) + " must have " +
                       std::to_string(t + 1) + " entries");
    }
  }
  ForgettingMetrics m;
  const auto& last = a.back();
  m.final_average_accuracy = std::accumulate(last.begin(), last.end(), 0.0) / static_cast<double>(tasks);
  if (tasks > 1) {
    double total = 0.0;
    for (std::size_t j = 0; j + 1 < tasks; ++j) {
      double peak = a[j][j];
      for (std::size_t t = j; t < tasks; ++t) peak = std::max(peak, a[t][j]);
      total += peak - last[j];
    }
    m.final_average_forgetting = total / static_cast<double>(tasks - 1);
  }
  return m;
}

bool MetricsReport::operator==(const MetricsReport& o) const {
  if (mode != o.mode || seed != o.seed || accuracy != o.accuracy ||
      metrics.final_average_accuracy != o.metrics.final_average_accuracy ||
      metrics.final_average_forgetting != o.metrics.final_average_forgetting ||
      drift.size() != o.drift.size() || training.size() != o.training.size()) {
    return false;
  }
  for (std::size_t i = 0; i < drift.size(); ++i) {
    if (drift[i].task != o.drift[i].task || drift[i].percent != o.drift[i].percent) return false;
  }
  for (std::size_t i = 0; i < training.size(); ++i) {
    if (training[i].epoch_loss != o.training[i].epoch_loss) return false;
  }
  return true;
}

TaskTrainLog train_task(ModelParams& params, std::span<const Sample> train, int task_id, Mode mode,
                        const AttentionMaskSet* masks, const ExperimentConfig& config,
                        std::uint64_t seed, const StepObserver* observer) {
  const int per_task = params.config.classes_per_task;
  if (task_id < 0 || task_id > params.learned_tasks()) {
    throw UsageError("train_task: tasks must be trained in order");
  }
  const bool masked = mode == Mode::arcl && task_id > 0;
  if (masked && masks == nullptr) {
    throw UsageError("train_task: arcl mode needs the mask set of previous tasks for task " +
                     std::to_string(task_id + 1));
  }
  if (!masked) masks = nullptr;
  if (masks != nullptr) masks->require_shape(params.config);
  if (train.empty()) throw UsageError("train_task: empty training set");
  if (task_id == params.learned_tasks()) params.add_classifier(mix_seed(seed, 0xc1a5));

  ModelOptimizer optimizer(params, config.optim);
  TaskTrainLog log;
  std::vector<std::size_t> order(train.size());
  const auto batch_size = static_cast<std::size_t>(config.harness.batch_size);

  for (int epoch = 0; epoch < config.harness.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(seed, 0xe90c0000ULL + static_cast<std::uint64_t>(task_id) * 4096 +
                               static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - start);
      std::vector<GradientSet> per_sample(count);
      std::vector<double> losses(count, 0.0);
      parallel_for(count, config.harness.threads, [&](std::size_t i) {
        const Sample& s = train[order[start + i]];
        const int local = s.label - task_id * per_task;
        if (local < 0 || local >= per_task) throw UsageError("train_task: sample label outside task");
        const ForwardTrace trace = forward(s.image, params, task_id);
        losses[i] = cross_entropy(trace.logits, local);
        std::vector<double> dlogits = cross_entropy_grad(trace.logits, local);
        for (double& g : dlogits) g /= static_cast<double>(count);
        per_sample[i] = backward(trace, dlogits, params, masks);
      });
      GradientSet batch = std::move(per_sample.front());
      for (std::size_t i = 1; i < count; ++i) batch.accumulate(per_sample[i]);
      for (double l : losses) epoch_loss += l;
      optimizer.step(params, batch, observer);
    }
    log.epoch_loss.push_back(epoch_loss / static_cast<double>(train.size()));
  }
  return log;
}

std::vector<Matrix> select_drift_probe(std::span<const Sample> train, int per_class) {
  std::map<int, int> taken;
  std::vector<Matrix> probe;
  for (const Sample& s : train) {
    int& n = taken[s.label];
    if (n < per_class) {
      probe.push_back(s.image);
      ++n;
    }
  }
  return probe;
}

double evaluate_accuracy(const ModelParams& params, std::span<const Sample> test, int threads) {
  if (test.empty()) throw UsageError("evaluate_accuracy: empty test set");
  std::vector<int> hit(test.size(), 0);
  parallel_for(test.size(), threads, [&](std::size_t i) {
    hit[i] = predict_all(test[i].image, params) == test[i].label ? 1 : 0;
  });
  return 100.0 * std::accumulate(hit.begin(), hit.end(), 0) / static_cast<double>(test.size());
}

RunResult run_continual(const ExperimentConfig& config, std::uint64_t seed, Mode mode,
                        const RunOptions& options) {
  config.validate();
  const int tasks = config.model.tasks;
  const int threads = config.harness.threads;

  TaskStream stream = generate_task_stream(config.model, config.stream, mix_seed(seed, 0xda7a));
  RunResult result;
  result.report.mode = mode;
  result.report.seed = seed;
  result.final_model = ModelParams::init(config.model, mix_seed(seed, 0x40de1));
  ModelParams& params = result.final_model;

  std::vector<Matrix> drift_probe;
  AttentionMaskSet masks;

  for (int t = 0; t < tasks; ++t) {
    TrainingSet train(t, std::move(stream.tasks[static_cast<std::size_t>(t)].train), &result.access_log);

    if (t == 0) {
      drift_probe = select_drift_probe(train.read(DataPurpose::drift_probe), config.harness.drift_probe_per_class);
    }

    result.report.training.push_back(train_task(params, train.read(DataPurpose::training), t, mode,
                                                mode == Mode::arcl && t > 0 ? &masks : nullptr, config,
                                                seed, options.observer));
    if (t == 0) result.first_task_model = params;

    std::vector<double> row;
    for (int j = 0; j <= t; ++j) {
      row.push_back(evaluate_accuracy(params, stream.tasks[static_cast<std::size_t>(j)].test, threads));
    }
    result.report.accuracy.push_back(row);

    if (t > 0) {
      result.report.drift.push_back(
          {t + 1, attention_drift(params, result.first_task_model, drift_probe, threads)});
    }

    if (mode == Mode::arcl) {
      const std::vector<Matrix> images = images_of(train.read(DataPurpose::mask_generation));
      masks = build_task_masks(params, images, t, std::move(masks), threads);
      if (options.mask_hook) options.mask_hook(masks);
      result.masks_after_task.push_back(masks);
    }
    train.release();

    if (options.progress) {
      std::ostringstream msg;
      msg << mode_name(mode) << " seed " << seed << " task " << t + 1 << "/" << tasks
          << ": final loss " << result.report.training.back().epoch_loss.back() << ", acc";
      for (double a : row) msg << " " << a;
      if (t > 0) msg << ", drift " << result.report.drift.back().percent << "%";
      options.progress(msg.str());
    }
  }

  result.report.metrics = compute_metrics(result.report.accuracy);
  return result;
}

}  // namespace arcl
