// SPDX-License-Identifier: Apache-2.0
#include "arcl/run_output.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>

#include "arcl/checkpoint.hpp"
#include "arcl/errors.hpp"
#include "arcl/heatmap.hpp"

#ifndef ARCL_VERSION
#define ARCL_VERSION "unknown"
#endif

namespace arcl {

namespace {

std::string fixed6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  body(out);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  const std::size_t tasks = report.accuracy.size();
  out << "after_task";
  for (std::size_t j = 0; j < tasks; ++j) out << ",task_" << j + 1;
  out << '\n';
  for (std::size_t t = 0; t < tasks; ++t) {
    out << t + 1;
    for (std::size_t j = 0; j < tasks; ++j) {
      out << ',';
      if (j < report.accuracy[t].size()) out << fixed6(report.accuracy[t][j]);
    }
    out << '\n';
  }
}

void write_summary(std::ostream& out, const MetricsReport& report) {
  out << "mode = " << mode_name(report.mode) << '\n';
  out << "seed = " << report.seed << '\n';
  out << "tasks = " << report.accuracy.size() << '\n';
  out << "final_average_accuracy = " << fixed6(report.metrics.final_average_accuracy) << '\n';
  out << "final_average_forgetting = " << fixed6(report.metrics.final_average_forgetting) << '\n';
  if (!report.drift.empty()) {
    out << "final_drift_percent = " << fixed6(report.drift.back().percent) << '\n';
  }
  for (std::size_t t = 0; t < report.training.size(); ++t) {
    const auto& losses = report.training[t].epoch_loss;
    if (losses.empty()) continue;
    out << "task_" << t + 1 << "_loss_first_epoch = " << fixed6(losses.front()) << '\n';
    out << "task_" << t + 1 << "_loss_last_epoch = " << fixed6(losses.back()) << '\n';
  }
}

void write_drift_csv(std::ostream& out, const MetricsReport& report) {
  out << "task,drift_percent\n";
  for (const DriftPoint& d : report.drift) out << d.task << ',' << fixed6(d.percent) << '\n';
}

void write_loss_csv(std::ostream& out, const MetricsReport& report) {
  char buf[32];
  out << "task,epoch,loss\n";
  for (std::size_t t = 0; t < report.training.size(); ++t) {
    const auto& losses = report.training[t].epoch_loss;
    for (std::size_t e = 0; e < losses.size(); ++e) {
      std::snprintf(buf, sizeof buf, "%.17g", losses[e]);
      out << t + 1 << ',' << e + 1 << ',' << buf << '\n';
    }
  }
}

std::string manifest_text(const RunConfig& config) {
  return "; arcl " ARCL_VERSION " run manifest. Reproduce with: arcl run --config <this file>\n" +
         to_ini(config);
}

Matrix mask_grid(const Matrix& extended) {
  const std::size_t n = extended.cols() - 1;
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (extended.cols() < 2 || side * side != n) throw DimensionError("mask_grid: N is not a square");
  Matrix grid(side, side);
  for (std::size_t i = 0; i < n; ++i) grid.values()[i] = extended(0, i + 1);
  return grid;
}

void write_mask_heatmaps(const std::filesystem::path& dir, const AttentionMaskSet& masks) {
  std::filesystem::create_directories(dir);
  for (std::size_t l = 0; l < masks.layers.size(); ++l) {
    for (std::size_t h = 0; h < masks.layers[l].depth(); ++h) {
      const Matrix grid = mask_grid(masks.layers[l][h]);
      const std::string stem = "mask_l" + std::to_string(l + 1) + "_h" + std::to_string(h + 1);
      write_csv(dir / (stem + ".csv"), grid);
      write_pgm(dir / (stem + ".pgm"), grid);
    }
  }
}

void write_run(const std::filesystem::path& dir, const RunConfig& config, const RunResult& run) {
  std::filesystem::create_directories(dir);
  const MetricsReport& report = run.report;

  RunConfig echo = config;
  echo.mode = report.mode == Mode::arcl ? RunMode::arcl : RunMode::seq_ft;
  echo.seed = report.seed;
  echo.out = dir.string();

  write_file(dir / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, report); });
  write_file(dir / "summary.txt", [&](std::ostream& o) { write_summary(o, report); });
  write_file(dir / "drift.csv", [&](std::ostream& o) { write_drift_csv(o, report); });
  write_file(dir / "loss.csv", [&](std::ostream& o) { write_loss_csv(o, report); });
  write_file(dir / "manifest.ini", [&](std::ostream& o) { o << manifest_text(echo); });
  save_checkpoint(dir / "model_task1.ckpt", run.first_task_model);
  save_checkpoint(dir / "model_final.ckpt", run.final_model);
  for (std::size_t t = 0; t < run.masks_after_task.size(); ++t) {
    write_mask_heatmaps(dir / "masks" / ("task" + std::to_string(t + 1)), run.masks_after_task[t]);
  }
}

}  // namespace arcl
