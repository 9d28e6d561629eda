// SPDX-License-Identifier: Apache-2.0
//
// Files written into a run directory:
//   metrics.csv    accuracy matrix, one row per finished task
//   summary.txt    final accuracy / forgetting / drift, key = value
//   drift.csv      task,drift_percent
//   loss.csv       task,epoch,loss
//   manifest.ini   full config (loadable with --config) + version comment
//   model_task1.ckpt, model_final.ckpt
//   masks/task<t>/mask_l<l>_h<h>.{csv,pgm}   (arcl only)

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "arcl/attnmask.hpp"
#include "arcl/clharness.hpp"
#include "arcl/run_config.hpp"

namespace arcl {

void write_metrics_csv(std::ostream& out, const MetricsReport& report);
void write_summary(std::ostream& out, const MetricsReport& report);
void write_drift_csv(std::ostream& out, const MetricsReport& report);
void write_loss_csv(std::ostream& out, const MetricsReport& report);
std::string manifest_text(const RunConfig& config);

/// Image-token part of a broadcast mask (row 0, columns 1..N) as a sqrt(N) grid.
Matrix mask_grid(const Matrix& extended);

void write_mask_heatmaps(const std::filesystem::path& dir, const AttentionMaskSet& masks);

/// `config` is echoed into the manifest with its mode set to `run.report.mode`.
void write_run(const std::filesystem::path& dir, const RunConfig& config, const RunResult& run);

}  // namespace arcl
