// SPDX-License-Identifier: Apache-2.0
//
// arcl: run continual-learning experiments, the gradient oracle, and
// attention exports.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
// (NaN/Inf, or the gradient check missed its tolerance).

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "arcl/attnmask.hpp"
#include "arcl/checkpoint.hpp"
#include "arcl/clharness.hpp"
#include "arcl/errors.hpp"
#include "arcl/gradcheck.hpp"
#include "arcl/heatmap.hpp"
#include "arcl/random.hpp"
#include "arcl/run_config.hpp"
#include "arcl/run_output.hpp"

namespace fs = std::filesystem;
using namespace arcl;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNumerical = 2;

fs::path output_root() {
  const char* env = std::getenv("ARCL_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string comparison_text(const MetricsReport& seq, const MetricsReport& arc) {
  std::ostringstream out;
  const double fs_ = seq.metrics.final_average_forgetting;
  const double fa = arc.metrics.final_average_forgetting;
  out << "seed = " << seq.seed << '\n';
  out << "seq_ft_final_average_accuracy = " << fmt(seq.metrics.final_average_accuracy) << '\n';
  out << "arcl_final_average_accuracy = " << fmt(arc.metrics.final_average_accuracy) << '\n';
  out << "seq_ft_final_average_forgetting = " << fmt(fs_) << '\n';
  out << "arcl_final_average_forgetting = " << fmt(fa) << '\n';
  if (fs_ > 0.0) out << "forgetting_relative_reduction_percent = " << fmt(100.0 * (fs_ - fa) / fs_) << '\n';
  if (!seq.drift.empty() && !arc.drift.empty()) {
    out << "seq_ft_final_drift_percent = " << fmt(seq.drift.back().percent) << '\n';
    out << "arcl_final_drift_percent = " << fmt(arc.drift.back().percent) << '\n';
  }
  return out.str();
}

int cmd_run(const std::string& config_path, const Overrides& overrides, bool quiet) {
  const RunConfig config = load_run_config(config_path, overrides);
  const fs::path dir = config.out.empty()
                           ? output_root() / (std::string(run_mode_name(config.mode)) + "_seed" +
                                              std::to_string(config.seed))
                           : fs::path(config.out);
  RunOptions options;
  options.progress = [quiet](const std::string& msg) {
    if (!quiet) std::cerr << msg << '\n';
  };

  std::vector<Mode> modes;
  if (config.mode == RunMode::both) {
    modes = {Mode::seq_ft, Mode::arcl};
  } else {
    modes = {config.mode == RunMode::arcl ? Mode::arcl : Mode::seq_ft};
  }
  std::map<Mode, MetricsReport> reports;
  for (Mode m : modes) {
    const RunResult result = run_continual(config.experiment, config.seed, m, options);
    const fs::path target = config.mode == RunMode::both ? dir / mode_name(m) : dir;
    write_run(target, config, result);
    reports[m] = result.report;
    std::cout << mode_name(m) << ": final average accuracy "
              << fmt(result.report.metrics.final_average_accuracy, "%.2f") << "%, forgetting "
              << fmt(result.report.metrics.final_average_forgetting, "%.2f");
    if (!result.report.drift.empty()) std::cout << ", final drift " << fmt(result.report.drift.back().percent, "%.2f") << "%";
    std::cout << " -> " << target.string() << '\n';
  }
  if (config.mode == RunMode::both) {
    std::ofstream out(dir / "comparison.txt", std::ios::binary);
    out << comparison_text(reports.at(Mode::seq_ft), reports.at(Mode::arcl));
    if (!out) throw IoError("write failed: " + (dir / "comparison.txt").string());
  }
  return kOk;
}

int cmd_gradcheck(const GradCheckOptions& options) {
  const GradCheckReport report = run_gradcheck(options);
  print_gradcheck_report(std::cout, report, options);
  return report.passed ? kOk : kNumerical;
}

/// Class-attention map of one layer, heads averaged: raw (row 0 of S^l) or rolled out.
Matrix head_mean_class_attention(const ForwardTrace& trace, std::size_t layer, bool rollout) {
  if (rollout) return mean_class_attention(trace, static_cast<int>(layer) + 1);
  const std::size_t heads = trace.layers[layer].heads.size();
  Matrix sum;
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix u = extract_class_attention(trace.layers[layer].heads[h].s).grid;
    sum = h == 0 ? u : add(sum, u);
  }
  return scale(sum, 1.0 / static_cast<double>(heads));
}

int cmd_export_attention(const std::string& checkpoint, int image_index, const std::string& config_path,
                         const Overrides& overrides, std::string out_dir) {
  if (!fs::is_regular_file(checkpoint)) {
    throw CheckpointError("checkpoint not found: " + checkpoint);
  }
  const ModelParams params = load_checkpoint(checkpoint);
  const RunConfig config = load_run_config(config_path, overrides);

  const TaskStream stream = generate_task_stream(params.config, config.experiment.stream,
                                                 mix_seed(config.seed, 0xda7a));
  std::vector<const Sample*> test;
  for (const TaskData& t : stream.tasks)
    for (const Sample& s : t.test) test.push_back(&s);
  if (image_index < 0 || static_cast<std::size_t>(image_index) >= test.size()) {
    throw ConfigError("image-index", "must be in [0, " + std::to_string(test.size()) + ")");
  }
  const ForwardTrace trace = forward_backbone(test[static_cast<std::size_t>(image_index)]->image, params);
  const SampleMasks masks = sample_masks(trace);

  // Everything is computed before the directory is touched.
  std::vector<std::pair<std::string, Matrix>> files;
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const std::string tag = std::to_string(l + 1);
    files.emplace_back("u_raw_l" + tag, head_mean_class_attention(trace, l, false));
    files.emplace_back("u_rollout_l" + tag, head_mean_class_attention(trace, l, true));
    for (std::size_t h = 0; h < masks[l].depth(); ++h) {
      files.emplace_back("mask_l" + tag + "_h" + std::to_string(h + 1), mask_grid(masks[l][h]));
    }
  }

  if (out_dir.empty()) out_dir = (output_root() / ("attention_" + std::to_string(image_index))).string();
  fs::create_directories(out_dir);
  for (const auto& [stem, m] : files) {
    write_csv(fs::path(out_dir) / (stem + ".csv"), m);
    write_pgm(fs::path(out_dir) / (stem + ".pgm"), m);
  }
  std::cout << "label " << test[static_cast<std::size_t>(image_index)]->label << ": wrote "
            << files.size() * 2 << " files to " << out_dir << '\n';
  return kOk;
}

int cmd_drift(const std::string& current, const std::string& reference, const std::string& config_path,
              const Overrides& overrides) {
  for (const std::string& p : {current, reference}) {
    if (!fs::is_regular_file(p)) throw CheckpointError("checkpoint not found: " + p);
  }
  const ModelParams now = load_checkpoint(current);
  const ModelParams ref = load_checkpoint(reference);
  const RunConfig config = load_run_config(config_path, overrides);
  const TaskStream stream = generate_task_stream(ref.config, config.experiment.stream,
                                                 mix_seed(config.seed, 0xda7a));
  const std::vector<Matrix> probe =
      select_drift_probe(stream.tasks.front().train, config.experiment.harness.drift_probe_per_class);
  const double drift = attention_drift(now, ref, probe, config.experiment.harness.threads);
  std::cout << "drift_percent = " << fmt(drift) << '\n';
  return kOk;
}

/// Registers `--<key>` for every config key on `cmd`; filled values become overrides.
void add_config_overrides(CLI::App* cmd, std::map<std::string, std::string>& values) {
  for (const auto& [section, key] : config_keys()) {
    cmd->add_option("--" + key, values[key], "[" + section + "] override")->group("Config overrides");
  }
}

Overrides collect(const CLI::App* cmd, const std::map<std::string, std::string>& values) {
  Overrides out;
  for (const auto& [section, key] : config_keys()) {
    if (cmd->count("--" + key) > 0) out.emplace_back(key, values.at(key));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-retaining continual learning for a small ViT"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ARCL_VERSION);

  std::string config_path = "default";
  bool quiet = false;
  std::map<std::string, std::string> run_values;
  CLI::App* run = app.add_subcommand("run", "Train the task stream (seq_ft, arcl or both) and write results");
  run->add_option("--config", config_path, "INI config file, or 'default'");
  run->add_flag("--quiet", quiet, "No per-task progress on stderr");
  add_config_overrides(run, run_values);

  GradCheckOptions gc;
  CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference check of the analytic projection gradients");
  grad->add_option("--models", gc.models, "Number of seeded tiny models")->check(CLI::PositiveNumber);
  grad->add_option("--seed", gc.seed, "Base seed");
  grad->add_flag("--corrupt-gradient", gc.corrupt, "Test hook: perturb one analytic entry per model");

  std::string checkpoint;
  int image_index = 0;
  std::string export_out;
  std::string export_config = "default";
  std::map<std::string, std::string> export_values;
  CLI::App* exp = app.add_subcommand("export-attention", "Write class-attention and mask heatmaps for one test image");
  exp->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  exp->add_option("--image-index", image_index, "Index into the test images of all tasks, in task order");
  exp->add_option("--out-dir", export_out, "Output directory");
  exp->add_option("--config", export_config, "Config whose [data] section and seed define the images");
  add_config_overrides(exp, export_values);

  std::string current;
  std::string reference;
  std::string drift_config = "default";
  std::map<std::string, std::string> drift_values;
  CLI::App* drift = app.add_subcommand("drift", "Attention drift of one checkpoint against a task-1 checkpoint");
  drift->add_option("--current", current, "Checkpoint after later tasks")->required();
  drift->add_option("--reference", reference, "Checkpoint after task 1")->required();
  drift->add_option("--config", drift_config, "Config whose [data] section and seed define the probe");
  add_config_overrides(drift, drift_values);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(config_path, collect(run, run_values), quiet);
    if (*grad) return cmd_gradcheck(gc);
    if (*exp) return cmd_export_attention(checkpoint, image_index, export_config,
                                          collect(exp, export_values), export_out);
    if (*drift) return cmd_drift(current, reference, drift_config, collect(drift, drift_values));
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
