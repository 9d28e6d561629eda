// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "arcl/attnmask.hpp"
#include "arcl/clharness.hpp"
#include "arcl/errors.hpp"
#include "arcl/grad.hpp"
#include "arcl/gradcheck.hpp"
#include "arcl/random.hpp"
#include "arcl/run_output.hpp"

using namespace arcl;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3};

int failures = 0;

void verdict(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string format(const char* spec, ...) __attribute__((format(printf, 1, 2)));
std::string format(const char* spec, ...) {
  char buf[512];
  va_list args;
  va_start(args, spec);
  std::vsnprintf(buf, sizeof buf, spec, args);
  va_end(args);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

AttentionMaskSet literal_ones(const ModelConfig& cfg) {
  AttentionMaskSet m = AttentionMaskSet::filled(cfg, 1.0);
  for (Tensor3& layer : m.layers)
    for (std::size_t h = 0; h < layer.depth(); ++h) layer[h] = Matrix(layer.rows(), layer.cols(), 1.0);
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

void gradient_fidelity() {
  const GradCheckOptions options;  // 20 tiny models, L=2 D=8 H=2 N=4
  const GradCheckReport r = run_gradcheck(options);
  const bool shape_ok = options.config.depth == 2 && options.config.embed_dim == 8 &&
                        options.config.heads == 2 && options.config.tokens() == 4 && options.models == 20;
  verdict("gradient-fidelity", r.passed && shape_ok && r.max_relative_error <= 1e-5 &&
                                   r.max_absolute_error_near_zero <= 1e-8 && r.seconds < 60.0,
          format("%zu entries, max rel err %.3g (<= 1e-5), max abs err near zero %.3g (<= 1e-8), %.1fs (< 60s)",
                 r.entries_checked, r.max_relative_error, r.max_absolute_error_near_zero, r.seconds));
}

void masking_identities(const ExperimentConfig& config, const RunResult& seq_seed1) {
  bool ones_ok = true, zeros_ok = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ModelConfig cfg = tiny_model_config();
    const ModelParams p = random_tiny_model(cfg, seed, 0.5);
    Rng rng(seed);
    const Matrix image = gaussian_matrix(static_cast<std::size_t>(cfg.image_side),
                                         static_cast<std::size_t>(cfg.image_side), 1.0, rng);
    const ForwardTrace trace = forward(image, p, 0);
    const std::vector<double> dl = cross_entropy_grad(trace.logits, static_cast<int>(seed % 3));
    const AttentionMaskSet ones = literal_ones(cfg);
    const GradientSet g1 = backward(trace, dl, p, &ones);
    ones_ok = ones_ok && *g1.masked == g1.layers;
    const AttentionMaskSet zeros = AttentionMaskSet::filled(cfg, 0.0);
    const GradientSet g0 = backward(trace, dl, p, &zeros);
    for (const ProjectionGrads& layer : *g0.masked)
      for (Projection q : {Projection::query, Projection::key, Projection::value})
        for (double v : layer[q].values()) zeros_ok = zeros_ok && v == 0.0;
  }

  RunOptions options;
  options.mask_hook = [&](AttentionMaskSet& m) { m.layers = literal_ones(config.model).layers; };
  const RunResult arc = run_continual(config, kSeeds[0], Mode::arcl, options);
  bool drift_equal = arc.report.drift.size() == seq_seed1.report.drift.size();
  for (std::size_t i = 0; drift_equal && i < arc.report.drift.size(); ++i)
    drift_equal = arc.report.drift[i].percent == seq_seed1.report.drift[i].percent;
  bool loss_equal = arc.report.training.size() == seq_seed1.report.training.size();
  for (std::size_t i = 0; loss_equal && i < arc.report.training.size(); ++i)
    loss_equal = arc.report.training[i].epoch_loss == seq_seed1.report.training[i].epoch_loss;
  const bool run_ok = arc.final_model == seq_seed1.final_model && arc.report.accuracy == seq_seed1.report.accuracy &&
                      drift_equal && loss_equal;
  verdict("masking-identities", ones_ok && zeros_ok && run_ok,
          format("all-ones masked == unmasked on 20 models: %s; all-zeros gives exact zeros: %s; "
                 "default arcl run with all-ones masks bit-identical to seq_ft (seed %llu): %s",
                 ones_ok ? "yes" : "no", zeros_ok ? "yes" : "no", static_cast<unsigned long long>(kSeeds[0]),
                 run_ok ? "yes" : "no"));
}

void update_ratio_law(const ExperimentConfig& config, const RunResult& arc_seed1) {
  // One full epoch of task 2 from the task-1 model and masks of the default run.
  const TaskStream stream = generate_task_stream(config.model, config.stream, mix_seed(kSeeds[0], 0xda7a));
  ModelParams params = arc_seed1.first_task_model;
  ExperimentConfig one_epoch = config;
  one_epoch.harness.epochs = 1;
  std::size_t checked = 0, steps = 0, clamped_or_small = 0, applied_mismatch = 0;
  double worst = 0.0, worst_from_weights = 0.0;
  const double eps = config.optim.ratio.eps_ratio;
  const double rmax = config.optim.ratio.r_max;
  const StepObserver observer = [&](const StepRecord& r) {
    ++steps;
    for (std::size_t i = 0; i < r.grad.size(); ++i) {
      if (r.after.values()[i] != r.before.values()[i] - r.lr * r.step.update.values()[i]) ++applied_mismatch;
      const double g = r.grad.values()[i];
      const double want = r.grad_masked.values()[i] / g;
      if (std::abs(g) < eps || std::abs(want) > rmax) {
        ++clamped_or_small;
        continue;
      }
      const double delta = r.step.delta.values()[i];
      if (delta == 0.0) continue;
      worst = std::max(worst, std::abs(r.step.update.values()[i] / delta - want));
      const double from_weights = (r.before.values()[i] - r.after.values()[i]) / r.lr / delta;
      worst_from_weights = std::max(worst_from_weights, std::abs(from_weights - want));
      ++checked;
    }
  };
  train_task(params, stream.tasks[1].train, 1, Mode::arcl, &arc_seed1.masks_after_task[0], one_epoch,
             kSeeds[0], &observer);
  const std::size_t expected_steps =
      static_cast<std::size_t>(config.model.depth) * 3 *
      ((stream.tasks[1].train.size() + static_cast<std::size_t>(config.harness.batch_size) - 1) /
       static_cast<std::size_t>(config.harness.batch_size));
  verdict("update-ratio-law", worst <= 1e-12 && checked > 0 && applied_mismatch == 0 && steps == expected_steps,
          format("%zu projection steps (%zu expected), %zu entries checked, %zu skipped (|grad| < 1e-12 or clamp "
                 "active), max |dW'/dW - g'/g| = %.3g (<= 1e-12), weight updates W - lr dW' exact: %s "
                 "(dW' recovered from weight differences deviates by up to %.3g, rounding of W)",
                 steps, expected_steps, checked, clamped_or_small, worst, applied_mismatch == 0 ? "yes" : "no",
                 worst_from_weights));
}

Matrix naive_product(const std::vector<Matrix>& stack, int layers) {
  const std::size_t n = stack.front().rows();
  std::vector<double> r(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) r[i * n + i] = 1.0;
  for (int l = 0; l < layers; ++l) {
    std::vector<double> next(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k)
          s += r[i * n + k] * (stack[static_cast<std::size_t>(l)](k, j) + (k == j ? 1.0 : 0.0));
        next[i * n + j] = s;
      }
    r = std::move(next);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = r[i * n + j];
  return out;
}

void rollout_threshold_oracles() {
  Rng rng(2024);
  double worst_abs = 0.0;
  int stacks = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int L = 1 + trial % 8;
    const std::size_t n = trial % 2 == 0 ? 17 : 5;
    std::vector<Matrix> stack;
    for (int l = 0; l < L; ++l) stack.push_back(softmax_rows(gaussian_matrix(n, n, 2.0, rng)));
    const std::vector<Matrix> prefixes = layerwise_rollout_all(stack);
    for (int l = 1; l <= L; ++l) {
      const Matrix want = naive_product(stack, l);
      const Matrix got = layerwise_rollout(stack, l);
      for (std::size_t i = 0; i < want.size(); ++i) {
        worst_abs = std::max(worst_abs, std::abs(got.values()[i] - want.values()[i]));
        worst_abs = std::max(worst_abs,
                             std::abs(prefixes[static_cast<std::size_t>(l - 1)].values()[i] - want.values()[i]));
      }
    }
    ++stacks;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 3);
  int agree = 0, with_ties = 0;
  const int vectors = 1000;
  for (int trial = 0; trial < vectors; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 30);
    std::vector<double> v(n);
    // Every third vector is drawn from a few levels, so second differences tie.
    for (double& x : v) x = trial % 3 == 0 ? 0.25 * level(rng) : unit(rng);
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    std::vector<double> diffs;  // diffs[i] is 1-based k = i + 2
    for (std::size_t k = 2; k + 1 <= n; ++k) diffs.push_back(s[k] - 2.0 * s[k - 1] + s[k - 2]);
    const auto first_min = std::min_element(diffs.begin(), diffs.end());
    const int k_star = static_cast<int>(first_min - diffs.begin()) + 2;
    const double tau = s[static_cast<std::size_t>(k_star - 1)];
    with_ties += std::count(diffs.begin(), diffs.end(), *first_min) > 1;
    const Threshold got = adaptive_threshold(v);
    agree += got.k_star == k_star && got.tau == tau;
  }
  verdict("rollout-threshold-oracles", worst_abs <= 1e-12 && agree == vectors && with_ties > 0,
          format("rollout: %d random stacks (L <= 8), max deviation from naive product %.3g (<= 1e-12); "
                 "threshold: %d/%d vectors match brute-force argmin, %d with tied minima",
                 stacks, worst_abs, agree, vectors, with_ties));
}

struct SeedRuns {
  RunResult seq;
  RunResult arc;
};

void forgetting_reduction(const std::map<std::uint64_t, SeedRuns>& runs, double seconds) {
  std::string detail;
  double fs_sum = 0.0, fa_sum = 0.0, as_sum = 0.0, aa_sum = 0.0;
  for (const auto& [seed, r] : runs) {
    const ForgettingMetrics& s = r.seq.report.metrics;
    const ForgettingMetrics& a = r.arc.report.metrics;
    fs_sum += s.final_average_forgetting;
    fa_sum += a.final_average_forgetting;
    as_sum += s.final_average_accuracy;
    aa_sum += a.final_average_accuracy;
    const double reduction =
        s.final_average_forgetting > 0.0 ? 1.0 - a.final_average_forgetting / s.final_average_forgetting : 0.0;
    detail += format("seed %llu: forgetting %.2f -> %.2f (%.1f%% lower), accuracy %.2f -> %.2f; ",
                     static_cast<unsigned long long>(seed), s.final_average_forgetting, a.final_average_forgetting,
                     100.0 * reduction, s.final_average_accuracy, a.final_average_accuracy);
  }
  const double n = static_cast<double>(runs.size());
  const double fs_mean = fs_sum / n, fa_mean = fa_sum / n, as_mean = as_sum / n, aa_mean = aa_sum / n;
  const double reduction = fs_mean > 0.0 ? 1.0 - fa_mean / fs_mean : 0.0;
  const bool ok = reduction >= 0.30 && aa_mean > as_mean && seconds <= 15.0 * 60.0;
  detail += format("3-seed mean: forgetting %.2f -> %.2f (%.1f%% lower, need >= 30%%), accuracy %.2f -> %.2f "
                   "(need higher); 6 runs in %.0fs (<= 900s)",
                   fs_mean, fa_mean, 100.0 * reduction, as_mean, aa_mean, seconds);
  verdict("forgetting-reduction", ok, detail);
}

void drift_ordering(const std::map<std::uint64_t, SeedRuns>& runs) {
  bool ok = true;
  int monotone = 0;
  std::string detail;
  for (const auto& [seed, r] : runs) {
    const double ds = r.seq.report.drift.back().percent;
    const double da = r.arc.report.drift.back().percent;
    ok = ok && da < ds;
    bool mono = true;
    for (std::size_t i = 1; i < r.seq.report.drift.size(); ++i)
      mono = mono && r.seq.report.drift[i].percent >= r.seq.report.drift[i - 1].percent;
    monotone += mono;
    std::string trace;
    for (const DriftPoint& p : r.seq.report.drift) trace += format(" %.2f", p.percent);
    detail += format("seed %llu: final drift seq_ft %.2f%% vs arcl %.2f%%, seq_ft trace [%s ]%s; ",
                     static_cast<unsigned long long>(seed), ds, da, trace.c_str(), mono ? "" : " (not monotone)");
  }
  detail += format("seq_ft trace monotone in %d of 3 seeds (log only)", monotone);
  verdict("drift-ordering", ok, detail);
  if (monotone < 2) std::printf("NOTE drift-ordering: seq_ft drift trace monotone in only %d of 3 seeds\n", monotone);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ARCL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism(const RunResult& arc_seed1) {
  const fs::path dir = fs::temp_directory_path() / "arcl_acceptance_determinism";
  fs::remove_all(dir);
  const int a = run_cli("run --config default --mode arcl --seed 1 --quiet --out " + (dir / "a").string());
  const int b = run_cli("run --config default --mode arcl --seed 1 --quiet --out " + (dir / "b").string());
  const std::string ma = slurp(dir / "a" / "metrics.csv");
  const std::string mb = slurp(dir / "b" / "metrics.csv");
  std::ostringstream in_process;
  write_metrics_csv(in_process, arc_seed1.report);
  const bool ok = a == 0 && b == 0 && !ma.empty() && ma == mb && ma == in_process.str();
  verdict("determinism", ok,
          format("two `run --config default --mode arcl --seed 1` invocations: exit %d/%d, metrics.csv %zu bytes, "
                 "byte-identical: %s, equal to the in-process run: %s",
                 a, b, ma.size(), ma == mb ? "yes" : "no", ma == in_process.str() ? "yes" : "no"));
  fs::remove_all(dir);
}

void data_free(const std::map<std::uint64_t, SeedRuns>& runs) {
  bool ok = true;
  std::size_t events = 0, violations = 0, late_reads = 0, probe_reads = 0, stray_probe = 0;
  for (const auto& [seed, r] : runs) {
    const DataAccessLog& log = r.arc.access_log;
    violations += log.violations();
    // Task t is finished once any read of a later task happens.
    int latest = -1;
    for (const DataAccessLog::Event& e : log.events()) {
      ++events;
      if (e.task < latest) ++late_reads;
      latest = std::max(latest, e.task);
      if (e.purpose == DataPurpose::drift_probe) {
        ++probe_reads;
        if (e.task != 0) ++stray_probe;
      }
    }
  }
  // The instrumentation itself must catch a late read.
  DataAccessLog control;
  TrainingSet set(0, {Sample{Matrix(2, 2), 0}}, &control);
  set.read(DataPurpose::training);
  set.release();
  bool caught = false;
  try {
    set.read(DataPurpose::mask_generation);
  } catch (const DataFreeViolation&) {
    caught = true;
  }
  const bool control_ok = caught && control.violations() == 1;
  ok = violations == 0 && late_reads == 0 && stray_probe == 0 && control_ok && events > 0;
  verdict("data-free", ok,
          format("3 arcl runs: %zu logged reads, %zu after release, %zu of a finished task, %zu drift-probe reads "
                 "(all task 1: %s); negative control caught: %s",
                 events, violations, late_reads, probe_reads, stray_probe == 0 ? "yes" : "no",
                 control_ok ? "yes" : "no"));
}

}  // namespace

int main() {
  try {
    const ExperimentConfig config;  // defaults
    config.validate();

    gradient_fidelity();
    rollout_threshold_oracles();

    std::map<std::uint64_t, SeedRuns> runs;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed : kSeeds) {
      runs[seed].seq = run_continual(config, seed, Mode::seq_ft);
      runs[seed].arc = run_continual(config, seed, Mode::arcl);
    }
    const double seconds = seconds_since(t0);

    masking_identities(config, runs.at(kSeeds[0]).seq);
    update_ratio_law(config, runs.at(kSeeds[0]).arc);
    forgetting_reduction(runs, seconds);
    drift_ordering(runs);
    determinism(runs.at(kSeeds[0]).arc);
    data_free(runs);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance: unexpected exception: %s\n", e.what());
    return 1;
  }
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "NOT ALL PASS", failures);
  return failures == 0 ? 0 : 1;
}
