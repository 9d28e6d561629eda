// SPDX-License-Identifier: Apache-2.0
#include "arcl/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "arcl/random.hpp"

namespace arcl {

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.image_side = 4;
  c.patch_side = 2;
  c.embed_dim = 8;
  c.depth = 2;
  c.heads = 2;
  c.ffn_hidden = 16;
  c.classes_per_task = 3;
  c.tasks = 1;
  return c;
}

ModelParams random_tiny_model(const ModelConfig& config, std::uint64_t seed, double init_std) {
  ModelConfig c = config;
  c.init_std = init_std;
  ModelParams p = ModelParams::init(c, seed);
  Rng rng(mix_seed(seed, 0x7e57));
  std::normal_distribution<double> jitter(0.0, 0.2);
  auto perturb = [&](Matrix& m, double center) {
    for (double& v : m.values()) v = center + jitter(rng);
  };
  for (BlockParams& b : p.blocks) {
    perturb(b.ln1.scale, 1.0);
    perturb(b.ln1.shift, 0.0);
    perturb(b.ln2.scale, 1.0);
    perturb(b.ln2.shift, 0.0);
    perturb(b.ffn_b1, 0.0);
    perturb(b.ffn_b2, 0.0);
  }
  perturb(p.final_norm.scale, 1.0);
  perturb(p.final_norm.shift, 0.0);
  p.add_classifier(seed);
  perturb(p.classifiers.front().bias, 0.0);
  return p;
}

GradCheckReport run_gradcheck(const GradCheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckReport report;
  report.worst_per_layer.resize(static_cast<std::size_t>(options.config.depth));

  for (int m = 0; m < options.models; ++m) {
    const std::uint64_t seed = mix_seed(options.seed, static_cast<std::uint64_t>(m));
    const ModelParams params = random_tiny_model(options.config, seed, options.init_std);
    Rng rng(mix_seed(seed, 0x13a9e));
    std::uniform_real_distribution<double> pixel(-1.0, 1.0);
    Matrix image(static_cast<std::size_t>(options.config.image_side),
                 static_cast<std::size_t>(options.config.image_side));
    for (double& v : image.values()) v = pixel(rng);
    const int label = std::uniform_int_distribution<int>(0, options.config.classes_per_task - 1)(rng);

    const ForwardTrace trace = forward(image, params, 0);
    GradientSet grads = backward(trace, cross_entropy_grad(trace.logits, label), params);
    if (options.corrupt) {
      double& entry = grads.layers.back().w_v.values()[static_cast<std::size_t>(m) % grads.layers.back().w_v.size()];
      entry = entry * 1.01 + 1e-3;
    }

    for (std::size_t layer = 0; layer < params.blocks.size(); ++layer) {
      for (Projection which : {Projection::query, Projection::key, Projection::value}) {
        const Matrix numeric = finite_diff_oracle(image, label, params, 0, layer, which, options.eps);
        const Matrix& analytic = grads.layers[layer][which];
        for (std::size_t i = 0; i < numeric.size(); ++i) {
          const double a = analytic.values()[i];
          const double n = numeric.values()[i];
          const double magnitude = std::max(std::abs(a), std::abs(n));
          GradCheckEntry e{m, layer, which, i / numeric.cols(), i % numeric.cols(), a, n, 0.0, false};
          if (magnitude < options.abs_floor) {
            e.error = std::abs(a - n);
            e.absolute = true;
            report.max_absolute_error_near_zero = std::max(report.max_absolute_error_near_zero, e.error);
          } else {
            e.error = std::abs(a - n) / magnitude;
            report.max_relative_error = std::max(report.max_relative_error, e.error);
          }
          ++report.entries_checked;
          // Rank absolute misses on the relative scale they are judged against.
          const double rank = e.absolute ? e.error / options.abs_floor * options.rel_tolerance : e.error;
          GradCheckEntry& worst = report.worst_per_layer[layer];
          const double worst_rank =
              worst.absolute ? worst.error / options.abs_floor * options.rel_tolerance : worst.error;
          if (worst.model < 0 || rank > worst_rank) worst = e;
        }
      }
    }
  }

  report.passed = report.max_relative_error <= options.rel_tolerance &&
                  report.max_absolute_error_near_zero <= options.abs_floor;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void print_gradcheck_report(std::ostream& out, const GradCheckReport& report,
                            const GradCheckOptions& options) {
  const auto flags = out.flags();
  out << "gradcheck: " << options.models << " models, L=" << options.config.depth
      << " D=" << options.config.embed_dim << " H=" << options.config.heads
      << " N=" << options.config.tokens() << ", eps=" << options.eps << "\n";
  out << std::scientific << std::setprecision(3);
  out << "entries checked: " << report.entries_checked << "\n";
  out << "max relative error: " << report.max_relative_error << " (tolerance "
      << options.rel_tolerance << ")\n";
  out << "max absolute error on near-zero entries: " << report.max_absolute_error_near_zero
      << " (floor " << options.abs_floor << ")\n";
  for (std::size_t l = 0; l < report.worst_per_layer.size(); ++l) {
    const GradCheckEntry& e = report.worst_per_layer[l];
    out << "layer " << l + 1 << " worst: model " << e.model << " " << projection_name(e.projection)
        << "[" << e.row << "," << e.col << "] analytic " << e.analytic << " numeric " << e.numeric
        << (e.absolute ? " abs err " : " rel err ") << e.error << "\n";
  }
  out << std::fixed << std::setprecision(2) << "elapsed: " << report.seconds << " s\n";
  out << (report.passed ? "PASS" : "FAIL") << "\n";
  out.flags(flags);
}

}  // namespace arcl
