// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification of the analytic projection gradients over a
// batch of seeded tiny models.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "arcl/grad.hpp"
#include "arcl/vit.hpp"

namespace arcl {

/// L=2, D=8, H=2, N=4.
ModelConfig tiny_model_config();

/// A tiny model whose every frozen tensor (LayerNorm affine and FFN biases
/// included) is randomized so the gradient chain is exercised end to end.
ModelParams random_tiny_model(const ModelConfig& config, std::uint64_t seed, double init_std);

struct GradCheckOptions {
  ModelConfig config = tiny_model_config();
  int models = 20;
  std::uint64_t seed = 1;
  double init_std = 0.5;
  double eps = 1e-5;
  double rel_tolerance = 1e-5;
  /// Entries whose magnitude is below this are compared absolutely against it.
  double abs_floor = 1e-8;
  /// Test hook: perturbs one analytic entry per model so the check must fail.
  bool corrupt = false;
};

struct GradCheckEntry {
  int model = -1;
  std::size_t layer = 0;
  Projection projection = Projection::query;
  std::size_t row = 0;
  std::size_t col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;  // relative, or absolute for near-zero entries
  bool absolute = false;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error_near_zero = 0.0;
  std::size_t entries_checked = 0;
  std::vector<GradCheckEntry> worst_per_layer;
  double seconds = 0.0;
  bool passed = false;
};

GradCheckReport run_gradcheck(const GradCheckOptions& options);
void print_gradcheck_report(std::ostream& out, const GradCheckReport& report,
                            const GradCheckOptions& options);

}  // namespace arcl
