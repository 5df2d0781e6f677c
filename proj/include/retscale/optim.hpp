#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

// Derivative-free minimizers shared by the law-fitting and budget modules.
// Both are deterministic: same inputs, same iterates, same result.

#include <functional>
#include <vector>

namespace retscale::optim {

/// Golden-section search on [lo, hi]; assumes a unimodal objective.
/// Returns the midpoint of the final bracket once it is narrower than
/// abs_tol.
double golden_section_minimize(const std::function<double(double)>& f,
                               double lo, double hi, double abs_tol);

struct NelderMeadOptions {
  int max_evaluations = 10000;
  double f_tol_abs = 1e-14;
  double f_tol_rel = 1e-12;
  double x_tol = 1e-10;
};

struct NelderMeadResult {
  std::vector<double> best;
  double best_value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead simplex (reflection 1, expansion 2, contraction 0.5,
/// shrink 0.5). The simplex starts at `start` with one vertex displaced per
/// coordinate by `initial_step`. Converged means the value spread across the
/// simplex fell below f_tol_abs + f_tol_rel*|f_best|, or the vertex spread
/// fell below x_tol.
NelderMeadResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& start, const std::vector<double>& initial_step,
    const NelderMeadOptions& options = {});

}  // namespace retscale::optim
