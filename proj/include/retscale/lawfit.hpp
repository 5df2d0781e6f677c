#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

/**
 * @file lawfit.hpp
 * @brief Power-law fits of loss against model size or data size, and the
 * joint model/data law, all with irreducible floors.
 *
 * Single-variable form:  L(x) = (scale/x)^exponent + floor
 * Joint form:            L(n,d) = [ (a/n)^(alpha/beta) + b/d ]^beta + floor
 *
 * Fits work in log-residual space, i.e. on log(loss - floor). The single-law
 * fitter runs a golden-section search over the floor with ordinary least
 * squares inside; the joint fitter runs multi-start Nelder-Mead on
 * (log a, log b, log alpha, log beta, floor). Both are deterministic.
 *
 * The joint fit's contract is prediction accuracy, not coefficient recovery:
 * (a, alpha) trade off along ridges, so tests should compare predictions.
 */

#include <stdexcept>
#include <vector>

namespace retscale::lawfit {

/// One (size, loss) observation; x is a model size in non-embedding
/// parameters or a data size in annotated pairs.
struct Observation {
  double x = 0.0;
  double loss = 0.0;
};

enum class FitSpace { kLogResidual };

struct PowerLawFit {
  double scale = 1.0;     // > 0
  double exponent = 1.0;  // > 0
  double floor = 0.0;     // >= 0, below the smallest fitted loss
  double r_squared = 0.0;
  FitSpace fit_space = FitSpace::kLogResidual;
};

struct JointObservation {
  double n = 0.0;
  double d = 0.0;
  double loss = 0.0;
};

struct JointLawFit {
  double a = 1.0;
  double b = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  double floor = 0.0;
  double rmse = 0.0;  // in the log space the fit minimizes
};

/// Thrown when no Nelder-Mead start converges within its evaluation budget;
/// carries the best parameters seen so far.
class FitNonConvergence : public std::runtime_error {
 public:
  FitNonConvergence(const std::string& what, JointLawFit best_so_far)
      : std::runtime_error(what), best_so_far_(best_so_far) {}
  const JointLawFit& best_so_far() const { return best_so_far_; }

 private:
  JointLawFit best_so_far_;
};

double predict_single(const PowerLawFit& fit, double x);

/**
 * Least squares of log(loss - floor) on log(x), with the floor chosen by
 * golden-section search over [0, 0.999 * min(loss)] to absolute tolerance
 * 1e-6, minimizing the squared residuals. r_squared is reported in the same
 * log-residual space at the selected floor.
 *
 * Needs >= 3 points with >= 3 distinct x. A best-fit slope >= 0 is rejected:
 * "non-decreasing trend, power law with positive exponent not supported".
 * Points are canonicalized internally, so the result is invariant to input
 * order.
 */
PowerLawFit fit_single_law(const std::vector<Observation>& points);

double predict_joint(const JointLawFit& fit, double n, double d);

/**
 * Minimizes sum of squared log-loss residuals by Nelder-Mead over
 * (log a, log b, log alpha, log beta, floor), floor clamped to
 * [0, 0.999 * min(loss)]. Eight deterministic starts are derived from the
 * marginal single-law fits (floor candidates 0 / half / full marginal
 * floors; exponents from the marginal fits). Needs >= 8 points spanning
 * >= 3 distinct n and >= 3 distinct d. Each start gets at most 10,000
 * objective evaluations; if none converges, throws FitNonConvergence.
 */
JointLawFit fit_joint_law(const std::vector<JointObservation>& points);

/// 1 - SS_res / SS_tot. Observed values must not be constant.
double r_squared(const std::vector<double>& observed,
                 const std::vector<double>& predicted);

}  // namespace retscale::lawfit
