#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

/**
 * @file budget.hpp
 * @brief Lifecycle cost model and budget-constrained (model size, data size)
 * allocation.
 *
 * Total cost is linear: z_data*D + z_train*N (+ z_infer*N when inference is
 * included). For a fixed budget the optimizer picks N to minimize the joint
 * law's predicted loss at the budget-exhausting D; the loss is strictly
 * decreasing in D, so the constraint always binds. N and D are treated as
 * continuous.
 *
 * The loss landscape near the optimum is extremely flat (losses differ by
 * under a percent across an order of magnitude in N), so tests compare
 * against a brute-force grid oracle rather than pin an exact argmin.
 */

#include <cstdint>
#include <utility>
#include <vector>

#include "retscale/lawfit.hpp"

namespace retscale::budget {

struct CostModel {
  double z_data = 0.0;   // dollars per annotated pair, > 0
  double z_train = 0.0;  // dollars per model parameter (training), > 0
  double z_infer = 0.0;  // dollars per model parameter (inference), >= 0
  bool include_inference = true;
};

/// Raw quantities the dollar factors are derived from.
struct CostFactorInputs {
  double dollars_per_pair = 0.6;
  std::int64_t steps = 10000;
  std::int64_t query_tokens = 30;
  std::int64_t passage_tokens = 60;
  std::int64_t passages_per_step = 2;  // per query: one positive, one negative
  std::int64_t batch_size = 256;
  std::int64_t flops_per_param_train = 6;
  std::int64_t flops_per_param_infer = 2;
  double gpu_dollars_per_hour = 3.93;  // A100-class cloud pricing
  double gpu_peak_flops = 312e12;      // per second
  double utilization = 0.25;           // in (0, 1]
  double corpus_pages = 30e12;         // web-scale index to encode
  std::int64_t tokens_per_page = 512;
};

struct Allocation {
  double n_star = 0.0;
  double d_star = 0.0;
  double predicted_loss = 0.0;
  double total_cost = 0.0;
};

struct CurvePoint {
  double n = 0.0;
  double predicted_loss = 0.0;  // NaN when infeasible
  bool feasible = false;
};

double total_cost(const CostModel& model, double n, double d);

/// Dollar factors from hardware and annotation assumptions. Both compute
/// factors scale linearly with the GPU price and inversely with peak FLOPs
/// and utilization.
CostModel derive_cost_factors(const CostFactorInputs& inputs);

/// Pairs affordable after training (and optionally inference) for an
/// n-parameter model. Throws "model exhausts budget" when fewer than one
/// pair remains.
double data_for_budget(const CostModel& model, double n, double budget);

/// Lower/upper model-size bounds covering the whole feasible region.
std::pair<double, double> default_n_bounds(const CostModel& model,
                                           double budget);

/**
 * Minimizes predict_joint(law, n, data_for_budget(model, n, budget)) over n:
 * a 400-point log-spaced grid across the feasible bounds, then golden-section
 * refinement on the best bracket to relative tolerance 1e-6 in n. Grid ties
 * go to the smaller n. The returned total_cost equals the budget up to
 * rounding.
 */
Allocation optimal_allocation(const lawfit::JointLawFit& law,
                              const CostModel& model, double budget,
                              std::pair<double, double> n_bounds);

/// Loss at the budget-exhausting d for each grid n. Infeasible entries are
/// marked rather than dropped so output rows align with the requested grid.
std::vector<CurvePoint> budget_curve(const lawfit::JointLawFit& law,
                                     const CostModel& model, double budget,
                                     const std::vector<double>& n_grid);

}  // namespace retscale::budget
