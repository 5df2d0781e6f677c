// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

#include "retscale/budget.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "retscale/optim.hpp"

namespace retscale::budget {

namespace {

constexpr int kGridPoints = 400;
constexpr double kRefineRelTol = 1e-6;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void validate(const CostModel& model) {
  require(model.z_data > 0.0 && std::isfinite(model.z_data),
          "z_data must be > 0");
  require(model.z_train > 0.0 && std::isfinite(model.z_train),
          "z_train must be > 0");
  require(model.z_infer >= 0.0 && std::isfinite(model.z_infer),
          "z_infer must be >= 0");
}

double per_parameter_cost(const CostModel& model) {
  return model.z_train + (model.include_inference ? model.z_infer : 0.0);
}

}  // namespace

double total_cost(const CostModel& model, double n, double d) {
  validate(model);
  require(n > 0.0 && std::isfinite(n), "n must be > 0");
  require(d > 0.0 && std::isfinite(d), "d must be > 0");
  return model.z_data * d + per_parameter_cost(model) * n;
}

CostModel derive_cost_factors(const CostFactorInputs& inputs) {
  require(inputs.dollars_per_pair > 0.0, "dollars_per_pair must be > 0");
  require(inputs.steps > 0, "steps must be > 0");
  require(inputs.query_tokens > 0, "query_tokens must be > 0");
  require(inputs.passage_tokens > 0, "passage_tokens must be > 0");
  require(inputs.passages_per_step > 0, "passages_per_step must be > 0");
  require(inputs.batch_size > 0, "batch_size must be > 0");
  require(inputs.flops_per_param_train > 0, "flops_per_param_train must be > 0");
  require(inputs.flops_per_param_infer > 0, "flops_per_param_infer must be > 0");
  require(inputs.gpu_dollars_per_hour > 0.0, "gpu_dollars_per_hour must be > 0");
  require(inputs.gpu_peak_flops > 0.0, "gpu_peak_flops must be > 0");
  require(inputs.utilization > 0.0 && inputs.utilization <= 1.0,
          "utilization must be in (0, 1]");
  require(inputs.corpus_pages > 0.0, "corpus_pages must be > 0");
  require(inputs.tokens_per_page > 0, "tokens_per_page must be > 0");

  const double effective_flops_per_dollar =
      inputs.gpu_peak_flops * 3600.0 * inputs.utilization /
      inputs.gpu_dollars_per_hour;

  CostModel model;
  model.z_data = inputs.dollars_per_pair;
  const double train_tokens = static_cast<double>(inputs.steps) *
                              static_cast<double>(inputs.query_tokens +
                                                  inputs.passages_per_step *
                                                      inputs.passage_tokens) *
                              static_cast<double>(inputs.batch_size);
  model.z_train = train_tokens *
                  static_cast<double>(inputs.flops_per_param_train) /
                  effective_flops_per_dollar;
  const double infer_tokens =
      inputs.corpus_pages * static_cast<double>(inputs.tokens_per_page);
  model.z_infer = infer_tokens *
                  static_cast<double>(inputs.flops_per_param_infer) /
                  effective_flops_per_dollar;
  return model;
}

double data_for_budget(const CostModel& model, double n, double budget) {
  validate(model);
  require(n > 0.0 && std::isfinite(n), "n must be > 0");
  require(std::isfinite(budget), "budget must be finite");
  const double remaining = budget - per_parameter_cost(model) * n;
  const double d = remaining / model.z_data;
  if (!(d >= 1.0)) {
    throw std::runtime_error(
        "model exhausts budget: n=" + std::to_string(n) + " leaves " +
        std::to_string(remaining) + " dollars, under one pair");
  }
  return d;
}

std::pair<double, double> default_n_bounds(const CostModel& model,
                                           double budget) {
  validate(model);
  return {1e3, budget / per_parameter_cost(model)};
}

Allocation optimal_allocation(const lawfit::JointLawFit& law,
                              const CostModel& model, double budget,
                              std::pair<double, double> n_bounds) {
  validate(model);
  if (!(budget > 0.0) || !std::isfinite(budget)) {
    throw std::runtime_error("infeasible budget: must be > 0");
  }
  const double per_param = per_parameter_cost(model);
  // Largest n that still leaves one pair affordable.
  const double n_feasible_hi = (budget - model.z_data) / per_param;
  const double lo = std::max(n_bounds.first, 1e-12);
  const double hi = std::min(n_bounds.second, n_feasible_hi);
  if (!(hi >= lo)) {
    throw std::runtime_error(
        "infeasible budget: no model size within bounds leaves at least one "
        "pair (budget " +
        std::to_string(budget) + ")");
  }

  auto loss_at_log_n = [&](double u) {
    const double n = std::exp(u);
    return lawfit::predict_joint(law, n, data_for_budget(model, n, budget));
  };

  const double u_lo = std::log(lo);
  const double u_hi = std::log(hi);
  double best_u = u_lo;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_index = 0;
  for (int i = 0; i < kGridPoints; ++i) {
    const double u =
        kGridPoints == 1
            ? u_lo
            : u_lo + (u_hi - u_lo) * static_cast<double>(i) /
                         static_cast<double>(kGridPoints - 1);
    const double loss = loss_at_log_n(u);
    if (loss < best_loss) {  // ties keep the smaller n
      best_loss = loss;
      best_u = u;
      best_index = i;
    }
  }

  if (u_hi > u_lo) {
    const double span = (u_hi - u_lo) / static_cast<double>(kGridPoints - 1);
    const double bracket_lo = std::max(u_lo, best_u - span);
    const double bracket_hi = std::min(u_hi, best_u + span);
    (void)best_index;
    best_u = optim::golden_section_minimize(loss_at_log_n, bracket_lo,
                                            bracket_hi, kRefineRelTol);
  }

  Allocation allocation;
  allocation.n_star = std::exp(best_u);
  allocation.d_star = data_for_budget(model, allocation.n_star, budget);
  allocation.predicted_loss =
      lawfit::predict_joint(law, allocation.n_star, allocation.d_star);
  allocation.total_cost = total_cost(model, allocation.n_star, allocation.d_star);
  return allocation;
}

std::vector<CurvePoint> budget_curve(const lawfit::JointLawFit& law,
                                     const CostModel& model, double budget,
                                     const std::vector<double>& n_grid) {
  validate(model);
  require(!n_grid.empty(), "n grid is empty");
  std::vector<CurvePoint> curve;
  curve.reserve(n_grid.size());
  const double per_param = per_parameter_cost(model);
  for (double n : n_grid) {
    require(n > 0.0 && std::isfinite(n), "grid n must be > 0");
    CurvePoint point;
    point.n = n;
    const double remaining = budget - per_param * n;
    if (remaining / model.z_data >= 1.0) {
      point.feasible = true;
      point.predicted_loss =
          lawfit::predict_joint(law, n, data_for_budget(model, n, budget));
    } else {
      point.feasible = false;
      point.predicted_loss = std::numeric_limits<double>::quiet_NaN();
    }
    curve.push_back(point);
  }
  return curve;
}

}  // namespace retscale::budget
