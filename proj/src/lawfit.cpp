// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

#include "retscale/lawfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "retscale/optim.hpp"

namespace retscale::lawfit {

namespace {

constexpr double kFloorShare = 0.999;  // floor stays below min(loss) so
                                       // log(loss - floor) is defined
constexpr double kFloorTolerance = 1e-6;
constexpr int kJointStartBudget = 10000;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ss_res = 0.0;
  double ss_tot = 0.0;
};

OlsFit ols(const std::vector<double>& t, const std::vector<double>& y) {
  const double n = static_cast<double>(t.size());
  double mt = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxx += (t[i] - mt) * (t[i] - mt);
    sxy += (t[i] - mt) * (y[i] - my);
  }
  OlsFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mt;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * t[i]);
    fit.ss_res += r * r;
    fit.ss_tot += (y[i] - my) * (y[i] - my);
  }
  return fit;
}

void validate_fit(const PowerLawFit& fit) {
  require(fit.scale > 0.0 && std::isfinite(fit.scale), "fit scale must be > 0");
  require(fit.exponent > 0.0 && std::isfinite(fit.exponent),
          "fit exponent must be > 0");
  require(fit.floor >= 0.0 && std::isfinite(fit.floor),
          "fit floor must be >= 0");
}

void validate_fit(const JointLawFit& fit) {
  require(fit.a > 0.0 && fit.b > 0.0 && fit.alpha > 0.0 && fit.beta > 0.0,
          "joint fit coefficients must be > 0");
  require(fit.floor >= 0.0, "joint fit floor must be >= 0");
}

// Objective for the joint fit; +inf when parameters blow up numerically.
double joint_log_ssr(const std::vector<JointObservation>& pts,
                     const std::vector<double>& p, double floor_hi) {
  JointLawFit f;
  f.a = std::exp(p[0]);
  f.b = std::exp(p[1]);
  f.alpha = std::exp(p[2]);
  f.beta = std::exp(p[3]);
  f.floor = std::clamp(p[4], 0.0, floor_hi);
  double ssr = 0.0;
  for (const JointObservation& o : pts) {
    const double inner =
        std::pow(f.a / o.n, f.alpha / f.beta) + f.b / o.d;
    const double pred = std::pow(inner, f.beta) + f.floor;
    if (!std::isfinite(pred) || pred <= 0.0) {
      return std::numeric_limits<double>::infinity();
    }
    const double r = std::log(o.loss) - std::log(pred);
    ssr += r * r;
  }
  return std::isfinite(ssr) ? ssr : std::numeric_limits<double>::infinity();
}

struct MarginalSeed {
  double scale;
  double exponent;
  double floor;
};

// Marginal single-law fit used only to seed the joint optimizer; falls back
// to a neutral guess when the marginal data is too messy to fit.
MarginalSeed marginal_seed(const std::vector<JointObservation>& pts,
                           bool along_n) {
  std::vector<Observation> obs(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    obs[i] = {along_n ? pts[i].n : pts[i].d, pts[i].loss};
  }
  try {
    const PowerLawFit fit = fit_single_law(obs);
    return {fit.scale, fit.exponent, fit.floor};
  } catch (const std::exception&) {
    double log_sum = 0.0;
    for (const Observation& o : obs) log_sum += std::log(o.x);
    const double geo_mean = std::exp(log_sum / static_cast<double>(obs.size()));
    return {geo_mean, along_n ? 0.5 : 1.0, 0.0};
  }
}

}  // namespace

double predict_single(const PowerLawFit& fit, double x) {
  validate_fit(fit);
  require(x > 0.0 && std::isfinite(x), "x must be > 0 and finite");
  return std::pow(fit.scale / x, fit.exponent) + fit.floor;
}

PowerLawFit fit_single_law(const std::vector<Observation>& points) {
  require(points.size() >= 3, "need at least 3 points, got " +
                                  std::to_string(points.size()));
  std::vector<Observation> pts = points;
  for (const Observation& o : pts) {
    require(o.x > 0.0 && std::isfinite(o.x), "x values must be > 0 and finite");
    require(o.loss > 0.0 && std::isfinite(o.loss),
            "losses must be > 0 and finite");
  }
  // Canonical order makes the result independent of caller ordering.
  std::sort(pts.begin(), pts.end(), [](const Observation& a, const Observation& b) {
    return a.x != b.x ? a.x < b.x : a.loss < b.loss;
  });
  std::set<double> distinct;
  for (const Observation& o : pts) distinct.insert(o.x);
  require(distinct.size() >= 3, "need at least 3 distinct x values, got " +
                                    std::to_string(distinct.size()));

  double min_loss = pts.front().loss;
  std::vector<double> log_x(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    min_loss = std::min(min_loss, pts[i].loss);
    log_x[i] = std::log(pts[i].x);
  }
  const double floor_hi = kFloorShare * min_loss;

  std::vector<double> y(pts.size());
  auto residuals_at = [&](double floor) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      y[i] = std::log(pts[i].loss - floor);
    }
    return ols(log_x, y);
  };

  const double floor = optim::golden_section_minimize(
      [&](double f) { return residuals_at(f).ss_res; }, 0.0, floor_hi,
      kFloorTolerance);
  const OlsFit line = residuals_at(floor);
  if (!(line.slope < 0.0)) {
    throw std::runtime_error(
        "non-decreasing trend, power law with positive exponent not supported");
  }

  PowerLawFit fit;
  fit.exponent = -line.slope;
  fit.scale = std::exp(line.intercept / fit.exponent);
  fit.floor = floor;
  fit.r_squared = 1.0 - line.ss_res / line.ss_tot;
  return fit;
}

double predict_joint(const JointLawFit& fit, double n, double d) {
  validate_fit(fit);
  require(n > 0.0 && std::isfinite(n), "n must be > 0 and finite");
  require(d > 0.0 && std::isfinite(d), "d must be > 0 and finite");
  const double inner = std::pow(fit.a / n, fit.alpha / fit.beta) + fit.b / d;
  return std::pow(inner, fit.beta) + fit.floor;
}

JointLawFit fit_joint_law(const std::vector<JointObservation>& points) {
  require(points.size() >= 8, "need at least 8 points, got " +
                                  std::to_string(points.size()));
  std::vector<JointObservation> pts = points;
  for (const JointObservation& o : pts) {
    require(o.n > 0.0 && o.d > 0.0 && o.loss > 0.0 && std::isfinite(o.n) &&
                std::isfinite(o.d) && std::isfinite(o.loss),
            "joint observations must be positive and finite");
  }
  std::sort(pts.begin(), pts.end(),
            [](const JointObservation& a, const JointObservation& b) {
              if (a.n != b.n) return a.n < b.n;
              if (a.d != b.d) return a.d < b.d;
              return a.loss < b.loss;
            });
  std::set<double> ns;
  std::set<double> ds;
  double min_loss = pts.front().loss;
  for (const JointObservation& o : pts) {
    ns.insert(o.n);
    ds.insert(o.d);
    min_loss = std::min(min_loss, o.loss);
  }
  require(ns.size() >= 3, "need at least 3 distinct n values, got " +
                              std::to_string(ns.size()));
  require(ds.size() >= 3, "need at least 3 distinct d values, got " +
                              std::to_string(ds.size()));
  const double floor_hi = kFloorShare * min_loss;

  const MarginalSeed mn = marginal_seed(pts, /*along_n=*/true);
  const MarginalSeed md = marginal_seed(pts, /*along_n=*/false);
  const double dn = std::min(mn.floor, floor_hi);
  const double dd = std::min(md.floor, floor_hi);

  // Floor candidates: none, half and full marginal floors. Two extra starts
  // vary the exponents around the marginal estimates.
  const std::vector<std::vector<double>> starts = {
      {std::log(mn.scale), std::log(md.scale), std::log(mn.exponent),
       std::log(md.exponent), 0.0},
      {std::log(mn.scale), std::log(md.scale), std::log(mn.exponent),
       std::log(md.exponent), 0.5 * dn},
      {std::log(mn.scale), std::log(md.scale), std::log(mn.exponent),
       std::log(md.exponent), dn},
      {std::log(mn.scale), std::log(md.scale), std::log(mn.exponent),
       std::log(md.exponent), 0.5 * dd},
      {std::log(mn.scale), std::log(md.scale), std::log(mn.exponent),
       std::log(md.exponent), dd},
      {std::log(mn.scale), std::log(md.scale), std::log(mn.exponent),
       std::log(1.0), 0.5 * std::min(dn, dd)},
      {std::log(mn.scale), std::log(md.scale), std::log(0.5 * mn.exponent),
       std::log(md.exponent), std::min(dn, dd)},
      {std::log(mn.scale), std::log(md.scale), std::log(1.5 * mn.exponent),
       std::log(1.5 * md.exponent), 0.25 * (dn + dd)},
  };

  auto objective = [&](const std::vector<double>& p) {
    return joint_log_ssr(pts, p, floor_hi);
  };

  double best_value = std::numeric_limits<double>::infinity();
  std::vector<double> best_params;
  bool any_converged = false;

  for (const std::vector<double>& start : starts) {
    int remaining = kJointStartBudget;
    std::vector<double> x = start;
    double fx = objective(x);
    --remaining;
    std::vector<double> step = {0.3, 0.3, 0.2, 0.2,
                                std::max(0.01, 0.1 * floor_hi)};
    // Re-run from the incumbent with a shrinking simplex while it keeps
    // improving; total evaluations stay within the per-start budget.
    for (int round = 0; round < 6 && remaining > 0; ++round) {
      optim::NelderMeadOptions opts;
      opts.max_evaluations = remaining;
      const optim::NelderMeadResult r = optim::nelder_mead(objective, x, step, opts);
      remaining -= r.evaluations;
      const bool improved = r.best_value < fx - 1e-15 * (1.0 + std::abs(fx));
      if (r.best_value < fx) {
        fx = r.best_value;
        x = r.best;
      }
      any_converged = any_converged || r.converged;
      if (!r.converged || !improved) break;
      for (double& s : step) s *= 0.25;
    }
    if (fx < best_value) {
      best_value = fx;
      best_params = x;
    }
  }

  JointLawFit fit;
  if (!best_params.empty()) {
    fit.a = std::exp(best_params[0]);
    fit.b = std::exp(best_params[1]);
    fit.alpha = std::exp(best_params[2]);
    fit.beta = std::exp(best_params[3]);
    fit.floor = std::clamp(best_params[4], 0.0, floor_hi);
    fit.rmse = std::sqrt(best_value / static_cast<double>(pts.size()));
  }
  if (!any_converged) {
    std::ostringstream oss;
    oss << "joint fit did not converge within " << kJointStartBudget
        << " evaluations per start; best so far: a=" << fit.a << " b=" << fit.b
        << " alpha=" << fit.alpha << " beta=" << fit.beta
        << " floor=" << fit.floor << " rmse=" << fit.rmse;
    throw FitNonConvergence(oss.str(), fit);
  }
  return fit;
}

double r_squared(const std::vector<double>& observed,
                 const std::vector<double>& predicted) {
  if (observed.size() != predicted.size()) {
    throw std::invalid_argument(
        "length mismatch: " + std::to_string(observed.size()) +
        " observed vs " + std::to_string(predicted.size()) + " predicted");
  }
  require(observed.size() >= 2, "need at least 2 values");
  double mean = 0.0;
  for (double o : observed) {
    require(std::isfinite(o), "observed values must be finite");
    mean += o;
  }
  mean /= static_cast<double>(observed.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    require(std::isfinite(predicted[i]), "predicted values must be finite");
    ss_res += (observed[i] - predicted[i]) * (observed[i] - predicted[i]);
    ss_tot += (observed[i] - mean) * (observed[i] - mean);
  }
  require(ss_tot > 0.0, "observed values are constant, r_squared undefined");
  return 1.0 - ss_res / ss_tot;
}

}  // namespace retscale::lawfit
