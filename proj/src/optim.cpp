// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

#include "retscale/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace retscale::optim {

double golden_section_minimize(const std::function<double(double)>& f,
                               double lo, double hi, double abs_tol) {
  if (!(lo <= hi)) throw std::invalid_argument("golden section: lo > hi");
  if (!(abs_tol > 0.0)) throw std::invalid_argument("golden section: tol <= 0");
  if (hi - lo <= abs_tol) return 0.5 * (lo + hi);

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int iter = 0; iter < 200 && (b - a) > abs_tol; ++iter) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

NelderMeadResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& start, const std::vector<double>& initial_step,
    const NelderMeadOptions& options) {
  const std::size_t dim = start.size();
  if (dim == 0) throw std::invalid_argument("nelder-mead: empty start point");
  if (initial_step.size() != dim) {
    throw std::invalid_argument("nelder-mead: step size count != dimension");
  }

  NelderMeadResult result;
  std::vector<std::vector<double>> x(dim + 1, start);
  std::vector<double> fx(dim + 1);
  for (std::size_t i = 0; i < dim; ++i) x[i + 1][i] += initial_step[i];
  for (std::size_t j = 0; j <= dim; ++j) {
    fx[j] = f(x[j]);
    ++result.evaluations;
  }

  std::vector<std::size_t> order(dim + 1);
  auto sort_simplex = [&] {
    for (std::size_t i = 0; i <= dim; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fx[a] < fx[b]; });
  };

  std::vector<double> centroid(dim);
  std::vector<double> candidate(dim);
  std::vector<double> contracted(dim);

  while (result.evaluations < options.max_evaluations) {
    sort_simplex();
    const std::size_t best = order[0];
    const std::size_t worst = order[dim];
    const std::size_t second_worst = order[dim - 1];

    const double fspread = fx[worst] - fx[best];
    if (fspread <= options.f_tol_abs + options.f_tol_rel * std::abs(fx[best])) {
      result.converged = true;
      break;
    }
    double xspread = 0.0;
    for (std::size_t j = 0; j <= dim; ++j) {
      for (std::size_t i = 0; i < dim; ++i) {
        xspread = std::max(xspread, std::abs(x[j][i] - x[best][i]));
      }
    }
    if (xspread <= options.x_tol) {
      result.converged = true;
      break;
    }

    // Centroid of all vertices but the worst.
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t j = 0; j <= dim; ++j) {
      if (j == worst) continue;
      for (std::size_t i = 0; i < dim; ++i) centroid[i] += x[j][i];
    }
    for (std::size_t i = 0; i < dim; ++i) centroid[i] /= static_cast<double>(dim);

    for (std::size_t i = 0; i < dim; ++i) {
      candidate[i] = centroid[i] + (centroid[i] - x[worst][i]);
    }
    const double fr = f(candidate);
    ++result.evaluations;

    if (fr < fx[best]) {
      std::vector<double>& expanded = contracted;  // reuse scratch
      for (std::size_t i = 0; i < dim; ++i) {
        expanded[i] = centroid[i] + 2.0 * (candidate[i] - centroid[i]);
      }
      const double fe = f(expanded);
      ++result.evaluations;
      if (fe < fr) {
        x[worst] = expanded;
        fx[worst] = fe;
      } else {
        x[worst] = candidate;
        fx[worst] = fr;
      }
    } else if (fr < fx[second_worst]) {
      x[worst] = candidate;
      fx[worst] = fr;
    } else {
      const bool outside = fr < fx[worst];
      if (outside) {
        for (std::size_t i = 0; i < dim; ++i) {
          contracted[i] = centroid[i] + 0.5 * (candidate[i] - centroid[i]);
        }
      } else {
        for (std::size_t i = 0; i < dim; ++i) {
          contracted[i] = centroid[i] + 0.5 * (x[worst][i] - centroid[i]);
        }
      }
      const double fc = f(contracted);
      ++result.evaluations;
      if (fc < (outside ? fr : fx[worst])) {
        x[worst] = contracted;
        fx[worst] = fc;
      } else {
        // Shrink every vertex toward the best.
        for (std::size_t j = 0; j <= dim; ++j) {
          if (j == best) continue;
          for (std::size_t i = 0; i < dim; ++i) {
            x[j][i] = x[best][i] + 0.5 * (x[j][i] - x[best][i]);
          }
          fx[j] = f(x[j]);
          ++result.evaluations;
        }
      }
    }
  }

  sort_simplex();
  result.best = x[order[0]];
  result.best_value = fx[order[0]];
  return result;
}

}  // namespace retscale::optim
