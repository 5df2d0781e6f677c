// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

#include "retscale/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace retscale::metrics {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

void validate(const RankedJudgments& judgments) {
  long long ones = 0;
  for (int r : judgments.relevance) {
    require(r == 0 || r == 1, "relevance entries must be 0 or 1");
    ones += r;
  }
  require(judgments.total_relevant >= ones,
          "total_relevant is smaller than the number of relevant entries in "
          "the ranking");
}

// Rank discount for 0-based rank i: 1/log2(i + 2).
double discount(std::size_t i) {
  return 1.0 / std::log2(static_cast<double>(i) + 2.0);
}

// 1-based ranks, ties receive the average of the ranks they span.
std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

double pearson_of(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  require(sxx > 0.0 && syy > 0.0, "zero variance, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double inner_product_score(const std::vector<double>& query_vec,
                           const std::vector<double>& doc_vec) {
  require(!query_vec.empty(), "vectors must be non-empty");
  if (query_vec.size() != doc_vec.size()) {
    throw std::invalid_argument(
        "dimension mismatch: query has " + std::to_string(query_vec.size()) +
        " entries, document has " + std::to_string(doc_vec.size()));
  }
  require(all_finite(query_vec) && all_finite(doc_vec),
          "vector entries must be finite");
  double s = 0.0;
  for (std::size_t i = 0; i < query_vec.size(); ++i) s += query_vec[i] * doc_vec[i];
  return s;
}

double contrastive_entropy(const EvalSample& sample) {
  require(!sample.negative_scores.empty(), "sample has no negative scores");
  require(std::isfinite(sample.positive_score) &&
              all_finite(sample.negative_scores),
          "scores must be finite");
  double shift = sample.positive_score;
  for (double v : sample.negative_scores) shift = std::max(shift, v);
  double total = std::exp(sample.positive_score - shift);
  for (double v : sample.negative_scores) total += std::exp(v - shift);
  // log(total) >= positive - shift, so the value is non-negative up to
  // rounding; clamp the last ulp.
  return std::max(0.0, std::log(total) - (sample.positive_score - shift));
}

double mean_contrastive_entropy(const std::vector<EvalSample>& samples) {
  require(!samples.empty(), "no samples to aggregate");
  double sum = 0.0;
  for (const EvalSample& s : samples) sum += contrastive_entropy(s);
  return sum / static_cast<double>(samples.size());
}

double ndcg_at_k(const RankedJudgments& judgments, int k) {
  require(k >= 1, "k must be >= 1");
  validate(judgments);
  require(judgments.total_relevant >= 1,
          "ndcg undefined for a query with no relevant documents; filter such "
          "queries before scoring");
  const std::size_t depth =
      std::min(judgments.relevance.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  for (std::size_t i = 0; i < depth; ++i) {
    if (judgments.relevance[i] == 1) dcg += discount(i);
  }
  const std::size_t ideal_depth =
      std::min<std::size_t>(static_cast<std::size_t>(judgments.total_relevant),
                            static_cast<std::size_t>(k));
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal_depth; ++i) idcg += discount(i);
  return dcg / idcg;
}

double map_at_k(const RankedJudgments& judgments, int k) {
  require(k >= 1, "k must be >= 1");
  validate(judgments);
  require(judgments.total_relevant >= 1,
          "map undefined for a query with no relevant documents; filter such "
          "queries before scoring");
  const std::size_t depth =
      std::min(judgments.relevance.size(), static_cast<std::size_t>(k));
  long long hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < depth; ++i) {
    if (judgments.relevance[i] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  const double denom = static_cast<double>(
      std::min(judgments.total_relevant, static_cast<long long>(k)));
  return sum / denom;
}

double recall_at_k(const RankedJudgments& judgments, int k) {
  require(k >= 1, "k must be >= 1");
  validate(judgments);
  require(judgments.total_relevant >= 1,
          "recall undefined for a query with no relevant documents; filter "
          "such queries before scoring");
  const std::size_t depth =
      std::min(judgments.relevance.size(), static_cast<std::size_t>(k));
  long long hits = 0;
  for (std::size_t i = 0; i < depth; ++i) hits += judgments.relevance[i];
  return static_cast<double>(hits) /
         static_cast<double>(judgments.total_relevant);
}

CorrelationReport correlate(const std::vector<double>& entropies,
                            const std::vector<double>& metric_values) {
  if (entropies.size() != metric_values.size()) {
    throw std::invalid_argument(
        "length mismatch: " + std::to_string(entropies.size()) +
        " entropies vs " + std::to_string(metric_values.size()) + " metrics");
  }
  require(entropies.size() >= 2, "need at least 2 points to correlate");
  require(all_finite(entropies) && all_finite(metric_values),
          "correlation inputs must be finite");

  // Canonical order: sort paired points so results do not depend on the
  // order the caller supplied them in.
  std::vector<std::pair<double, double>> pts(entropies.size());
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    pts[i] = {entropies[i], metric_values[i]};
  }
  std::sort(pts.begin(), pts.end());
  std::vector<double> es(pts.size());
  std::vector<double> ms(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    es[i] = pts[i].first;
    ms[i] = pts[i].second;
  }

  CorrelationReport report;
  report.n_points = pts.size();
  report.pearson = pearson_of(es, ms);
  report.spearman = pearson_of(average_ranks(es), average_ranks(ms));

  double best_jump = -1.0;
  double hint = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double jump = std::abs(ms[i + 1] - ms[i]);
    if (jump > best_jump) {
      best_jump = jump;
      hint = 0.5 * (es[i] + es[i + 1]);
    }
  }
  const auto [lo, hi] = std::minmax_element(ms.begin(), ms.end());
  const double range = *hi - *lo;
  if (range > 0.0 && best_jump > 0.25 * range) {
    report.critical_entropy_hint = hint;
  }
  return report;
}

}  // namespace retscale::metrics
