#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

/**
 * @file metrics.hpp
 * @brief Contrastive entropy and binary ranking metrics for dual-encoder
 * evaluation, plus metric/metric correlation analysis.
 *
 * Contrastive entropy is the negative log-probability (natural log) of the
 * positive passage under a softmax over {positive} + sampled negatives. It is
 * computed with a max-shift so scores with magnitudes up to 1e4 stay finite.
 *
 * All functions are pure and take immutable inputs; they are safe to call
 * from any number of workers. Precondition violations throw
 * std::invalid_argument.
 */

#include <cstddef>
#include <optional>
#include <vector>

namespace retscale::metrics {

/// Scores for one evaluation query: the positive and m >= 1 sampled negatives.
struct EvalSample {
  double positive_score = 0.0;
  std::vector<double> negative_scores;
};

/// Binary relevance labels ordered by descending predicted score.
/// total_relevant counts relevant items in the whole corpus (the recall
/// denominator), so it may exceed the number of 1s visible in the list.
struct RankedJudgments {
  std::vector<int> relevance;
  long long total_relevant = 0;
};

struct CorrelationReport {
  double pearson = 0.0;
  double spearman = 0.0;
  std::size_t n_points = 0;
  std::optional<double> critical_entropy_hint;
};

/// Inner product of two equal-length vectors. Throws on a dimension
/// mismatch, naming both lengths.
double inner_product_score(const std::vector<double>& query_vec,
                           const std::vector<double>& doc_vec);

/// -log( exp(s+) / (exp(s+) + sum_j exp(s_j-)) ), max-shifted.
/// Result is >= 0 and equals log(m+1) when all m+1 scores are equal.
double contrastive_entropy(const EvalSample& sample);

double mean_contrastive_entropy(const std::vector<EvalSample>& samples);

/// Binary-gain NDCG with 1/log2(rank+1) discounts, ideal DCG from
/// total_relevant. Queries with total_relevant == 0 are rejected rather than
/// scored as 0.
double ndcg_at_k(const RankedJudgments& judgments, int k);

/// Mean over min(k, total_relevant) of precision-at-rank for each relevant
/// hit in the top k.
double map_at_k(const RankedJudgments& judgments, int k);

double recall_at_k(const RankedJudgments& judgments, int k);

/**
 * Pearson on raw values, Spearman on average ranks (ties averaged).
 *
 * critical_entropy_hint is the entropy midpoint of the largest metric jump
 * between entropy-adjacent points, reported only when that jump exceeds 25%
 * of the metric's range. It is a diagnostic hint, never consumed downstream.
 *
 * Points are canonicalized by sorting (entropy, metric) pairs, so permuting
 * both lists by the same permutation leaves every output bit-identical.
 */
CorrelationReport correlate(const std::vector<double>& entropies,
                            const std::vector<double>& metric_values);

}  // namespace retscale::metrics
