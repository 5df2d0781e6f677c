#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

/**
 * @file toysim.hpp
 * @brief Desk-scale dense-retrieval simulator.
 *
 * A topic-structured synthetic corpus, inverse-cloze weak supervision with a
 * label-noise knob, and a trainable shared dual encoder (hashed bag-of-tokens
 * -> tanh hidden layers -> affine projection) optimized with the contrastive
 * ranking loss against sampled plus in-batch negatives. The evaluation
 * harness emits (model size, data size, loss) run records that feed the law
 * fitting and budget modules.
 *
 * Everything is a pure function of (inputs, seed): repeated runs produce
 * bit-identical outputs. Grid cells own independent RNG streams derived by
 * hashing cell coordinates with the master seed, so cells may run on any
 * number of worker threads without changing results.
 *
 * Model size follows the non-embedding convention: hidden and projection
 * weights and biases count, the input featurizer does not (the hashed
 * bag-of-tokens table plays the role of an embedding layer).
 */

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace retscale::toysim {

using TokenId = std::uint32_t;

enum class AnnotationMethod { kIct, kNoisyIct, kExternal };

std::string to_string(AnnotationMethod method);
AnnotationMethod annotation_method_from_string(const std::string& name);

struct Corpus {
  std::vector<std::vector<TokenId>> documents;
  std::uint32_t vocab_size = 0;
  std::uint32_t topic_count = 0;
  std::uint64_t seed = 0;
};

struct TrainingPair {
  std::vector<TokenId> query_tokens;
  std::size_t positive_doc_index = 0;
  AnnotationMethod annotation_method = AnnotationMethod::kIct;
  // Set when the pseudo-query span was removed from the positive document
  // (classic inverse cloze); this copy is what training scores against.
  std::optional<std::vector<TokenId>> positive_override;
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // row-major [out][in]
  std::vector<double> bias;     // [out]
};

struct Encoder {
  std::size_t feature_dim = 0;
  std::size_t embedding_dim = 0;
  std::vector<DenseLayer> hidden;  // tanh activations
  DenseLayer projection;           // affine, no activation
};

struct TrainConfig {
  int steps = 2000;
  int batch_size = 64;
  int negatives_per_query = 8;
  double learning_rate = 0.5;
  int eval_every = 200;
  std::uint64_t seed = 42;
  // Evaluation negatives are drawn from this stream so several runs can share
  // one fixed test protocol; 0 derives it from `seed`.
  std::uint64_t eval_seed = 0;
};

struct RunRecord {
  std::int64_t model_size = 0;
  std::int64_t data_size = 0;
  AnnotationMethod annotation_method = AnnotationMethod::kIct;
  std::uint64_t seed = 0;
  double contrastive_entropy = 0.0;
};

struct TrainResult {
  Encoder encoder;
  double best_eval_entropy = 0.0;
  std::vector<std::pair<int, double>> trace;  // (step, eval entropy)
};

class TrainDivergence : public std::runtime_error {
 public:
  TrainDivergence(const std::string& what, int step)
      : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Thrown when a grid cell fails; carries the records of the cells that
/// completed.
class GridCellError : public std::runtime_error {
 public:
  GridCellError(const std::string& what, std::vector<RunRecord> completed)
      : std::runtime_error(what), completed_(std::move(completed)) {}
  const std::vector<RunRecord>& completed() const { return completed_; }

 private:
  std::vector<RunRecord> completed_;
};

// ---------------------------------------------------------------------------
// Corpus and supervision
// ---------------------------------------------------------------------------

/// Topic-structured corpus: topic t owns a disjoint high-probability token
/// block; tokens are drawn 80% from the block and 20% uniformly.
/// Requires vocab_size >= 16 * topic_count, n_docs >= 100, and document
/// lengths in [8, ...].
Corpus generate_corpus(std::uint32_t vocab_size, std::uint32_t topic_count,
                       std::size_t n_docs,
                       std::pair<std::size_t, std::size_t> doc_len_range,
                       std::uint64_t seed);

/// Inverse-cloze pairs: n_pairs distinct documents, each contributing one
/// contiguous span of span_len tokens as its pseudo-query. With remove_span
/// the span is deleted from the positive copy used at train time.
std::vector<TrainingPair> ict_pairs(const Corpus& corpus, std::size_t n_pairs,
                                    std::size_t span_len, bool remove_span,
                                    std::uint64_t seed);

/// Independently with probability noise_rate, points a pair at a uniformly
/// random different document and tags it noisy. Untouched pairs are returned
/// unchanged.
std::vector<TrainingPair> corrupt_labels(const std::vector<TrainingPair>& pairs,
                                         double noise_rate,
                                         const Corpus& corpus,
                                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

/// Weights uniform in +-1/sqrt(fan_in), biases zero; deterministic per seed.
Encoder init_encoder(std::size_t feature_dim,
                     const std::vector<std::size_t>& hidden_widths,
                     std::size_t embedding_dim, std::uint64_t seed);

/// Non-embedding parameter count: hidden + projection weights and biases.
std::int64_t param_count(const Encoder& encoder);

/// Hashed bag-of-tokens (L2-normalized counts) -> tanh hidden layers ->
/// affine projection. Invariant under token reordering.
std::vector<double> encode(const Encoder& encoder,
                           const std::vector<TokenId>& tokens);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct LossAndGrad {
  double loss = 0.0;
  Encoder gradient;  // same shape as the encoder, metadata included
};

/// Batch-averaged softmax cross-entropy over {positive} + sampled negatives,
/// with the other queries' positives appended as in-batch negatives.
/// The gradient covers every encoder parameter.
LossAndGrad contrastive_loss_and_grad(
    const Encoder& encoder, const std::vector<TrainingPair>& batch,
    const std::vector<std::vector<std::size_t>>& negatives,
    const Corpus& corpus);

/// Plain minibatch gradient descent for exactly config.steps steps, with an
/// evaluation at step 0, every eval_every steps, and at the last step.
/// Returns the final encoder and the minimum evaluation entropy seen (best
/// test loss), plus the full trace. Throws TrainDivergence when the loss
/// goes non-finite.
TrainResult train(const Encoder& encoder,
                  const std::vector<TrainingPair>& pairs, const Corpus& corpus,
                  const TrainConfig& config,
                  const std::vector<TrainingPair>& test_pairs);

/// Mean contrastive entropy over test pairs; each query draws n_negatives
/// documents uniformly without replacement, excluding its positive, from a
/// stream fixed by (seed, query index).
double evaluate_entropy(const Encoder& encoder,
                        const std::vector<TrainingPair>& test_pairs,
                        const Corpus& corpus, std::size_t n_negatives,
                        std::uint64_t seed);

/// Mean NDCG@k over test pairs, ranking the whole corpus (or a per-query
/// sampled subcorpus of subcorpus_size documents including the positive when
/// 0 < subcorpus_size < corpus size). Ties rank by ascending document id.
double evaluate_ndcg(const Encoder& encoder,
                     const std::vector<TrainingPair>& test_pairs,
                     const Corpus& corpus, int k, std::size_t subcorpus_size,
                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiment grid
// ---------------------------------------------------------------------------

struct CorpusConfig {
  std::uint32_t vocab_size = 1024;
  std::uint32_t topic_count = 16;
  std::size_t n_docs = 5000;
  std::size_t doc_len_min = 12;
  std::size_t doc_len_max = 32;
  std::uint64_t seed = 7;
};

struct IctConfig {
  std::size_t span_len = 4;
  bool remove_span = true;
  std::size_t test_pairs = 200;
};

struct AnnotationConfig {
  AnnotationMethod method = AnnotationMethod::kIct;
  double noise_rate = 0.0;  // used when method == kNoisyIct
};

struct GridConfig {
  CorpusConfig corpus;
  IctConfig ict;
  std::vector<std::vector<std::size_t>> architectures;  // hidden widths each
  std::size_t feature_dim = 96;
  std::size_t embedding_dim = 16;
  std::vector<std::int64_t> data_sizes;
  std::vector<std::uint64_t> seeds;
  TrainConfig train;
  AnnotationConfig annotation;
  // Pre-loaded pairs used instead of inverse-cloze extraction when
  // annotation.method == kExternal.
  std::vector<TrainingPair> external_pairs;
  bool record_ndcg = false;
  int ndcg_k = 10;
  std::size_t ndcg_subcorpus = 0;  // 0 = full corpus
  int threads = 0;                 // 0 = hardware concurrency
};

struct GridResult {
  std::vector<RunRecord> records;
  // Parallel to records when record_ndcg is set, else empty.
  std::vector<double> ndcg;
};

/**
 * Trains one model per (architecture x data size x seed) cell on a shared
 * corpus. Test pairs are drawn first (spans kept in their documents, so the
 * eval positives are plain corpus passages); per-seed training pools then
 * sample from the remaining documents, and smaller data sizes are prefixes
 * of larger ones, the way a growing annotation budget would extend a
 * dataset. Records are ordered by (architecture index, data size, seed).
 */
GridResult run_grid(const GridConfig& config);

}  // namespace retscale::toysim
