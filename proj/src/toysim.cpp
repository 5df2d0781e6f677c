// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 retscale authors

#include "retscale/toysim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <span>
#include <thread>

#include "retscale/metrics.hpp"
#include "retscale/rng.hpp"

namespace retscale::toysim {

namespace {

using rng::Stream;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Stream-id salts; arbitrary but fixed so derived streams never collide.
constexpr std::uint64_t kSaltTrainSampler = 0x7A41;
constexpr std::uint64_t kSaltTrainEval = 0xE7A1;
constexpr std::uint64_t kSaltGridTest = 0x7E57;
constexpr std::uint64_t kSaltGridPool = 0x1C70;
constexpr std::uint64_t kSaltGridNoise = 0xF010;
constexpr std::uint64_t kSaltGridInit = 0xA110;
constexpr std::uint64_t kSaltGridTrain = 0x07EA;
constexpr std::uint64_t kSaltGridEval = 0x9D0C;
constexpr std::uint64_t kSaltGridNdcg = 0x4DC6;

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

struct SparseFeature {
  std::vector<std::pair<std::uint32_t, double>> entries;  // sorted by bucket
};

SparseFeature featurize(std::span<const TokenId> tokens,
                        std::size_t feature_dim) {
  SparseFeature feature;
  auto& entries = feature.entries;
  entries.reserve(tokens.size());
  for (TokenId t : tokens) {
    const auto bucket =
        static_cast<std::uint32_t>(rng::splitmix64(t) % feature_dim);
    auto it = std::find_if(entries.begin(), entries.end(),
                           [&](const auto& e) { return e.first == bucket; });
    if (it == entries.end()) {
      entries.emplace_back(bucket, 1.0);
    } else {
      it->second += 1.0;
    }
  }
  double norm = 0.0;
  for (const auto& e : entries) norm += e.second * e.second;
  norm = std::sqrt(norm);
  for (auto& e : entries) e.second /= norm;
  std::sort(entries.begin(), entries.end());
  return feature;
}

// Document features for one corpus, shared read-only by grid cells.
class FeatureStore {
 public:
  FeatureStore(const Corpus& corpus, std::size_t feature_dim)
      : feature_dim_(feature_dim) {
    docs_.reserve(corpus.documents.size());
    for (const auto& doc : corpus.documents) {
      docs_.push_back(featurize(doc, feature_dim));
    }
  }

  std::size_t feature_dim() const { return feature_dim_; }
  const SparseFeature& doc(std::size_t i) const { return docs_[i]; }

 private:
  std::size_t feature_dim_;
  std::vector<SparseFeature> docs_;
};

struct PreparedPair {
  SparseFeature query;
  SparseFeature override_feature;
  bool has_override = false;
  std::size_t doc_index = 0;

  const SparseFeature& positive(const FeatureStore& store) const {
    return has_override ? override_feature : store.doc(doc_index);
  }
};

PreparedPair prepare_pair(const TrainingPair& pair, std::size_t feature_dim) {
  PreparedPair prepared;
  prepared.query = featurize(pair.query_tokens, feature_dim);
  prepared.doc_index = pair.positive_doc_index;
  if (pair.positive_override.has_value()) {
    prepared.has_override = true;
    prepared.override_feature = featurize(*pair.positive_override, feature_dim);
  }
  return prepared;
}

std::vector<PreparedPair> prepare_pairs(std::span<const TrainingPair> pairs,
                                        std::size_t feature_dim) {
  std::vector<PreparedPair> prepared;
  prepared.reserve(pairs.size());
  for (const TrainingPair& p : pairs) prepared.push_back(prepare_pair(p, feature_dim));
  return prepared;
}

// ---------------------------------------------------------------------------
// Encoder plumbing
// ---------------------------------------------------------------------------

void validate_encoder(const Encoder& enc) {
  require(enc.feature_dim >= 1 && enc.embedding_dim >= 1,
          "encoder dimensions must be >= 1");
  std::size_t in = enc.feature_dim;
  for (const DenseLayer& layer : enc.hidden) {
    require(layer.in == in && layer.out >= 1 &&
                layer.weights.size() == layer.in * layer.out &&
                layer.bias.size() == layer.out,
            "hidden layer shapes do not chain");
    in = layer.out;
  }
  require(enc.projection.in == in && enc.projection.out == enc.embedding_dim &&
              enc.projection.weights.size() ==
                  enc.projection.in * enc.projection.out &&
              enc.projection.bias.size() == enc.projection.out,
          "projection shape does not chain");
}

Encoder zeros_like(const Encoder& enc) {
  Encoder grad = enc;
  for (DenseLayer& layer : grad.hidden) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  std::fill(grad.projection.weights.begin(), grad.projection.weights.end(), 0.0);
  std::fill(grad.projection.bias.begin(), grad.projection.bias.end(), 0.0);
  return grad;
}

void zero_out(Encoder& grad) {
  for (DenseLayer& layer : grad.hidden) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  std::fill(grad.projection.weights.begin(), grad.projection.weights.end(), 0.0);
  std::fill(grad.projection.bias.begin(), grad.projection.bias.end(), 0.0);
}

// params += scale * grad
void axpy(Encoder& enc, const Encoder& grad, double scale) {
  for (std::size_t l = 0; l < enc.hidden.size(); ++l) {
    DenseLayer& layer = enc.hidden[l];
    const DenseLayer& g = grad.hidden[l];
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      layer.weights[i] += scale * g.weights[i];
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] += scale * g.bias[i];
    }
  }
  for (std::size_t i = 0; i < enc.projection.weights.size(); ++i) {
    enc.projection.weights[i] += scale * grad.projection.weights[i];
  }
  for (std::size_t i = 0; i < enc.projection.bias.size(); ++i) {
    enc.projection.bias[i] += scale * grad.projection.bias[i];
  }
}

// Forward pass; acts[l] holds hidden layer l's output, acts.back() the
// embedding.
void forward(const Encoder& enc, const SparseFeature& input,
             std::vector<std::vector<double>>& acts) {
  const std::size_t depth = enc.hidden.size();
  acts.resize(depth + 1);
  for (std::size_t l = 0; l < depth; ++l) {
    const DenseLayer& layer = enc.hidden[l];
    std::vector<double>& out = acts[l];
    out.assign(layer.out, 0.0);
    if (l == 0) {
      for (const auto& [idx, val] : input.entries) {
        for (std::size_t o = 0; o < layer.out; ++o) {
          out[o] += layer.weights[o * layer.in + idx] * val;
        }
      }
    } else {
      const std::vector<double>& prev = acts[l - 1];
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double* row = &layer.weights[o * layer.in];
        double s = 0.0;
        for (std::size_t i = 0; i < layer.in; ++i) s += row[i] * prev[i];
        out[o] = s;
      }
    }
    for (std::size_t o = 0; o < layer.out; ++o) {
      out[o] = std::tanh(out[o] + layer.bias[o]);
    }
  }

  const DenseLayer& proj = enc.projection;
  std::vector<double>& emb = acts[depth];
  emb.assign(proj.out, 0.0);
  if (depth == 0) {
    for (const auto& [idx, val] : input.entries) {
      for (std::size_t o = 0; o < proj.out; ++o) {
        emb[o] += proj.weights[o * proj.in + idx] * val;
      }
    }
  } else {
    const std::vector<double>& prev = acts[depth - 1];
    for (std::size_t o = 0; o < proj.out; ++o) {
      const double* row = &proj.weights[o * proj.in];
      double s = 0.0;
      for (std::size_t i = 0; i < proj.in; ++i) s += row[i] * prev[i];
      emb[o] = s;
    }
  }
  for (std::size_t o = 0; o < proj.out; ++o) emb[o] += proj.bias[o];
}

struct BackpropScratch {
  std::vector<double> dh;
  std::vector<double> dz;
  std::vector<double> dh_prev;
};

// Accumulates parameter gradients for one encoded text given dL/d(embedding).
void backward(const Encoder& enc, const SparseFeature& input,
              const std::vector<std::vector<double>>& acts,
              const std::vector<double>& demb, Encoder& grad,
              BackpropScratch& scratch) {
  const std::size_t depth = enc.hidden.size();
  const DenseLayer& proj = enc.projection;
  DenseLayer& gproj = grad.projection;

  if (depth == 0) {
    for (std::size_t o = 0; o < proj.out; ++o) {
      gproj.bias[o] += demb[o];
      for (const auto& [idx, val] : input.entries) {
        gproj.weights[o * proj.in + idx] += demb[o] * val;
      }
    }
    return;
  }

  const std::vector<double>& top = acts[depth - 1];
  scratch.dh.assign(proj.in, 0.0);
  for (std::size_t o = 0; o < proj.out; ++o) {
    const double g = demb[o];
    gproj.bias[o] += g;
    const double* row = &proj.weights[o * proj.in];
    double* grow = &gproj.weights[o * proj.in];
    for (std::size_t i = 0; i < proj.in; ++i) {
      grow[i] += g * top[i];
      scratch.dh[i] += g * row[i];
    }
  }

  for (std::size_t l = depth; l-- > 0;) {
    const DenseLayer& layer = enc.hidden[l];
    DenseLayer& glayer = grad.hidden[l];
    const std::vector<double>& h = acts[l];
    scratch.dz.resize(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      scratch.dz[o] = scratch.dh[o] * (1.0 - h[o] * h[o]);
    }
    if (l == 0) {
      for (std::size_t o = 0; o < layer.out; ++o) glayer.bias[o] += scratch.dz[o];
      for (const auto& [idx, val] : input.entries) {
        for (std::size_t o = 0; o < layer.out; ++o) {
          glayer.weights[o * layer.in + idx] += scratch.dz[o] * val;
        }
      }
    } else {
      const std::vector<double>& prev = acts[l - 1];
      scratch.dh_prev.assign(layer.in, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double g = scratch.dz[o];
        glayer.bias[o] += g;
        const double* row = &layer.weights[o * layer.in];
        double* grow = &glayer.weights[o * layer.in];
        for (std::size_t i = 0; i < layer.in; ++i) {
          grow[i] += g * prev[i];
          scratch.dh_prev[i] += g * row[i];
        }
      }
      std::swap(scratch.dh, scratch.dh_prev);
    }
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Per-text forward state kept around for the backward pass.
struct TextState {
  const SparseFeature* feature = nullptr;
  std::vector<std::vector<double>> acts;
  std::vector<double> demb;

  const std::vector<double>& embedding() const { return acts.back(); }
};

// Reusable buffers for one training step.
struct BatchEngine {
  std::vector<TextState> queries;
  std::vector<TextState> positives;
  std::vector<TextState> negatives;  // flat, offsets per pair
  std::vector<std::size_t> negative_offset;
  std::vector<double> scores;
  BackpropScratch scratch;
};

double batch_loss_and_grad(const Encoder& enc,
                           std::span<const PreparedPair> batch,
                           const std::vector<std::vector<std::size_t>>& negatives,
                           const FeatureStore& store, Encoder& grad,
                           BatchEngine& engine) {
  const std::size_t batch_size = batch.size();
  engine.queries.resize(batch_size);
  engine.positives.resize(batch_size);
  engine.negative_offset.assign(batch_size + 1, 0);
  for (std::size_t i = 0; i < batch_size; ++i) {
    engine.negative_offset[i + 1] = engine.negative_offset[i] + negatives[i].size();
  }
  engine.negatives.resize(engine.negative_offset[batch_size]);

  for (std::size_t i = 0; i < batch_size; ++i) {
    TextState& q = engine.queries[i];
    q.feature = &batch[i].query;
    forward(enc, *q.feature, q.acts);
    q.demb.assign(enc.embedding_dim, 0.0);

    TextState& p = engine.positives[i];
    p.feature = &batch[i].positive(store);
    forward(enc, *p.feature, p.acts);
    p.demb.assign(enc.embedding_dim, 0.0);

    for (std::size_t j = 0; j < negatives[i].size(); ++j) {
      TextState& t = engine.negatives[engine.negative_offset[i] + j];
      t.feature = &store.doc(negatives[i][j]);
      forward(enc, *t.feature, t.acts);
      t.demb.assign(enc.embedding_dim, 0.0);
    }
  }

  const double inv_batch = 1.0 / static_cast<double>(batch_size);
  double loss = 0.0;
  std::vector<double>& scores = engine.scores;
  std::vector<TextState*> candidates;
  for (std::size_t i = 0; i < batch_size; ++i) {
    candidates.clear();
    candidates.push_back(&engine.positives[i]);
    for (std::size_t j = engine.negative_offset[i]; j < engine.negative_offset[i + 1]; ++j) {
      candidates.push_back(&engine.negatives[j]);
    }
    for (std::size_t j = 0; j < batch_size; ++j) {
      if (j != i) candidates.push_back(&engine.positives[j]);
    }

    const std::vector<double>& q_emb = engine.queries[i].embedding();
    scores.resize(candidates.size());
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      scores[c] = dot(q_emb, candidates[c]->embedding());
      shift = std::max(shift, scores[c]);
    }
    double z = 0.0;
    for (double s : scores) z += std::exp(s - shift);
    loss += (std::log(z) - (scores[0] - shift)) * inv_batch;

    std::vector<double>& dq = engine.queries[i].demb;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const double p = std::exp(scores[c] - shift) / z;
      const double coeff = (p - (c == 0 ? 1.0 : 0.0)) * inv_batch;
      const std::vector<double>& c_emb = candidates[c]->embedding();
      std::vector<double>& dc = candidates[c]->demb;
      for (std::size_t e = 0; e < q_emb.size(); ++e) {
        dq[e] += coeff * c_emb[e];
        dc[e] += coeff * q_emb[e];
      }
    }
  }

  for (std::size_t i = 0; i < batch_size; ++i) {
    backward(enc, *engine.queries[i].feature, engine.queries[i].acts,
             engine.queries[i].demb, grad, engine.scratch);
    backward(enc, *engine.positives[i].feature, engine.positives[i].acts,
             engine.positives[i].demb, grad, engine.scratch);
  }
  for (TextState& t : engine.negatives) {
    backward(enc, *t.feature, t.acts, t.demb, grad, engine.scratch);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Evaluation internals
// ---------------------------------------------------------------------------

// Doc embeddings memoized within one evaluation pass.
struct DocEmbeddingCache {
  explicit DocEmbeddingCache(std::size_t n_docs)
      : embeddings(n_docs), stamp(n_docs, 0), current(0) {}

  void new_pass() { ++current; }

  const std::vector<double>& get(const Encoder& enc, const FeatureStore& store,
                                 std::size_t doc) {
    if (stamp[doc] != current) {
      forward(enc, store.doc(doc), acts_scratch);
      embeddings[doc] = acts_scratch.back();
      stamp[doc] = current;
    }
    return embeddings[doc];
  }

  std::vector<std::vector<double>> embeddings;
  std::vector<std::uint32_t> stamp;
  std::uint32_t current;
  std::vector<std::vector<double>> acts_scratch;
};

// Partial Fisher-Yates: the first n_take entries of `ids` become a uniform
// sample without replacement.
void partial_shuffle(std::vector<std::size_t>& ids, std::size_t n_take,
                     Stream& stream) {
  for (std::size_t i = 0; i < n_take; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(stream.next_below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
}

double evaluate_entropy_impl(const Encoder& enc,
                             std::span<const PreparedPair> test,
                             const FeatureStore& store, std::size_t n_docs,
                             std::size_t n_negatives, std::uint64_t seed,
                             DocEmbeddingCache& cache) {
  cache.new_pass();
  std::vector<metrics::EvalSample> samples;
  samples.reserve(test.size());
  std::vector<std::vector<double>> acts;
  std::vector<std::size_t> ids;
  for (std::size_t qi = 0; qi < test.size(); ++qi) {
    const PreparedPair& pair = test[qi];
    Stream stream(rng::mix(seed, qi));
    ids.clear();
    ids.reserve(n_docs - 1);
    for (std::size_t i = 0; i < n_docs; ++i) {
      if (i != pair.doc_index) ids.push_back(i);
    }
    partial_shuffle(ids, n_negatives, stream);

    forward(enc, pair.query, acts);
    const std::vector<double> q_emb = acts.back();
    forward(enc, pair.positive(store), acts);
    const std::vector<double>& p_emb = acts.back();

    metrics::EvalSample sample;
    sample.positive_score = dot(q_emb, p_emb);
    sample.negative_scores.reserve(n_negatives);
    for (std::size_t j = 0; j < n_negatives; ++j) {
      sample.negative_scores.push_back(dot(q_emb, cache.get(enc, store, ids[j])));
    }
    samples.push_back(std::move(sample));
  }
  return metrics::mean_contrastive_entropy(samples);
}

double evaluate_ndcg_impl(const Encoder& enc, std::span<const PreparedPair> test,
                          const FeatureStore& store, std::size_t n_docs, int k,
                          std::size_t subcorpus_size, std::uint64_t seed) {
  std::vector<std::vector<double>> doc_embs(n_docs);
  std::vector<std::vector<double>> acts;
  for (std::size_t i = 0; i < n_docs; ++i) {
    forward(enc, store.doc(i), acts);
    doc_embs[i] = acts.back();
  }
  const bool sample_subcorpus = subcorpus_size > 0 && subcorpus_size < n_docs;

  double total = 0.0;
  std::vector<std::size_t> ids;
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t qi = 0; qi < test.size(); ++qi) {
    const PreparedPair& pair = test[qi];
    forward(enc, pair.query, acts);
    const std::vector<double>& q_emb = acts.back();

    ids.clear();
    if (sample_subcorpus) {
      Stream stream(rng::mix(seed, qi));
      ids.reserve(n_docs - 1);
      for (std::size_t i = 0; i < n_docs; ++i) {
        if (i != pair.doc_index) ids.push_back(i);
      }
      partial_shuffle(ids, subcorpus_size - 1, stream);
      ids.resize(subcorpus_size - 1);
      ids.push_back(pair.doc_index);
    } else {
      ids.resize(n_docs);
      std::iota(ids.begin(), ids.end(), std::size_t{0});
    }

    ranked.clear();
    ranked.reserve(ids.size());
    for (std::size_t id : ids) ranked.emplace_back(dot(q_emb, doc_embs[id]), id);
    const std::size_t depth = std::min<std::size_t>(k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + depth, ranked.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });

    metrics::RankedJudgments judgments;
    judgments.total_relevant = 1;
    judgments.relevance.resize(depth, 0);
    for (std::size_t i = 0; i < depth; ++i) {
      if (ranked[i].second == pair.doc_index) judgments.relevance[i] = 1;
    }
    total += metrics::ndcg_at_k(judgments, k);
  }
  return total / static_cast<double>(test.size());
}

void validate_pairs(std::span<const TrainingPair> pairs, const Corpus& corpus,
                    const std::string& label) {
  for (const TrainingPair& pair : pairs) {
    require(!pair.query_tokens.empty(), label + ": empty query");
    require(pair.positive_doc_index < corpus.documents.size(),
            label + ": positive_doc_index out of corpus range");
    if (pair.positive_override.has_value()) {
      require(!pair.positive_override->empty(), label + ": empty positive");
    }
  }
}

void validate_train_config(const TrainConfig& config) {
  require(config.steps >= 1, "steps must be >= 1");
  require(config.batch_size >= 1, "batch_size must be >= 1");
  require(config.negatives_per_query >= 1, "negatives_per_query must be >= 1");
  require(config.eval_every >= 1, "eval_every must be >= 1");
  require(config.learning_rate >= 0.0 && std::isfinite(config.learning_rate),
          "learning_rate must be finite and >= 0");
}

TrainResult train_impl(const Encoder& encoder,
                       std::span<const TrainingPair> pairs,
                       std::span<const PreparedPair> prepared,
                       std::span<const PreparedPair> prepared_test,
                       const FeatureStore& store, const Corpus& corpus,
                       const TrainConfig& config) {
  const std::size_t n_docs = corpus.documents.size();
  const std::uint64_t eval_seed = config.eval_seed != 0
                                      ? config.eval_seed
                                      : rng::mix(config.seed, kSaltTrainEval);
  const auto n_eval_negatives =
      static_cast<std::size_t>(config.negatives_per_query);
  require(n_eval_negatives <= n_docs - 1,
          "negatives_per_query exceeds corpus size - 1");

  TrainResult result;
  result.encoder = encoder;
  Encoder grad = zeros_like(encoder);
  BatchEngine engine;
  DocEmbeddingCache cache(n_docs);
  Stream sampler(rng::mix(config.seed, kSaltTrainSampler));

  auto evaluate = [&](int step) {
    const double entropy =
        evaluate_entropy_impl(result.encoder, prepared_test, store, n_docs,
                              n_eval_negatives, eval_seed, cache);
    result.trace.emplace_back(step, entropy);
    return entropy;
  };

  result.best_eval_entropy = evaluate(0);

  std::vector<PreparedPair> batch(config.batch_size);
  std::vector<std::vector<std::size_t>> negatives(
      config.batch_size,
      std::vector<std::size_t>(config.negatives_per_query));
  for (int step = 1; step <= config.steps; ++step) {
    for (int b = 0; b < config.batch_size; ++b) {
      const std::size_t pick =
          static_cast<std::size_t>(sampler.next_below(pairs.size()));
      batch[static_cast<std::size_t>(b)] = prepared[pick];
      const std::size_t positive = prepared[pick].doc_index;
      for (int j = 0; j < config.negatives_per_query; ++j) {
        // Uniform over documents other than the positive.
        std::size_t draw =
            static_cast<std::size_t>(sampler.next_below(n_docs - 1));
        if (draw >= positive) ++draw;
        negatives[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)] = draw;
      }
    }
    zero_out(grad);
    const double loss =
        batch_loss_and_grad(result.encoder, batch, negatives, store, grad, engine);
    if (!std::isfinite(loss)) {
      throw TrainDivergence(
          "training diverged (non-finite loss) at step " + std::to_string(step),
          step);
    }
    axpy(result.encoder, grad, -config.learning_rate);

    if (step % config.eval_every == 0 || step == config.steps) {
      const double entropy = evaluate(step);
      result.best_eval_entropy = std::min(result.best_eval_entropy, entropy);
    }
  }
  return result;
}

// Inverse-cloze extraction over an explicit candidate document set.
std::vector<TrainingPair> ict_pairs_from(const Corpus& corpus,
                                         std::vector<std::size_t> candidates,
                                         std::size_t n_pairs,
                                         std::size_t span_len, bool remove_span,
                                         std::uint64_t seed) {
  require(n_pairs >= 1, "n_pairs must be >= 1");
  require(n_pairs <= candidates.size(),
          "n_pairs (" + std::to_string(n_pairs) + ") exceeds the " +
              std::to_string(candidates.size()) + " available documents");
  std::size_t min_len = std::numeric_limits<std::size_t>::max();
  for (const auto& doc : corpus.documents) min_len = std::min(min_len, doc.size());
  require(span_len >= 2, "span_len must be >= 2");
  require(span_len <= min_len - 1,
          "span_len (" + std::to_string(span_len) +
              ") must leave at least one token in the shortest document (" +
              std::to_string(min_len) + ")");

  Stream stream(seed);
  partial_shuffle(candidates, n_pairs, stream);

  std::vector<TrainingPair> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::size_t doc_index = candidates[i];
    const std::vector<TokenId>& doc = corpus.documents[doc_index];
    const std::size_t offset =
        static_cast<std::size_t>(stream.next_below(doc.size() - span_len + 1));
    TrainingPair pair;
    pair.annotation_method = AnnotationMethod::kIct;
    pair.positive_doc_index = doc_index;
    pair.query_tokens.assign(doc.begin() + static_cast<std::ptrdiff_t>(offset),
                             doc.begin() + static_cast<std::ptrdiff_t>(offset + span_len));
    if (remove_span) {
      std::vector<TokenId> rest;
      rest.reserve(doc.size() - span_len);
      rest.insert(rest.end(), doc.begin(),
                  doc.begin() + static_cast<std::ptrdiff_t>(offset));
      rest.insert(rest.end(),
                  doc.begin() + static_cast<std::ptrdiff_t>(offset + span_len),
                  doc.end());
      pair.positive_override = std::move(rest);
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace

std::string to_string(AnnotationMethod method) {
  switch (method) {
    case AnnotationMethod::kIct:
      return "ict";
    case AnnotationMethod::kNoisyIct:
      return "noisy_ict";
    case AnnotationMethod::kExternal:
      return "external";
  }
  throw std::invalid_argument("unknown annotation method");
}

AnnotationMethod annotation_method_from_string(const std::string& name) {
  if (name == "ict") return AnnotationMethod::kIct;
  if (name == "noisy_ict") return AnnotationMethod::kNoisyIct;
  if (name == "external") return AnnotationMethod::kExternal;
  throw std::invalid_argument("unknown annotation method: " + name);
}

Corpus generate_corpus(std::uint32_t vocab_size, std::uint32_t topic_count,
                       std::size_t n_docs,
                       std::pair<std::size_t, std::size_t> doc_len_range,
                       std::uint64_t seed) {
  require(topic_count >= 1, "topic_count must be >= 1");
  require(vocab_size >= 16u * topic_count,
          "vocab_size must be at least 16 * topic_count");
  require(n_docs >= 100, "n_docs must be >= 100");
  const auto [len_min, len_max] = doc_len_range;
  require(len_min >= 8, "documents must be at least 8 tokens long");
  require(len_min <= len_max, "invalid document length range");

  Corpus corpus;
  corpus.vocab_size = vocab_size;
  corpus.topic_count = topic_count;
  corpus.seed = seed;
  corpus.documents.resize(n_docs);

  const std::uint32_t block = vocab_size / topic_count;
  Stream stream(seed);
  for (std::size_t i = 0; i < n_docs; ++i) {
    const auto topic = static_cast<std::uint32_t>(stream.next_below(topic_count));
    const std::uint32_t block_start = topic * block;
    const std::size_t len =
        len_min + static_cast<std::size_t>(stream.next_below(len_max - len_min + 1));
    std::vector<TokenId>& doc = corpus.documents[i];
    doc.resize(len);
    for (std::size_t t = 0; t < len; ++t) {
      if (stream.next_bernoulli(0.8)) {
        doc[t] = block_start + static_cast<TokenId>(stream.next_below(block));
      } else {
        doc[t] = static_cast<TokenId>(stream.next_below(vocab_size));
      }
    }
  }
  return corpus;
}

std::vector<TrainingPair> ict_pairs(const Corpus& corpus, std::size_t n_pairs,
                                    std::size_t span_len, bool remove_span,
                                    std::uint64_t seed) {
  std::vector<std::size_t> all(corpus.documents.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return ict_pairs_from(corpus, std::move(all), n_pairs, span_len, remove_span,
                        seed);
}

std::vector<TrainingPair> corrupt_labels(const std::vector<TrainingPair>& pairs,
                                         double noise_rate,
                                         const Corpus& corpus,
                                         std::uint64_t seed) {
  require(noise_rate >= 0.0 && noise_rate <= 1.0,
          "noise_rate must be in [0, 1]");
  require(corpus.documents.size() >= 2,
          "corpus must hold at least 2 documents");
  std::vector<TrainingPair> out = pairs;
  Stream stream(seed);
  const std::size_t n_docs = corpus.documents.size();
  for (TrainingPair& pair : out) {
    if (!stream.next_bernoulli(noise_rate)) continue;
    std::size_t draw = static_cast<std::size_t>(stream.next_below(n_docs - 1));
    if (draw >= pair.positive_doc_index) ++draw;
    pair.positive_doc_index = draw;
    pair.annotation_method = AnnotationMethod::kNoisyIct;
    pair.positive_override.reset();  // the new positive is a plain document
  }
  return out;
}

Encoder init_encoder(std::size_t feature_dim,
                     const std::vector<std::size_t>& hidden_widths,
                     std::size_t embedding_dim, std::uint64_t seed) {
  require(feature_dim >= 1, "feature_dim must be >= 1");
  require(embedding_dim >= 1, "embedding_dim must be >= 1");
  for (std::size_t w : hidden_widths) require(w >= 1, "hidden widths must be >= 1");

  Encoder enc;
  enc.feature_dim = feature_dim;
  enc.embedding_dim = embedding_dim;
  Stream stream(seed);
  auto make_layer = [&](std::size_t in, std::size_t out) {
    DenseLayer layer;
    layer.in = in;
    layer.out = out;
    layer.weights.resize(in * out);
    layer.bias.assign(out, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : layer.weights) {
      w = (2.0 * stream.next_real() - 1.0) * scale;
    }
    return layer;
  };
  std::size_t in = feature_dim;
  for (std::size_t width : hidden_widths) {
    enc.hidden.push_back(make_layer(in, width));
    in = width;
  }
  enc.projection = make_layer(in, embedding_dim);
  return enc;
}

std::int64_t param_count(const Encoder& encoder) {
  validate_encoder(encoder);
  std::int64_t count = 0;
  for (const DenseLayer& layer : encoder.hidden) {
    count += static_cast<std::int64_t>(layer.in * layer.out + layer.out);
  }
  count += static_cast<std::int64_t>(encoder.projection.in * encoder.projection.out +
                                     encoder.projection.out);
  return count;
}

std::vector<double> encode(const Encoder& encoder,
                           const std::vector<TokenId>& tokens) {
  validate_encoder(encoder);
  require(!tokens.empty(), "cannot encode an empty token sequence");
  const SparseFeature feature = featurize(tokens, encoder.feature_dim);
  std::vector<std::vector<double>> acts;
  forward(encoder, feature, acts);
  return acts.back();
}

LossAndGrad contrastive_loss_and_grad(
    const Encoder& encoder, const std::vector<TrainingPair>& batch,
    const std::vector<std::vector<std::size_t>>& negatives,
    const Corpus& corpus) {
  validate_encoder(encoder);
  require(!batch.empty(), "batch is empty");
  require(negatives.size() == batch.size(),
          "need one negative list per batch pair");
  validate_pairs(batch, corpus, "batch");
  for (const auto& list : negatives) {
    require(!list.empty(), "every pair needs at least one negative");
    for (std::size_t idx : list) {
      require(idx < corpus.documents.size(), "negative index out of range");
    }
  }

  const FeatureStore store(corpus, encoder.feature_dim);
  const std::vector<PreparedPair> prepared =
      prepare_pairs(batch, encoder.feature_dim);
  LossAndGrad out;
  out.gradient = zeros_like(encoder);
  BatchEngine engine;
  out.loss =
      batch_loss_and_grad(encoder, prepared, negatives, store, out.gradient, engine);
  return out;
}

TrainResult train(const Encoder& encoder, const std::vector<TrainingPair>& pairs,
                  const Corpus& corpus, const TrainConfig& config,
                  const std::vector<TrainingPair>& test_pairs) {
  validate_encoder(encoder);
  validate_train_config(config);
  require(!pairs.empty(), "no training pairs");
  require(!test_pairs.empty(), "no test pairs");
  require(corpus.documents.size() >= 2, "corpus must hold at least 2 documents");
  validate_pairs(pairs, corpus, "train");
  validate_pairs(test_pairs, corpus, "test");

  const FeatureStore store(corpus, encoder.feature_dim);
  const std::vector<PreparedPair> prepared =
      prepare_pairs(pairs, encoder.feature_dim);
  const std::vector<PreparedPair> prepared_test =
      prepare_pairs(test_pairs, encoder.feature_dim);
  return train_impl(encoder, pairs, prepared, prepared_test, store, corpus,
                    config);
}

double evaluate_entropy(const Encoder& encoder,
                        const std::vector<TrainingPair>& test_pairs,
                        const Corpus& corpus, std::size_t n_negatives,
                        std::uint64_t seed) {
  validate_encoder(encoder);
  require(!test_pairs.empty(), "no test pairs");
  validate_pairs(test_pairs, corpus, "test");
  require(n_negatives >= 1, "n_negatives must be >= 1");
  require(n_negatives <= corpus.documents.size() - 1,
          "n_negatives (" + std::to_string(n_negatives) +
              ") exceeds corpus size - 1 (" +
              std::to_string(corpus.documents.size() - 1) + ")");

  const FeatureStore store(corpus, encoder.feature_dim);
  const std::vector<PreparedPair> prepared =
      prepare_pairs(test_pairs, encoder.feature_dim);
  DocEmbeddingCache cache(corpus.documents.size());
  return evaluate_entropy_impl(encoder, prepared, store,
                               corpus.documents.size(), n_negatives, seed,
                               cache);
}

double evaluate_ndcg(const Encoder& encoder,
                     const std::vector<TrainingPair>& test_pairs,
                     const Corpus& corpus, int k, std::size_t subcorpus_size,
                     std::uint64_t seed) {
  validate_encoder(encoder);
  require(k >= 1, "k must be >= 1");
  require(!test_pairs.empty(), "no test pairs");
  validate_pairs(test_pairs, corpus, "test");
  if (subcorpus_size > 0) {
    require(subcorpus_size >= 2, "subcorpus_size must be >= 2");
  }

  const FeatureStore store(corpus, encoder.feature_dim);
  const std::vector<PreparedPair> prepared =
      prepare_pairs(test_pairs, encoder.feature_dim);
  return evaluate_ndcg_impl(encoder, prepared, store, corpus.documents.size(),
                            k, subcorpus_size, seed);
}

GridResult run_grid(const GridConfig& config) {
  require(!config.architectures.empty(), "architectures must be non-empty");
  require(!config.data_sizes.empty(), "data_sizes must be non-empty");
  require(!config.seeds.empty(), "seeds must be non-empty");
  for (std::int64_t d : config.data_sizes) {
    require(d >= 1, "data sizes must be >= 1");
  }
  validate_train_config(config.train);

  const Corpus corpus = generate_corpus(
      config.corpus.vocab_size, config.corpus.topic_count, config.corpus.n_docs,
      {config.corpus.doc_len_min, config.corpus.doc_len_max},
      config.corpus.seed);

  std::vector<std::int64_t> data_sizes = config.data_sizes;
  std::sort(data_sizes.begin(), data_sizes.end());
  std::vector<std::uint64_t> seeds = config.seeds;
  std::sort(seeds.begin(), seeds.end());
  const auto max_data = static_cast<std::size_t>(data_sizes.back());

  // Fixed evaluation protocol shared by every cell: one test set, one
  // negative-sampling stream. Test queries keep their span inside the
  // positive document so eval positives are plain corpus passages.
  require(config.ict.test_pairs >= 1, "test_pairs must be >= 1");
  const std::vector<TrainingPair> test_pairs =
      ict_pairs(corpus, config.ict.test_pairs, config.ict.span_len,
                /*remove_span=*/false, rng::mix(config.corpus.seed, kSaltGridTest));
  std::vector<bool> is_test_doc(corpus.documents.size(), false);
  for (const TrainingPair& pair : test_pairs) {
    is_test_doc[pair.positive_doc_index] = true;
  }
  std::vector<std::size_t> train_docs;
  for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
    if (!is_test_doc[i]) train_docs.push_back(i);
  }

  // Per-seed pools; smaller data sizes are prefixes of larger ones.
  std::vector<std::vector<TrainingPair>> pools(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (config.annotation.method == AnnotationMethod::kExternal) {
      require(config.external_pairs.size() >= max_data,
              "external pairs (" + std::to_string(config.external_pairs.size()) +
                  ") cover fewer than the largest data size (" +
                  std::to_string(max_data) + ")");
      pools[s].assign(config.external_pairs.begin(),
                      config.external_pairs.begin() +
                          static_cast<std::ptrdiff_t>(max_data));
      validate_pairs(pools[s], corpus, "external");
    } else {
      require(max_data <= train_docs.size(),
              "largest data size (" + std::to_string(max_data) +
                  ") exceeds the " + std::to_string(train_docs.size()) +
                  " non-test documents");
      pools[s] = ict_pairs_from(corpus, train_docs, max_data,
                                config.ict.span_len, config.ict.remove_span,
                                rng::mix(config.corpus.seed, seeds[s], kSaltGridPool));
      if (config.annotation.method == AnnotationMethod::kNoisyIct) {
        pools[s] = corrupt_labels(pools[s], config.annotation.noise_rate, corpus,
                                  rng::mix(config.corpus.seed, seeds[s], kSaltGridNoise));
      }
    }
  }

  const FeatureStore store(corpus, config.feature_dim);
  const std::vector<PreparedPair> prepared_test =
      prepare_pairs(test_pairs, config.feature_dim);
  std::vector<std::vector<PreparedPair>> prepared_pools(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    prepared_pools[s] = prepare_pairs(pools[s], config.feature_dim);
  }
  const std::uint64_t shared_eval_seed = rng::mix(config.train.seed, kSaltGridEval);

  struct Cell {
    std::size_t arch;
    std::size_t data_index;
    std::size_t seed_index;
  };
  std::vector<Cell> cells;
  for (std::size_t a = 0; a < config.architectures.size(); ++a) {
    for (std::size_t d = 0; d < data_sizes.size(); ++d) {
      for (std::size_t s = 0; s < seeds.size(); ++s) cells.push_back({a, d, s});
    }
  }

  std::vector<RunRecord> records(cells.size());
  std::vector<double> ndcg(config.record_ndcg ? cells.size() : 0, 0.0);
  std::vector<char> done(cells.size(), 0);
  std::vector<std::string> errors(cells.size());

  auto run_cell = [&](std::size_t index) {
    const Cell& cell = cells[index];
    const std::uint64_t seed_value = seeds[cell.seed_index];
    const auto data = static_cast<std::size_t>(data_sizes[cell.data_index]);
    const Encoder initial = init_encoder(
        config.feature_dim, config.architectures[cell.arch],
        config.embedding_dim,
        rng::mix(config.train.seed, cell.arch, seed_value, kSaltGridInit));
    TrainConfig tc = config.train;
    tc.seed = rng::mix(config.train.seed, cell.arch,
                       static_cast<std::uint64_t>(data), seed_value, kSaltGridTrain);
    tc.eval_seed = shared_eval_seed;

    const std::vector<TrainingPair>& pool = pools[cell.seed_index];
    const std::vector<PreparedPair>& prepared_pool = prepared_pools[cell.seed_index];
    const TrainResult result = train_impl(
        initial, std::span(pool).first(data), std::span(prepared_pool).first(data),
        prepared_test, store, corpus, tc);

    RunRecord record;
    record.model_size = param_count(initial);
    record.data_size = static_cast<std::int64_t>(data);
    record.annotation_method = config.annotation.method;
    record.seed = seed_value;
    record.contrastive_entropy = result.best_eval_entropy;
    records[index] = record;
    if (config.record_ndcg) {
      ndcg[index] = evaluate_ndcg_impl(result.encoder, prepared_test, store,
                                       corpus.documents.size(), config.ndcg_k,
                                       config.ndcg_subcorpus,
                                       rng::mix(config.train.seed, kSaltGridNdcg));
    }
    done[index] = 1;
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n_threads = std::min<std::size_t>(
      cells.size(), config.threads > 0 ? static_cast<unsigned>(config.threads) : hw);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        run_cell(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
      workers.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= cells.size()) return;
          try {
            run_cell(i);
          } catch (const std::exception& e) {
            errors[i] = e.what();
          }
        }
      });
    }
    for (std::thread& w : workers) w.join();
  }

  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (done[i]) continue;
    std::vector<RunRecord> completed;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (done[j]) completed.push_back(records[j]);
    }
    const Cell& cell = cells[i];
    throw GridCellError(
        "grid cell failed (architecture " + std::to_string(cell.arch) +
            ", data_size " + std::to_string(data_sizes[cell.data_index]) +
            ", seed " + std::to_string(seeds[cell.seed_index]) + "): " + errors[i],
        std::move(completed));
  }

  GridResult result;
  result.records = std::move(records);
  if (config.record_ndcg) result.ndcg = std::move(ndcg);
  return result;
}

}  // namespace retscale::toysim
