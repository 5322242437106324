// SPDX-License-Identifier: Apache-2.0
//
// Small trainable relevance model standing in for a pre-trained ranker.
//
//   e_q, e_d = mean of hashed-token embeddings (zero for empty text)
//   feature  = [e_q, e_d, e_q * e_d, |e_q - e_d|]                  (4d)
//   logit    = w2^T relu(w1^T feature + b1) + b2
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sir/block.hpp"
#include "sir/error.hpp"
#include "sir/ndgrad.hpp"
#include "sir/random.hpp"
#include "sir/text.hpp"

namespace sir {

struct ScorerHyper {
  std::uint32_t vocab_buckets = 4096;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (vocab_buckets < 1 || embed_dim < 1 || hidden_dim < 1) {
      throw ArgumentError("scorer dimensions must all be >= 1");
    }
  }

  /// Same architecture; the seed is provenance only.
  bool same_shape(const ScorerHyper& other) const noexcept {
    return vocab_buckets == other.vocab_buckets && embed_dim == other.embed_dim &&
           hidden_dim == other.hidden_dim;
  }

  bool operator==(const ScorerHyper&) const = default;
};

inline constexpr std::size_t kNumParamTensors = 5;

/// Gradients (or any per-tensor quantity) laid out like ScorerParams::tensors().
using ParamTensors = std::array<nd::Tensor, kNumParamTensors>;

struct ScorerParams {
  ScorerHyper hyper;
  nd::Tensor embedding;  // [V x d]
  nd::Tensor mlp_w1;     // [4d x h]
  nd::Tensor mlp_b1;     // [h]
  nd::Tensor mlp_w2;     // [h x 1]
  nd::Tensor mlp_b2;     // [1]

  static constexpr std::array<std::string_view, kNumParamTensors> names{
      "embedding", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2"};

  static std::array<nd::Shape, kNumParamTensors> shapes_for(const ScorerHyper& h) {
    const std::size_t v = h.vocab_buckets;
    const std::size_t d = h.embed_dim;
    return {nd::Shape{v, d}, nd::Shape{4 * d, h.hidden_dim}, nd::Shape{h.hidden_dim},
            nd::Shape{h.hidden_dim, 1}, nd::Shape{1}};
  }

  std::array<nd::Tensor*, kNumParamTensors> tensors() {
    return {&embedding, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2};
  }
  std::array<const nd::Tensor*, kNumParamTensors> tensors() const {
    return {&embedding, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2};
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) {
      n += t->size();
    }
    return n;
  }

  void validate() const {
    hyper.validate();
    const auto expected = shapes_for(hyper);
    const auto actual = tensors();
    for (std::size_t i = 0; i < kNumParamTensors; ++i) {
      if (actual[i]->shape() != expected[i]) {
        throw ArgumentError(std::string(names[i]) + " has shape " + actual[i]->shape_string() +
                            ", hyper requires " + nd::to_string(expected[i]));
      }
      if (!actual[i]->all_finite()) {
        throw NumericError(std::string(names[i]) + " contains non-finite values");
      }
    }
  }

  bool operator==(const ScorerParams&) const = default;
};

/// Embeddings and weight matrices ~ U[-1/sqrt(d), 1/sqrt(d)] from a PCG32
/// stream seeded with `seed`; biases zero.
inline ScorerParams init_params(ScorerHyper hyper, std::uint64_t seed) {
  hyper.validate();
  hyper.seed = seed;
  ScorerParams p;
  p.hyper = hyper;
  const auto shapes = ScorerParams::shapes_for(hyper);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hyper.embed_dim));
  Pcg32 rng(seed);
  auto draw = [&](const nd::Shape& shape) {
    nd::Tensor t = nd::Tensor::zeros(shape);
    for (auto& x : t.values()) {
      x = rng.uniform(-bound, bound);
    }
    return t;
  };
  p.embedding = draw(shapes[0]);
  p.mlp_w1 = draw(shapes[1]);
  p.mlp_b1 = nd::Tensor::zeros(shapes[2]);
  p.mlp_w2 = draw(shapes[3]);
  p.mlp_b2 = nd::Tensor::zeros(shapes[4]);
  return p;
}

inline ScorerParams clone_params(const ScorerParams& src) { return src; }

inline void copy_into(const ScorerParams& src, ScorerParams& dst) {
  if (!src.hyper.same_shape(dst.hyper)) {
    throw ArgumentError("copy_into: scorer hyper-parameters differ");
  }
  dst = src;
}

/// Parameters lifted into graph leaves for one forward/backward pass.
class BoundScorer {
 public:
  explicit BoundScorer(const ScorerParams& params, bool requires_grad = true)
      : hyper_(params.hyper),
        embedding_(nd::leaf(params.embedding, requires_grad)),
        w1_(nd::leaf(params.mlp_w1, requires_grad)),
        b1_(nd::leaf(nd::Tensor({1, params.mlp_b1.size()}, params.mlp_b1.data()), requires_grad)),
        w2_(nd::leaf(params.mlp_w2, requires_grad)),
        b2_(nd::leaf(nd::Tensor({1, 1}, params.mlp_b2.data()), requires_grad)) {}

  const ScorerHyper& hyper() const noexcept { return hyper_; }

  nd::Var embed(const EncodedText& text) const { return nd::embedding_mean(embedding_, text.bucket_ids); }

  /// Logits for one query against `docs`, as a [docs.size()] vector.
  nd::Var score_many(const nd::Var& query_embedding, const std::vector<const EncodedText*>& docs) const {
    if (docs.empty()) {
      throw ArgumentError("score_many: no documents");
    }
    std::vector<nd::Var> rows;
    rows.reserve(docs.size());
    for (const auto* doc : docs) {
      rows.push_back(feature(query_embedding, embed(*doc)));
    }
    const std::size_t n = docs.size();
    const std::size_t width = 4 * hyper_.embed_dim;
    const nd::Var ones = nd::constant(nd::Tensor({n, 1}, std::vector<double>(n, 1.0)));
    const nd::Var features = nd::reshape(nd::concat(rows), {n, width});
    const nd::Var hidden = nd::relu(nd::matmul(features, w1_) + nd::matmul(ones, b1_));
    const nd::Var out = nd::matmul(hidden, w2_) + nd::matmul(ones, b2_);
    return nd::reshape(out, {n});
  }

  /// Current gradients of the leaves, in ScorerParams::tensors() order and shapes.
  ParamTensors grads() const {
    return {embedding_.grad(), w1_.grad(),
            nd::Tensor({hyper_.hidden_dim}, b1_.grad().data()), w2_.grad(),
            nd::Tensor({1}, b2_.grad().data())};
  }

 private:
  static nd::Var feature(const nd::Var& eq, const nd::Var& ed) {
    return nd::concat({eq, ed, eq * ed, nd::abs(eq - ed)});
  }

  ScorerHyper hyper_;
  nd::Var embedding_;
  nd::Var w1_;
  nd::Var b1_;  // stored [1 x h]
  nd::Var w2_;
  nd::Var b2_;  // stored [1 x 1]
};

/// Scalar relevance logit of (q, d), shape [1].
inline nd::Var score_pair(const BoundScorer& scorer, const EncodedText& query, const EncodedText& doc) {
  return scorer.score_many(scorer.embed(query), {&doc});
}

/// Logits for every sample of `block`, index 0 being the positive.
inline ScoreVector score_block(const BoundScorer& scorer, const TrainingBlock& block) {
  if (block.samples.size() < 2) {
    throw ArgumentError("score_block: block " + block.query_id + " has no negatives");
  }
  ScoreVector out;
  std::vector<const EncodedText*> docs;
  docs.reserve(block.samples.size());
  for (const auto& s : block.samples) {
    out.ids.push_back(s.id);
    docs.push_back(&s.text);
  }
  out.logits = scorer.score_many(scorer.embed(block.query), docs);
  return out;
}

}  // namespace sir
