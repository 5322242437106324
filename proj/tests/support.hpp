// SPDX-License-Identifier: Apache-2.0
//
// Helpers shared by the unit tests and the acceptance runner.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "sir/sir.hpp"

namespace sirtest {

using namespace sir;

inline ScorerHyper small_hyper() {
  ScorerHyper h;
  h.vocab_buckets = 64;
  h.embed_dim = 4;
  h.hidden_dim = 6;
  return h;
}

/// Params with every entry, biases included, drawn from U[-0.5, 0.5].
inline ScorerParams random_params(const ScorerHyper& hyper, std::uint64_t seed) {
  ScorerParams p = init_params(hyper, seed);
  Pcg32 rng(mix_seed(seed, 77));
  for (auto* t : p.tensors()) {
    for (auto& x : t->values()) {
      x = rng.uniform(-0.5, 0.5);
    }
  }
  return p;
}

inline EncodedText random_text(Pcg32& rng, std::uint32_t buckets, std::size_t len) {
  EncodedText t;
  for (std::size_t i = 0; i < len; ++i) {
    t.bucket_ids.push_back(rng.below(buckets));
  }
  return t;
}

/// Positive at index 0 with id 0, negatives with ids 1..n.
inline TrainingBlock random_block(Pcg32& rng, std::size_t negatives, std::uint32_t buckets,
                                  std::size_t query_len = 4, std::size_t doc_len = 6) {
  TrainingBlock b;
  b.query_id = "q" + std::to_string(rng());
  b.query = random_text(rng, buckets, query_len);
  for (std::size_t i = 0; i <= negatives; ++i) {
    b.samples.push_back({i, "d" + std::to_string(i), random_text(rng, buckets, doc_len),
                         i == 0 ? Label::positive : Label::negative, {}});
  }
  return b;
}

/// Cascade levels over fixed, already-compressed blocks (selection frozen).
inline std::vector<LevelForward> frozen_levels(const BoundScorer& scorer, const std::vector<TrainingBlock>& blocks) {
  std::vector<LevelForward> out;
  for (const auto& b : blocks) {
    ScoreVector s = score_block(scorer, b);
    ProbVector p = softmax(s);
    out.push_back({b, std::move(s), std::move(p)});
  }
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central-difference check of every parameter entry. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor); the floor keeps
/// round-off on near-zero gradients from dominating.
inline GradCheck check_gradients(const ScorerParams& params, const std::function<nd::Var(const BoundScorer&)>& loss,
                                 double eps = 1e-5, double floor = 1e-6) {
  const BoundScorer bound(params, true);
  nd::backward(loss(bound));
  const ParamTensors analytic = bound.grads();

  auto value_at = [&](const ScorerParams& p) { return loss(BoundScorer(p, false)).item(); };
  GradCheck out;
  ScorerParams probe = params;
  auto tensors = probe.tensors();
  for (std::size_t t = 0; t < kNumParamTensors; ++t) {
    for (std::size_t i = 0; i < tensors[t]->size(); ++i) {
      const double saved = (*tensors[t])[i];
      (*tensors[t])[i] = saved + eps;
      const double up = value_at(probe);
      (*tensors[t])[i] = saved - eps;
      const double down = value_at(probe);
      (*tensors[t])[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[t][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.checked;
    }
  }
  return out;
}

/// Closed form for the contrastive loss under uniform probabilities.
inline double uniform_loss(std::size_t n) {
  const double nn = static_cast<double>(n);
  return std::log(1.0 + nn) - nn * std::log(nn / (nn + 1.0));
}

inline ProbVector uniform_probs(std::size_t n) {
  std::vector<std::uint64_t> ids(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    ids[i] = i;
  }
  return {ids, nd::constant(nd::Tensor::vector(std::vector<double>(n + 1, 1.0 / static_cast<double>(n + 1))))};
}

// Reference implementations written from the textbook definitions over a
// 0/1 gain vector, independent of the library's code paths.
inline double ref_rr(const std::vector<int>& gains, std::size_t k) {
  for (std::size_t r = 0; r < gains.size() && r < k; ++r) {
    if (gains[r]) return 1.0 / static_cast<double>(r + 1);
  }
  return 0.0;
}

inline double ref_ap(const std::vector<int>& gains, std::size_t total_relevant, std::size_t k) {
  double sum = 0.0;
  for (std::size_t r = 0; r < gains.size() && r < k; ++r) {
    if (!gains[r]) continue;
    int hits = 0;
    for (std::size_t j = 0; j <= r; ++j) hits += gains[j];
    sum += hits / static_cast<double>(r + 1);
  }
  return total_relevant ? sum / static_cast<double>(std::min(total_relevant, k)) : 0.0;
}

inline double ref_ndcg(const std::vector<int>& gains, std::size_t total_relevant, std::size_t k) {
  auto dcg = [&](const std::vector<int>& g) {
    double s = 0.0;
    for (std::size_t r = 0; r < g.size() && r < k; ++r) s += g[r] / std::log2(static_cast<double>(r) + 2.0);
    return s;
  };
  std::vector<int> ideal(total_relevant, 1);
  return total_relevant ? dcg(gains) / dcg(ideal) : 0.0;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sir-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sirtest
