// SPDX-License-Identifier: Apache-2.0
//
// Compressor cascade: contrastive loss, negative selection, block
// compression, the conditional-probability (CPR) signal and the per-strategy
// objectives.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sir/block.hpp"
#include "sir/config.hpp"
#include "sir/error.hpp"
#include "sir/ndgrad.hpp"
#include "sir/random.hpp"
#include "sir/scorer.hpp"

namespace sir {

inline constexpr double kProbClamp = 1e-12;

inline ProbVector softmax(const ScoreVector& scores) { return {scores.ids, nd::softmax(scores.logits)}; }

/// -log P(o^0) - sum_j log(1 - P(o^j)), probabilities clamped to
/// [1e-12, 1 - 1e-12]. Index 0 must be the positive.
inline nd::Var contrastive_loss(const ProbVector& p) {
  const std::size_t n = p.size();
  if (n < 2 || p.probs.size() != n) {
    throw ArgumentError("contrastive_loss: need a positive and at least one negative");
  }
  const nd::Var clamped = nd::clamp(p.probs, kProbClamp, 1.0 - kProbClamp);
  const nd::Var positive_term = nd::log(nd::element(clamped, 0));
  const nd::Var negative_terms = nd::sum(nd::log(1.0 - nd::slice(clamped, 1, n)));
  return -(positive_term + negative_terms);
}

/// Positions (0-based among the negatives) of the K negatives to keep.
///
/// top_k: largest scores first, ties to the smaller position.
/// random: K distinct positions uniformly without replacement, in draw order.
inline std::vector<std::size_t> select_negative_positions(std::span<const double> negative_scores,
                                                          std::size_t k, SelectionMode mode,
                                                          Pcg32& rng) {
  const std::size_t n = negative_scores.size();
  if (k > n) {
    throw ArgumentError("select_negatives: K=" + std::to_string(k) + " exceeds " +
                        std::to_string(n) + " available negatives");
  }
  if (mode == SelectionMode::random) {
    return sample_without_replacement(n, k, rng);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return negative_scores[a] > negative_scores[b];
  });
  order.resize(k);
  return order;
}

/// Sample ids of the K selected negatives; the positive (index 0) is never returned.
inline std::vector<std::uint64_t> select_negatives(const ScoreVector& scores, std::size_t k,
                                                   SelectionMode mode, Pcg32& rng) {
  if (scores.size() < 1) {
    throw ArgumentError("select_negatives: empty score vector");
  }
  const auto& v = scores.logits.value().data();
  const auto picked = select_negative_positions(std::span<const double>(v).subspan(1), k, mode, rng);
  std::vector<std::uint64_t> ids;
  ids.reserve(picked.size());
  for (auto pos : picked) {
    ids.push_back(scores.ids[pos + 1]);
  }
  return ids;
}

/// Positive followed by the `selected` negatives in the given order.
inline TrainingBlock compress_block(const TrainingBlock& block, const std::vector<std::uint64_t>& selected) {
  if (selected.empty()) {
    throw ArgumentError("compress_block: must keep at least one negative");
  }
  std::unordered_map<std::uint64_t, std::size_t> where;
  for (std::size_t i = 1; i < block.samples.size(); ++i) {
    where.emplace(block.samples[i].id, i);
  }
  TrainingBlock out;
  out.query_id = block.query_id;
  out.query = block.query;
  out.samples.reserve(selected.size() + 1);
  out.samples.push_back(block.samples.at(0));
  for (auto id : selected) {
    auto it = where.find(id);
    if (it == where.end()) {
      throw ArgumentError("compress_block: id " + std::to_string(id) + " is not a negative of block " +
                          block.query_id);
    }
    out.samples.push_back(block.samples[it->second]);
    where.erase(it);  // rejects duplicates on a second hit
  }
  return out;
}

/// softmax(P_1 * P_2 * ... * P_i) over `surviving_ids`, each P_l gathered by sample id.
inline ProbVector cpr(std::span<const ProbVector> history, const std::vector<std::uint64_t>& surviving_ids) {
  if (history.empty() || surviving_ids.empty()) {
    throw ArgumentError("cpr: empty history or id list");
  }
  nd::Var product;
  for (std::size_t level = 0; level < history.size(); ++level) {
    const auto& p = history[level];
    std::vector<std::size_t> at;
    at.reserve(surviving_ids.size());
    for (auto id : surviving_ids) {
      const auto idx = p.index_of(id);
      if (!idx) {
        throw ConsistencyError("cpr: sample " + std::to_string(id) + " missing from level " +
                               std::to_string(level + 1) + " probabilities");
      }
      at.push_back(*idx);
    }
    nd::Var gathered = nd::gather(p.probs, std::move(at));
    product = level == 0 ? gathered : product * gathered;
  }
  return {surviving_ids, nd::softmax(product)};
}

/// Contrastive loss over a CPR vector.
inline nd::Var v4_level_loss(const ProbVector& cpr_i) { return contrastive_loss(cpr_i); }

/// Everything one cascade level produced for a block.
struct LevelForward {
  TrainingBlock block;
  ScoreVector scores;
  ProbVector probs;
};

/// Forward a block through the compressor cascade with a single scorer.
/// Selection uses realized score values only; no gradient flows through it.
inline std::vector<LevelForward> run_cascade(const BoundScorer& scorer, const TrainingBlock& block,
                                             const CompressorSchedule& schedule, Pcg32& rng) {
  std::vector<LevelForward> levels;
  levels.reserve(schedule.levels());
  TrainingBlock current = block;
  for (std::size_t level = 0;; ++level) {
    ScoreVector scores = score_block(scorer, current);
    ProbVector probs = softmax(scores);
    levels.push_back({std::move(current), std::move(scores), std::move(probs)});
    if (level == schedule.k_per_level.size()) {
      break;
    }
    const auto& last = levels.back();
    current = compress_block(last.block,
                             select_negatives(last.scores, schedule.k_per_level[level], schedule.selection, rng));
  }
  return levels;
}

/// Total objective plus per-level component values (level is 1-based).
struct LossBreakdown {
  nd::Var total;
  std::vector<std::pair<std::size_t, double>> components;
};

/// V0/V1/V2: contrastive loss of the single level being trained.
/// V3: first level + last level.
/// V4: sum over levels of the loss on CPR_i.
inline LossBreakdown total_loss(Strategy strategy, const std::vector<LevelForward>& levels) {
  if (levels.empty()) {
    throw ArgumentError("total_loss: no levels");
  }
  LossBreakdown out;
  switch (strategy) {
    case Strategy::V0:
    case Strategy::V1:
    case Strategy::V2: {
      if (levels.size() != 1) {
        throw ArgumentError("total_loss: " + std::string(to_string(strategy)) +
                            " trains one compressor at a time; got " + std::to_string(levels.size()) +
                            " levels");
      }
      out.total = contrastive_loss(levels[0].probs);
      out.components.emplace_back(1, out.total.item());
      break;
    }
    case Strategy::V3: {
      const nd::Var first = contrastive_loss(levels.front().probs);
      const nd::Var last = contrastive_loss(levels.back().probs);
      out.total = first + last;
      out.components.emplace_back(1, first.item());
      out.components.emplace_back(levels.size(), last.item());
      break;
    }
    case Strategy::V4: {
      std::vector<ProbVector> history;
      history.reserve(levels.size());
      for (std::size_t i = 0; i < levels.size(); ++i) {
        history.push_back(levels[i].probs);
        const nd::Var li = v4_level_loss(cpr(history, levels[i].scores.ids));
        out.total = i == 0 ? li : out.total + li;
        out.components.emplace_back(i + 1, li.item());
      }
      break;
    }
  }
  return out;
}

}  // namespace sir
