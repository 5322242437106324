// SPDX-License-Identifier: Apache-2.0
//
// Binary-relevance ranking metrics (MRR@k, MAP@k, NDCG@k) and run reports.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sir/error.hpp"
#include "sir/scorer.hpp"
#include "sir/text.hpp"

namespace sir {

/// query id -> relevant doc ids.
using Qrels = std::map<std::string, std::set<std::string>>;

struct Candidate {
  std::string doc_id;
  EncodedText text;
};

struct RankedDoc {
  std::string doc_id;
  double score = 0.0;
};

/// query id -> ranked docs, best first. Ordered map keeps reports deterministic.
using Rankings = std::map<std::string, std::vector<RankedDoc>>;

/// Candidates sorted by logit descending, ties by doc id ascending.
inline std::vector<RankedDoc> rank_candidates(const ScorerParams& params, const EncodedText& query,
                                              const std::vector<Candidate>& candidates) {
  if (candidates.empty()) {
    throw ArgumentError("rank_candidates: no candidates");
  }
  const BoundScorer scorer(params, false);
  std::vector<const EncodedText*> docs;
  docs.reserve(candidates.size());
  for (const auto& c : candidates) {
    docs.push_back(&c.text);
  }
  const nd::Var logits = scorer.score_many(scorer.embed(query), docs);
  std::vector<RankedDoc> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.push_back({candidates[i].doc_id, logits.value()[i]});
  }
  std::sort(out.begin(), out.end(), [](const RankedDoc& a, const RankedDoc& b) {
    return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
  });
  return out;
}

// ---- per-query metrics ------------------------------------------------------

namespace detail {
inline void check_cutoff(std::size_t k) {
  if (k < 1) {
    throw ArgumentError("metric cutoff must be >= 1");
  }
}
}  // namespace detail

/// 1/rank of the first relevant doc within the top k, else 0.
inline double reciprocal_rank(std::span<const std::string> ranking, const std::set<std::string>& relevant,
                              std::size_t k) {
  detail::check_cutoff(k);
  const std::size_t depth = std::min(k, ranking.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (relevant.contains(ranking[r])) {
      return 1.0 / static_cast<double>(r + 1);
    }
  }
  return 0.0;
}

/// Sum of precision at each relevant hit within the top k, over min(|relevant|, k).
inline double average_precision(std::span<const std::string> ranking, const std::set<std::string>& relevant,
                                std::size_t k) {
  detail::check_cutoff(k);
  if (relevant.empty()) {
    return 0.0;
  }
  const std::size_t depth = std::min(k, ranking.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (relevant.contains(ranking[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(std::min(relevant.size(), k));
}

/// DCG@k / IDCG@k with binary gains and log2(rank + 1) discounts.
inline double ndcg(std::span<const std::string> ranking, const std::set<std::string>& relevant, std::size_t k) {
  detail::check_cutoff(k);
  if (relevant.empty()) {
    return 0.0;
  }
  const std::size_t depth = std::min(k, ranking.size());
  double dcg = 0.0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (relevant.contains(ranking[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r + 2));
    }
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r + 2));
  }
  return dcg / idcg;
}

// ---- aggregates -------------------------------------------------------------

struct MetricValue {
  double value = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // no judged relevant docs
};

namespace detail {

template <typename PerQuery>
MetricValue aggregate(const Rankings& rankings, const Qrels& qrels, std::size_t k, PerQuery per_query) {
  check_cutoff(k);
  MetricValue out;
  double sum = 0.0;
  std::vector<std::string> ids;
  for (const auto& [qid, ranked] : rankings) {
    auto it = qrels.find(qid);
    if (it == qrels.end() || it->second.empty()) {
      ++out.skipped;
      continue;
    }
    ids.clear();
    for (const auto& d : ranked) {
      ids.push_back(d.doc_id);
    }
    sum += per_query(ids, it->second, k);
    ++out.evaluated;
  }
  out.value = out.evaluated ? sum / static_cast<double>(out.evaluated) : 0.0;
  return out;
}

}  // namespace detail

inline MetricValue mrr_at_k(const Rankings& rankings, const Qrels& qrels, std::size_t k) {
  return detail::aggregate(rankings, qrels, k, [](const auto& r, const auto& rel, std::size_t kk) {
    return reciprocal_rank(r, rel, kk);
  });
}

inline MetricValue map_at_k(const Rankings& rankings, const Qrels& qrels, std::size_t k) {
  return detail::aggregate(rankings, qrels, k, [](const auto& r, const auto& rel, std::size_t kk) {
    return average_precision(r, rel, kk);
  });
}

inline MetricValue ndcg_at_k(const Rankings& rankings, const Qrels& qrels, std::size_t k) {
  return detail::aggregate(rankings, qrels, k,
                           [](const auto& r, const auto& rel, std::size_t kk) { return ndcg(r, rel, kk); });
}

struct MetricRow {
  std::string metric;  // "mrr" | "map" | "ndcg"
  std::size_t cutoff = 0;
  MetricValue result;
};

struct RankedRunReport {
  Rankings rankings;
  std::vector<std::size_t> cutoffs;
  std::vector<MetricRow> rows;

  /// Row for (metric, cutoff), or nullptr.
  const MetricRow* find(const std::string& metric, std::size_t cutoff) const {
    for (const auto& r : rows) {
      if (r.metric == metric && r.cutoff == cutoff) {
        return &r;
      }
    }
    return nullptr;
  }

  void write_csv(std::ostream& out) const {
    out << "metric,cutoff,value,queries_evaluated,queries_skipped\n";
    for (const auto& r : rows) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", r.result.value);
      out << r.metric << ',' << r.cutoff << ',' << buf << ',' << r.result.evaluated << ','
          << r.result.skipped << '\n';
    }
  }

  /// `qid Q0 did rank score tag`, rank 1-based.
  void write_trec(std::ostream& out, const std::string& tag) const {
    for (const auto& [qid, ranked] : rankings) {
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", ranked[i].score);
        out << qid << " Q0 " << ranked[i].doc_id << ' ' << (i + 1) << ' ' << buf << ' ' << tag << '\n';
      }
    }
  }
};

/// mrr/map/ndcg rows for each cutoff.
inline RankedRunReport evaluate(Rankings rankings, const Qrels& qrels, std::vector<std::size_t> cutoffs) {
  RankedRunReport report;
  report.rankings = std::move(rankings);
  report.cutoffs = std::move(cutoffs);
  for (const char* metric : {"mrr", "map", "ndcg"}) {
    for (auto k : report.cutoffs) {
      MetricValue v;
      if (std::string(metric) == "mrr") {
        v = mrr_at_k(report.rankings, qrels, k);
      } else if (std::string(metric) == "map") {
        v = map_at_k(report.rankings, qrels, k);
      } else {
        v = ndcg_at_k(report.rankings, qrels, k);
      }
      report.rows.push_back({metric, k, v});
    }
  }
  return report;
}

}  // namespace sir
