// SPDX-License-Identifier: Apache-2.0
//
// Tabular inputs in the MS MARCO document-ranking layout, block assembly and
// a synthetic corpus with planted negative difficulty.
//
//   queries.tsv     qid<TAB>text
//   corpus.tsv      did<TAB>url<TAB>title<TAB>body      (url/title may be empty)
//   candidates.tsv  qid<TAB>did<TAB>rank
//   qrels           qid 0 did rel                        (space or tab separated)
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sir/block.hpp"
#include "sir/error.hpp"
#include "sir/metrics.hpp"
#include "sir/random.hpp"
#include "sir/text.hpp"

namespace sir {

struct QueryRecord {
  std::string qid;
  std::string text;
  bool operator==(const QueryRecord&) const = default;
};

struct Document {
  std::string did;
  std::string url;
  std::string title;
  std::string body;

  /// Text fed to the scorer.
  std::string text() const { return title.empty() ? body : title + " " + body; }
  bool operator==(const Document&) const = default;
};

struct CandidateEntry {
  std::string did;
  std::size_t rank = 0;
  bool operator==(const CandidateEntry&) const = default;
};

using QueryTable = std::vector<QueryRecord>;
using CorpusTable = std::vector<Document>;
/// qid -> candidates in ascending rank order.
using CandidateSet = std::map<std::string, std::vector<CandidateEntry>>;

namespace detail {

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) {
      return out;
    }
    start = pos + 1;
  }
}

inline std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string field;
  while (in >> field) {
    out.push_back(field);
  }
  return out;
}

/// Calls `fn(line_number, line)` for every non-blank line, CR stripped.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.find_first_not_of(" \t") == std::string::npos) {
      continue;
    }
    fn(number, line);
  }
}

inline std::size_t parse_count(const std::string& field, const std::string& source, std::size_t line,
                               const char* what) {
  std::size_t value = 0;
  std::size_t used = 0;
  try {
    if (!field.empty() && field[0] != '-') {
      value = std::stoull(field, &used);
    }
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != field.size()) {
    throw IngestError(source, line, std::string("invalid ") + what + " '" + field + "'");
  }
  return value;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IngestError(path, 0, "cannot open file");
  }
  return in;
}

}  // namespace detail

// ---- parsing ----------------------------------------------------------------

inline QueryTable parse_queries(std::istream& in, const std::string& source = "queries") {
  QueryTable out;
  std::unordered_map<std::string, std::size_t> seen;
  detail::for_each_line(in, [&](std::size_t n, const std::string& line) {
    auto fields = detail::split(line, '\t');
    if (fields.size() != 2 || fields[0].empty()) {
      throw IngestError(source, n, "expected 'qid<TAB>text'");
    }
    if (auto [it, fresh] = seen.emplace(fields[0], n); !fresh) {
      throw IngestError(source, n, "duplicate query id '" + fields[0] + "' (first on line " +
                                       std::to_string(it->second) + ")");
    }
    out.push_back({std::move(fields[0]), std::move(fields[1])});
  });
  return out;
}

inline CorpusTable parse_corpus(std::istream& in, const std::string& source = "corpus") {
  CorpusTable out;
  std::unordered_map<std::string, std::size_t> seen;
  detail::for_each_line(in, [&](std::size_t n, const std::string& line) {
    auto fields = detail::split(line, '\t');
    if (fields.size() != 4 || fields[0].empty()) {
      throw IngestError(source, n, "expected 'did<TAB>url<TAB>title<TAB>body'");
    }
    if (auto [it, fresh] = seen.emplace(fields[0], n); !fresh) {
      throw IngestError(source, n, "duplicate doc id '" + fields[0] + "' (first on line " +
                                       std::to_string(it->second) + ")");
    }
    out.push_back({std::move(fields[0]), std::move(fields[1]), std::move(fields[2]), std::move(fields[3])});
  });
  return out;
}

inline CandidateSet parse_candidates(std::istream& in, const std::string& source = "candidates") {
  CandidateSet out;
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  detail::for_each_line(in, [&](std::size_t n, const std::string& line) {
    auto fields = detail::split(line, '\t');
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw IngestError(source, n, "expected 'qid<TAB>did<TAB>rank'");
    }
    const std::size_t rank = detail::parse_count(fields[2], source, n, "rank");
    if (auto [it, fresh] = seen.emplace(std::make_pair(fields[0], fields[1]), n); !fresh) {
      throw IngestError(source, n, "duplicate candidate '" + fields[1] + "' for query '" + fields[0] +
                                       "' (first on line " + std::to_string(it->second) + ")");
    }
    out[fields[0]].push_back({std::move(fields[1]), rank});
  });
  for (auto& [qid, list] : out) {
    std::stable_sort(list.begin(), list.end(),
                     [](const CandidateEntry& a, const CandidateEntry& b) { return a.rank < b.rank; });
  }
  return out;
}

/// Only rel > 0 judgments are kept.
inline Qrels parse_qrels(std::istream& in, const std::string& source = "qrels") {
  Qrels out;
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  detail::for_each_line(in, [&](std::size_t n, const std::string& line) {
    auto fields = detail::split_whitespace(line);
    if (fields.size() != 4) {
      throw IngestError(source, n, "expected 'qid 0 did rel'");
    }
    const std::size_t rel = detail::parse_count(fields[3], source, n, "relevance");
    if (auto [it, fresh] = seen.emplace(std::make_pair(fields[0], fields[2]), n); !fresh) {
      throw IngestError(source, n, "duplicate judgment for '" + fields[0] + "' / '" + fields[2] +
                                       "' (first on line " + std::to_string(it->second) + ")");
    }
    if (rel > 0) {
      out[fields[0]].insert(fields[2]);
    } else {
      out.try_emplace(fields[0]);
    }
  });
  return out;
}

inline QueryTable load_queries(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_queries(in, path);
}

inline CorpusTable load_tsv_corpus(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_corpus(in, path);
}

inline CandidateSet load_candidates(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_candidates(in, path);
}

inline Qrels load_qrels(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_qrels(in, path);
}

// ---- writing ------------------------------------------------------------------

inline void write_queries(std::ostream& out, const QueryTable& queries) {
  for (const auto& q : queries) {
    out << q.qid << '\t' << q.text << '\n';
  }
}

inline void write_corpus(std::ostream& out, const CorpusTable& corpus) {
  for (const auto& d : corpus) {
    out << d.did << '\t' << d.url << '\t' << d.title << '\t' << d.body << '\n';
  }
}

inline void write_candidates(std::ostream& out, const CandidateSet& candidates) {
  for (const auto& [qid, list] : candidates) {
    for (const auto& c : list) {
      out << qid << '\t' << c.did << '\t' << c.rank << '\n';
    }
  }
}

inline void write_qrels(std::ostream& out, const Qrels& qrels) {
  for (const auto& [qid, docs] : qrels) {
    for (const auto& did : docs) {
      out << qid << " 0 " << did << " 1\n";
    }
  }
}

// ---- blocks -------------------------------------------------------------------

struct AssembledBlocks {
  std::vector<TrainingBlock> blocks;
  std::size_t skipped_short = 0;        // fewer than N non-relevant candidates
  std::size_t skipped_no_positive = 0;  // no relevant candidate
};

namespace detail {

inline std::unordered_map<std::string, const Document*> index_corpus(const CorpusTable& corpus) {
  std::unordered_map<std::string, const Document*> out;
  out.reserve(corpus.size());
  for (const auto& d : corpus) {
    out.emplace(d.did, &d);
  }
  return out;
}

inline const Document& lookup_doc(const std::unordered_map<std::string, const Document*>& index,
                                  const std::string& did, const std::string& qid) {
  auto it = index.find(did);
  if (it == index.end()) {
    throw IngestError("candidates", 0, "query '" + qid + "' references missing document '" + did + "'");
  }
  return *it->second;
}

}  // namespace detail

/// One block per query that has candidates: the first relevant candidate as
/// positive, then N non-relevant candidates drawn without replacement.
inline AssembledBlocks assemble_blocks(const QueryTable& queries, const CorpusTable& corpus,
                                       const CandidateSet& candidates, const Qrels& qrels, std::size_t negatives,
                                       std::uint64_t seed, std::uint32_t vocab_buckets) {
  if (negatives < 1) {
    throw ArgumentError("assemble_blocks: need at least one negative per block");
  }
  const auto docs = detail::index_corpus(corpus);
  Pcg32 rng(seed);
  AssembledBlocks out;
  static const std::set<std::string> kNone;
  for (const auto& q : queries) {
    auto cand = candidates.find(q.qid);
    if (cand == candidates.end()) {
      continue;
    }
    auto rel_it = qrels.find(q.qid);
    const auto& relevant = rel_it == qrels.end() ? kNone : rel_it->second;
    const CandidateEntry* positive = nullptr;
    std::vector<const CandidateEntry*> pool;
    for (const auto& c : cand->second) {
      if (relevant.contains(c.did)) {
        if (positive == nullptr) {
          positive = &c;
        }
      } else {
        pool.push_back(&c);
      }
    }
    if (positive == nullptr) {
      ++out.skipped_no_positive;
      continue;
    }
    if (pool.size() < negatives) {
      ++out.skipped_short;
      continue;
    }
    TrainingBlock block;
    block.query_id = q.qid;
    block.query = encode(q.text, vocab_buckets);
    const auto& pos_doc = detail::lookup_doc(docs, positive->did, q.qid);
    block.samples.push_back({0, pos_doc.did, encode(pos_doc.text(), vocab_buckets), Label::positive, {}});
    std::uint64_t next_id = 1;
    for (auto idx : sample_without_replacement(pool.size(), negatives, rng)) {
      const auto& doc = detail::lookup_doc(docs, pool[idx]->did, q.qid);
      block.samples.push_back({next_id++, doc.did, encode(doc.text(), vocab_buckets), Label::negative, {}});
    }
    out.blocks.push_back(std::move(block));
  }
  return out;
}

/// Per-query query text and candidate texts for ranking.
struct EvalQuery {
  std::string qid;
  EncodedText query;
  std::vector<Candidate> candidates;
};

inline std::vector<EvalQuery> build_eval_set(const QueryTable& queries, const CorpusTable& corpus,
                                             const CandidateSet& candidates, std::uint32_t vocab_buckets) {
  const auto docs = detail::index_corpus(corpus);
  std::vector<EvalQuery> out;
  for (const auto& q : queries) {
    auto cand = candidates.find(q.qid);
    if (cand == candidates.end() || cand->second.empty()) {
      continue;
    }
    EvalQuery eq{q.qid, encode(q.text, vocab_buckets), {}};
    for (const auto& c : cand->second) {
      eq.candidates.push_back({c.did, encode(detail::lookup_doc(docs, c.did, q.qid).text(), vocab_buckets)});
    }
    out.push_back(std::move(eq));
  }
  return out;
}

inline Rankings rank_all(const ScorerParams& params, const std::vector<EvalQuery>& eval) {
  Rankings out;
  for (const auto& q : eval) {
    out.emplace(q.qid, rank_candidates(params, q.query, q.candidates));
  }
  return out;
}

// ---- synthetic corpus -----------------------------------------------------------

/// Each query is `query_len` distinct random tokens. The positive copies
/// round(positive_overlap * query_len) of them; a negative of difficulty l
/// copies round(negative_overlap[l] * query_len). Remaining document tokens
/// are drawn from the vocabulary minus the query's tokens.
struct SyntheticSpec {
  std::size_t num_queries = 200;
  std::size_t negatives = 23;
  std::size_t vocab_size = 2000;
  std::size_t difficulty_levels = 4;
  std::size_t query_len = 10;
  std::size_t doc_len = 10;
  double positive_overlap = 0.8;
  std::vector<double> negative_overlap{0.0, 0.2, 0.3, 0.5};
  std::uint64_t seed = 1;
  std::string id_prefix = "q";

  std::size_t copies(double fraction) const {
    return static_cast<std::size_t>(std::lround(fraction * static_cast<double>(query_len)));
  }

  void validate() const {
    auto fail = [](const std::string& field, const std::string& msg) { throw ConfigError("synthetic." + field, msg); };
    if (num_queries < 1) fail("num_queries", "must be >= 1");
    if (negatives < 1) fail("negatives", "must be >= 1");
    if (difficulty_levels < 1) fail("difficulty_levels", "must be >= 1");
    if (query_len < 1) fail("query_len", "must be >= 1");
    if (negative_overlap.size() != difficulty_levels) {
      fail("negative_overlap", "needs one fraction per difficulty level");
    }
    const std::size_t pos = copies(positive_overlap);
    if (positive_overlap > 1.0 || pos > query_len) fail("positive_overlap", "must be <= 1");
    if (doc_len < pos) fail("doc_len", "shorter than the positive's copied tokens");
    if (vocab_size < 2 * query_len) fail("vocab_size", "too small for distinct query and filler tokens");
    for (std::size_t l = 0; l < negative_overlap.size(); ++l) {
      if (negative_overlap[l] < 0.0) fail("negative_overlap", "fractions must be >= 0");
      const std::size_t c = copies(negative_overlap[l]);
      if (l > 0 && c <= copies(negative_overlap[l - 1])) {
        fail("negative_overlap", "copied-token counts must strictly increase with difficulty");
      }
      if (c >= pos) fail("negative_overlap", "negatives must overlap less than the positive");
    }
  }
};

struct SyntheticCorpus {
  QueryTable queries;
  CorpusTable corpus;
  CandidateSet candidates;
  Qrels qrels;
  std::map<std::string, int> difficulty;  // negative did -> planted level
};

inline std::string synthetic_token(std::size_t index) { return "w" + std::to_string(index); }

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Pcg32 rng(spec.seed);
  SyntheticCorpus out;
  auto join = [](const std::vector<std::size_t>& tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      s += (i ? " " : "") + synthetic_token(tokens[i]);
    }
    return s;
  };
  for (std::size_t q = 0; q < spec.num_queries; ++q) {
    const std::string qid = spec.id_prefix + std::to_string(q);
    const auto query_tokens = sample_without_replacement(spec.vocab_size, spec.query_len, rng);
    const std::unordered_set<std::size_t> in_query(query_tokens.begin(), query_tokens.end());
    out.queries.push_back({qid, join(query_tokens)});

    auto make_doc = [&](std::size_t copied) {
      std::vector<std::size_t> tokens;
      for (auto pick : sample_without_replacement(spec.query_len, copied, rng)) {
        tokens.push_back(query_tokens[pick]);
      }
      while (tokens.size() < spec.doc_len) {
        const std::size_t t = rng.below(static_cast<std::uint32_t>(spec.vocab_size));
        if (!in_query.contains(t)) {
          tokens.push_back(t);
        }
      }
      shuffle(tokens, rng);
      return join(tokens);
    };

    std::vector<std::pair<std::string, int>> docs;  // did, difficulty (-1 = positive)
    const std::string pos_id = qid + "_p";
    out.corpus.push_back({pos_id, "", "", make_doc(spec.copies(spec.positive_overlap))});
    docs.emplace_back(pos_id, -1);
    for (std::size_t j = 0; j < spec.negatives; ++j) {
      const int level = static_cast<int>(j % spec.difficulty_levels);
      const std::string did = qid + "_n" + std::to_string(j);
      out.corpus.push_back({did, "", "", make_doc(spec.copies(spec.negative_overlap[level]))});
      out.difficulty.emplace(did, level);
      docs.emplace_back(did, level);
    }
    shuffle(docs, rng);
    auto& list = out.candidates[qid];
    for (std::size_t r = 0; r < docs.size(); ++r) {
      list.push_back({docs[r].first, r + 1});
    }
    out.qrels[qid].insert(pos_id);
  }
  return out;
}

/// Blocks of a synthetic corpus with every negative and planted difficulties attached.
inline std::vector<TrainingBlock> synthetic_blocks(const SyntheticCorpus& data, std::uint32_t vocab_buckets) {
  const auto docs = detail::index_corpus(data.corpus);
  std::vector<TrainingBlock> out;
  for (const auto& q : data.queries) {
    const auto& relevant = data.qrels.at(q.qid);
    TrainingBlock block;
    block.query_id = q.qid;
    block.query = encode(q.text, vocab_buckets);
    std::uint64_t next_id = 1;
    std::vector<Sample> negatives;
    for (const auto& c : data.candidates.at(q.qid)) {
      const auto& doc = detail::lookup_doc(docs, c.did, q.qid);
      if (relevant.contains(c.did)) {
        block.samples.insert(block.samples.begin(),
                             Sample{0, doc.did, encode(doc.text(), vocab_buckets), Label::positive, {}});
      } else {
        negatives.push_back(
            {next_id++, doc.did, encode(doc.text(), vocab_buckets), Label::negative, data.difficulty.at(c.did)});
      }
    }
    block.samples.insert(block.samples.end(), negatives.begin(), negatives.end());
    out.push_back(std::move(block));
  }
  return out;
}

/// Fraction of a query's distinct tokens present in a document.
inline double token_overlap(std::string_view query, std::string_view doc) {
  const auto q = tokenize(query);
  const auto d = tokenize(doc);
  const std::set<std::string> qs(q.begin(), q.end());
  const std::set<std::string> ds(d.begin(), d.end());
  std::size_t shared = 0;
  for (const auto& t : qs) {
    shared += ds.contains(t) ? 1 : 0;
  }
  return qs.empty() ? 0.0 : static_cast<double>(shared) / static_cast<double>(qs.size());
}

}  // namespace sir
