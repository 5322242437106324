// SPDX-License-Identifier: Apache-2.0
//
// JSON experiment configuration: parsing with field-path diagnostics,
// dotted-path overrides, seed resolution and serialization.
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sir/config.hpp"
#include "sir/data.hpp"
#include "sir/error.hpp"
#include "sir/random.hpp"
#include "sir/text.hpp"

namespace sir {

using Json = nlohmann::json;

struct FileSource {
  std::string queries;
  std::string corpus;
  std::string candidates;
  std::string qrels;
};

struct DataSource {
  std::optional<SyntheticSpec> synthetic;
  std::size_t eval_queries = 100;  // held-out synthetic queries
  std::optional<FileSource> train;
  std::optional<FileSource> eval;  // defaults to the training files
};

/// Everything one `sir train` run needs.
struct RunConfig {
  SirConfig sir;
  DataSource data;
  std::size_t negatives = 23;  // N for file-based block assembly
  std::vector<std::size_t> cutoffs{10, 100};
  std::optional<std::string> init_checkpoint;
};

namespace detail {

class JsonReader {
 public:
  JsonReader(const Json& root, std::string path) : node_(root), path_(std::move(path)) {
    if (!node_.is_object()) {
      throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const {
    used_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  const Json& raw(const std::string& key) const { return node_.at(key); }

  JsonReader child(const std::string& key) const {
    used_.insert(key);
    return JsonReader(node_.at(key), field(key));
  }

  template <typename T>
  void read(const std::string& key, T& target) const {
    if (!has(key)) {
      return;
    }
    try {
      target = node_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field(key), "has the wrong type (" + std::string(node_.at(key).type_name()) + ")");
    }
  }

  /// Keys present in the object that no reader call asked about.
  void reject_unknown() const {
    for (const auto& [key, value] : node_.items()) {
      if (!used_.contains(key)) {
        throw ConfigError(field(key), "unknown field");
      }
    }
  }

 private:
  const Json& node_;
  std::string path_;
  mutable std::set<std::string> used_;
};

inline void read_double(const JsonReader& r, const std::string& key, double& target) {
  if (r.has(key) && !r.raw(key).is_number()) {
    throw ConfigError(r.field(key), "expected a number");
  }
  r.read(key, target);
}

template <typename T>
void read_count(const JsonReader& r, const std::string& key, T& target) {
  if (r.has(key) && !r.raw(key).is_number_unsigned()) {
    throw ConfigError(r.field(key), "expected a non-negative integer");
  }
  r.read(key, target);
}

inline void read_counts(const JsonReader& r, const std::string& key, std::vector<std::size_t>& target) {
  if (!r.has(key)) {
    return;
  }
  const auto& v = r.raw(key);
  if (!v.is_array()) {
    throw ConfigError(r.field(key), "expected an array of non-negative integers");
  }
  target.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_unsigned()) {
      throw ConfigError(r.field(key) + "[" + std::to_string(i) + "]", "expected a non-negative integer");
    }
    target.push_back(v[i].get<std::size_t>());
  }
}

inline FileSource read_files(const JsonReader& r) {
  FileSource f;
  for (auto [key, target] : {std::pair{"queries", &f.queries}, std::pair{"corpus", &f.corpus},
                             std::pair{"candidates", &f.candidates}, std::pair{"qrels", &f.qrels}}) {
    if (!r.has(key)) {
      throw ConfigError(r.field(key), "missing data path");
    }
    r.read(key, *target);
  }
  r.reject_unknown();
  return f;
}

inline SyntheticSpec read_synthetic(const JsonReader& r, std::size_t& eval_queries) {
  SyntheticSpec s;
  read_count(r, "num_queries", s.num_queries);
  read_count(r, "eval_queries", eval_queries);
  read_count(r, "negatives", s.negatives);
  read_count(r, "vocab_size", s.vocab_size);
  read_count(r, "difficulty_levels", s.difficulty_levels);
  read_count(r, "query_len", s.query_len);
  read_count(r, "doc_len", s.doc_len);
  read_double(r, "positive_overlap", s.positive_overlap);
  if (r.has("negative_overlap")) {
    r.read("negative_overlap", s.negative_overlap);
  }
  read_count(r, "seed", s.seed);
  r.reject_unknown();
  return s;
}

}  // namespace detail

/// Parses a run configuration. Missing fields keep their defaults; derived
/// seeds stay unresolved until `resolve_seeds`.
inline RunConfig parse_run_config(const Json& root, bool* scorer_seed_given = nullptr,
                                  bool* schedule_seed_given = nullptr) {
  using detail::JsonReader;
  RunConfig cfg;
  const JsonReader r(root, "");
  if (r.has("strategy")) {
    std::string s;
    r.read("strategy", s);
    auto parsed = parse_strategy(s);
    if (!parsed) {
      throw ConfigError("strategy", "unknown strategy '" + s + "' (expected V0..V4)");
    }
    cfg.sir.strategy = *parsed;
  }
  bool sched_seed = false;
  if (r.has("schedule")) {
    const auto sr = r.child("schedule");
    detail::read_counts(sr, "k", cfg.sir.schedule.k_per_level);
    if (sr.has("selection")) {
      std::string s;
      sr.read("selection", s);
      auto parsed = parse_selection(s);
      if (!parsed) {
        throw ConfigError("schedule.selection", "expected 'top_k' or 'random'");
      }
      cfg.sir.schedule.selection = *parsed;
    }
    sched_seed = sr.has("seed");
    detail::read_count(sr, "seed", cfg.sir.schedule.rng_seed);
    sr.reject_unknown();
  }
  detail::read_count(r, "epochs", cfg.sir.epochs);
  detail::read_counts(r, "level_epochs", cfg.sir.level_epochs);
  detail::read_count(r, "batch_blocks", cfg.sir.batch_blocks);
  if (r.has("optimizer")) {
    const auto o = r.child("optimizer");
    detail::read_double(o, "lr", cfg.sir.optimizer.lr);
    detail::read_double(o, "beta1", cfg.sir.optimizer.beta1);
    detail::read_double(o, "beta2", cfg.sir.optimizer.beta2);
    detail::read_double(o, "weight_decay", cfg.sir.optimizer.weight_decay);
    detail::read_double(o, "eps", cfg.sir.optimizer.eps);
    o.reject_unknown();
  }
  bool scorer_seed = false;
  if (r.has("scorer")) {
    const auto s = r.child("scorer");
    detail::read_count(s, "vocab_buckets", cfg.sir.scorer.vocab_buckets);
    detail::read_count(s, "embed_dim", cfg.sir.scorer.embed_dim);
    detail::read_count(s, "hidden_dim", cfg.sir.scorer.hidden_dim);
    scorer_seed = s.has("seed");
    detail::read_count(s, "seed", cfg.sir.scorer.seed);
    s.reject_unknown();
  }
  detail::read_count(r, "seed", cfg.sir.seed);
  detail::read_count(r, "negatives", cfg.negatives);
  detail::read_counts(r, "cutoffs", cfg.cutoffs);
  if (r.has("init_checkpoint")) {
    std::string path;
    r.read("init_checkpoint", path);
    cfg.init_checkpoint = path;
  }
  if (!r.has("data")) {
    throw ConfigError("data", "missing data source");
  }
  const auto d = r.child("data");
  if (d.has("synthetic")) {
    cfg.data.synthetic = detail::read_synthetic(d.child("synthetic"), cfg.data.eval_queries);
  }
  if (d.has("train")) {
    cfg.data.train = detail::read_files(d.child("train"));
  }
  if (d.has("eval")) {
    cfg.data.eval = detail::read_files(d.child("eval"));
  }
  d.reject_unknown();
  if (cfg.data.synthetic.has_value() == cfg.data.train.has_value()) {
    throw ConfigError("data", "exactly one of data.synthetic and data.train must be given");
  }
  if (cfg.cutoffs.empty()) {
    throw ConfigError("cutoffs", "at least one cutoff required");
  }
  for (std::size_t i = 0; i < cfg.cutoffs.size(); ++i) {
    if (cfg.cutoffs[i] < 1) {
      throw ConfigError("cutoffs[" + std::to_string(i) + "]", "must be >= 1");
    }
  }
  if (cfg.data.synthetic) {
    cfg.data.synthetic->validate();
  }
  r.reject_unknown();
  if (scorer_seed_given) *scorer_seed_given = scorer_seed;
  if (schedule_seed_given) *schedule_seed_given = sched_seed;
  return cfg;
}

/// Parses and fills every derived seed from the master seed.
inline RunConfig resolve_run_config(const Json& root) {
  bool scorer_seed = false;
  bool schedule_seed = false;
  RunConfig cfg = parse_run_config(root, &scorer_seed, &schedule_seed);
  if (!scorer_seed) {
    cfg.sir.scorer.seed = mix_seed(cfg.sir.seed, 2);
  }
  if (!schedule_seed) {
    cfg.sir.schedule.rng_seed = mix_seed(cfg.sir.seed, 3);
  }
  return cfg;
}

inline Json to_json(const RunConfig& cfg) {
  const auto& s = cfg.sir;
  Json out = {
      {"strategy", std::string(to_string(s.strategy))},
      {"schedule",
       {{"k", s.schedule.k_per_level},
        {"selection", std::string(to_string(s.schedule.selection))},
        {"seed", s.schedule.rng_seed}}},
      {"epochs", s.epochs},
      {"level_epochs", s.level_epochs},
      {"batch_blocks", s.batch_blocks},
      {"optimizer",
       {{"lr", s.optimizer.lr},
        {"beta1", s.optimizer.beta1},
        {"beta2", s.optimizer.beta2},
        {"weight_decay", s.optimizer.weight_decay},
        {"eps", s.optimizer.eps}}},
      {"scorer",
       {{"vocab_buckets", s.scorer.vocab_buckets},
        {"embed_dim", s.scorer.embed_dim},
        {"hidden_dim", s.scorer.hidden_dim},
        {"seed", s.scorer.seed}}},
      {"seed", s.seed},
      {"negatives", cfg.negatives},
      {"cutoffs", cfg.cutoffs},
  };
  if (cfg.init_checkpoint) {
    out["init_checkpoint"] = *cfg.init_checkpoint;
  }
  Json data = Json::object();
  if (const auto& sy = cfg.data.synthetic) {
    data["synthetic"] = {{"num_queries", sy->num_queries},
                         {"eval_queries", cfg.data.eval_queries},
                         {"negatives", sy->negatives},
                         {"vocab_size", sy->vocab_size},
                         {"difficulty_levels", sy->difficulty_levels},
                         {"query_len", sy->query_len},
                         {"doc_len", sy->doc_len},
                         {"positive_overlap", sy->positive_overlap},
                         {"negative_overlap", sy->negative_overlap},
                         {"seed", sy->seed}};
  }
  auto files = [](const FileSource& f) {
    return Json{{"queries", f.queries}, {"corpus", f.corpus}, {"candidates", f.candidates}, {"qrels", f.qrels}};
  };
  if (cfg.data.train) {
    data["train"] = files(*cfg.data.train);
  }
  if (cfg.data.eval) {
    data["eval"] = files(*cfg.data.eval);
  }
  out["data"] = data;
  return out;
}

/// Applies `key.path=value`. The value is read as JSON when it parses,
/// otherwise as a string; missing intermediate objects are created.
inline void apply_override(Json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) {
    value = text;
  }
  Json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) {
      throw ConfigError(path, "empty path component");
    }
    if (!node->is_object()) {
      throw ConfigError(path, "cannot descend into a non-object");
    }
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) {
      *node = Json::object();
    }
    start = dot + 1;
  }
}

inline Json read_json_file(const std::string& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(field, "cannot open '" + path + "'");
  }
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError(field, "'" + path + "' is not valid JSON");
  }
  return j;
}

/// Hex FNV-1a of the canonical config text; stable run identifier.
inline std::string run_id(const Json& resolved) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(resolved.dump())));
  return buf;
}

}  // namespace sir
