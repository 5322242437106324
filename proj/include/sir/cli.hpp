// SPDX-License-Identifier: Apache-2.0
//
// `sir` experiment runner: train, eval, compare, gen-synthetic.
//
// Exit codes: 0 success, 1 unexpected failure, 2 invalid configuration or
// input, 3 numeric failure (non-finite loss or gradient).
#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sir/checkpoint.hpp"
#include "sir/config.hpp"
#include "sir/data.hpp"
#include "sir/error.hpp"
#include "sir/metrics.hpp"
#include "sir/run_config.hpp"
#include "sir/train.hpp"

namespace sir::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Training blocks plus the ranking task used for evaluation.
struct LoadedData {
  std::vector<TrainingBlock> train_blocks;
  std::vector<EvalQuery> eval;
  Qrels eval_qrels;
  std::size_t skipped_blocks = 0;
};

namespace detail {

inline void require_file(const std::string& path, const std::string& field) {
  if (path.empty() || !fs::is_regular_file(path)) {
    throw ConfigError(field, "file not found: '" + path + "'");
  }
}

struct FileTables {
  QueryTable queries;
  CorpusTable corpus;
  CandidateSet candidates;
  Qrels qrels;
};

inline FileTables load_tables(const FileSource& src, const std::string& field) {
  require_file(src.queries, field + ".queries");
  require_file(src.corpus, field + ".corpus");
  require_file(src.candidates, field + ".candidates");
  require_file(src.qrels, field + ".qrels");
  return {load_queries(src.queries), load_tsv_corpus(src.corpus), load_candidates(src.candidates),
          load_qrels(src.qrels)};
}

inline SyntheticSpec eval_spec(const SyntheticSpec& train, std::size_t eval_queries) {
  SyntheticSpec spec = train;
  spec.num_queries = eval_queries;
  spec.seed = mix_seed(train.seed, 101);
  spec.id_prefix = "e";
  return spec;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ConfigError("--out", "cannot write '" + path.string() + "'");
  }
  out << text;
}

/// Reads a config or a manifest (whose `config` member is used).
inline Json load_config_json(const std::string& path, const std::vector<std::string>& overrides,
                             std::optional<std::uint64_t> seed) {
  Json root = read_json_file(path, "--config");
  if (root.is_object() && root.contains("run_id") && root.contains("config")) {
    root = root.at("config");
  }
  if (!root.is_object()) {
    throw ConfigError("--config", "top level must be an object");
  }
  for (const auto& o : overrides) {
    apply_override(root, o);
  }
  if (seed) {
    root["seed"] = *seed;
  }
  return root;
}

inline std::string render(const RankedRunReport& report, bool trec, const std::string& tag = "") {
  std::ostringstream out;
  if (trec) {
    report.write_trec(out, tag);
  } else {
    report.write_csv(out);
  }
  return out.str();
}

}  // namespace detail

inline LoadedData load_data(const RunConfig& cfg) {
  LoadedData out;
  const auto buckets = cfg.sir.scorer.vocab_buckets;
  if (cfg.data.synthetic) {
    const SyntheticCorpus train = generate_synthetic(*cfg.data.synthetic);
    out.train_blocks = synthetic_blocks(train, buckets);
    const SyntheticCorpus held_out = generate_synthetic(detail::eval_spec(*cfg.data.synthetic, cfg.data.eval_queries));
    out.eval = build_eval_set(held_out.queries, held_out.corpus, held_out.candidates, buckets);
    out.eval_qrels = held_out.qrels;
    return out;
  }
  const auto train = detail::load_tables(*cfg.data.train, "data.train");
  auto assembled = assemble_blocks(train.queries, train.corpus, train.candidates, train.qrels, cfg.negatives,
                                   mix_seed(cfg.sir.seed, 4), buckets);
  out.train_blocks = std::move(assembled.blocks);
  out.skipped_blocks = assembled.skipped_short + assembled.skipped_no_positive;
  if (cfg.data.eval) {
    const auto eval = detail::load_tables(*cfg.data.eval, "data.eval");
    out.eval = build_eval_set(eval.queries, eval.corpus, eval.candidates, buckets);
    out.eval_qrels = eval.qrels;
  } else {
    out.eval = build_eval_set(train.queries, train.corpus, train.candidates, buckets);
    out.eval_qrels = train.qrels;
  }
  return out;
}

struct RunOutcome {
  TrainResult result;
  RankedRunReport report;
  std::string run_id;
};

/// Trains per `cfg`, writes every artifact into `out_dir`, returns the outcome.
///
/// Files: manifest.json, model.sirc, compressor_<i>.sirc (V1/V2),
/// train_log.csv, metrics.csv, run.trec, and the non-deterministic
/// timing.json sidecar.
inline RunOutcome run_training(const RunConfig& cfg, const fs::path& out_dir, const Json& provenance) {
  const auto started = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  const Json resolved = to_json(cfg);
  RunOutcome outcome;
  outcome.run_id = run_id(resolved);

  const LoadedData data = load_data(cfg);
  ScorerParams base;
  if (cfg.init_checkpoint) {
    detail::require_file(*cfg.init_checkpoint, "init_checkpoint");
    base = load_checkpoint(*cfg.init_checkpoint);
    if (!base.hyper.same_shape(cfg.sir.scorer)) {
      throw ConfigError("init_checkpoint", "checkpoint shape does not match the configured scorer");
    }
  } else {
    base = init_params(cfg.sir.scorer, cfg.sir.scorer.seed);
  }

  std::ostringstream log_text;
  LossLog log(&log_text);
  outcome.result = train(cfg.sir, data.train_blocks, base, log);
  detail::write_text(out_dir / "train_log.csv", log_text.str());

  save_checkpoint(outcome.result.classifier, (out_dir / "model.sirc").string());
  for (std::size_t i = 0; i < outcome.result.compressors.size(); ++i) {
    save_checkpoint(outcome.result.compressors[i].trained,
                    (out_dir / ("compressor_" + std::to_string(i + 1) + ".sirc")).string());
  }

  outcome.report = evaluate(rank_all(outcome.result.classifier, data.eval), data.eval_qrels, cfg.cutoffs);
  detail::write_text(out_dir / "metrics.csv", detail::render(outcome.report, false));
  detail::write_text(out_dir / "run.trec", detail::render(outcome.report, true, "sir-" + outcome.run_id));

  Json manifest = {{"run_id", outcome.run_id},
                   {"config", resolved},
                   {"provenance", provenance},
                   {"train_blocks", data.train_blocks.size()},
                   {"skipped_blocks", data.skipped_blocks},
                   {"updates", outcome.result.updates}};
  detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");

  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const Json timing = {{"started_unix", std::chrono::duration_cast<std::chrono::seconds>(started.time_since_epoch()).count()},
                       {"wall_seconds", elapsed}};
  detail::write_text(out_dir / "timing.json", timing.dump(2) + "\n");
  return outcome;
}

// ---- commands ---------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline int cmd_train(const TrainArgs& args, std::ostream& out) {
  Json root = detail::load_config_json(args.config, args.overrides, args.seed);
  const RunConfig cfg = resolve_run_config(root);
  const Json provenance = {{"config_path", args.config}, {"overrides", args.overrides}};
  const RunOutcome outcome = run_training(cfg, args.out, provenance);
  out << "run " << outcome.run_id << " strategy " << to_string(cfg.sir.strategy) << " updates "
      << outcome.result.updates << '\n';
  outcome.report.write_csv(out);
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::vector<std::string> overrides;
  FileSource files;
  std::vector<std::size_t> cutoffs;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline int cmd_eval(const EvalArgs& args, std::ostream& out) {
  detail::require_file(args.checkpoint, "--checkpoint");
  const ScorerParams params = load_checkpoint(args.checkpoint);
  std::vector<EvalQuery> eval;
  Qrels qrels;
  std::vector<std::size_t> cutoffs = args.cutoffs;
  if (!args.config.empty()) {
    RunConfig cfg = resolve_run_config(detail::load_config_json(args.config, args.overrides, args.seed));
    cfg.sir.scorer.vocab_buckets = params.hyper.vocab_buckets;
    LoadedData data = load_data(cfg);
    eval = std::move(data.eval);
    qrels = std::move(data.eval_qrels);
    if (cutoffs.empty()) {
      cutoffs = cfg.cutoffs;
    }
  } else {
    const auto tables = detail::load_tables(args.files, "eval");
    eval = build_eval_set(tables.queries, tables.corpus, tables.candidates, params.hyper.vocab_buckets);
    qrels = tables.qrels;
  }
  if (cutoffs.empty()) {
    cutoffs = {10, 100};
  }
  for (auto k : cutoffs) {
    if (k < 1) {
      throw ConfigError("--cutoffs", "cutoffs must be >= 1");
    }
  }
  const RankedRunReport report = evaluate(rank_all(params, eval), qrels, cutoffs);
  if (!args.out.empty()) {
    fs::create_directories(args.out);
    detail::write_text(fs::path(args.out) / "metrics.csv", detail::render(report, false));
    detail::write_text(fs::path(args.out) / "run.trec", detail::render(report, true, "sir-eval"));
  }
  report.write_csv(out);
  return kExitOk;
}

struct CompareArgs {
  std::vector<std::string> configs;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool baseline = true;
};

inline constexpr const char* kCompareHeader = "strategy,selection,K_schedule,mrr@10,mrr@100,map@20,ndcg@20";

/// One row of the comparison table.
struct CompareRow {
  std::string strategy;
  std::string selection;
  std::string k_schedule;
  double mrr10 = 0.0;
  double mrr100 = 0.0;
  double map20 = 0.0;
  double ndcg20 = 0.0;
};

inline std::string format_row(const CompareRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s,%s,%s,%.6f,%.6f,%.6f,%.6f", r.strategy.c_str(), r.selection.c_str(),
                r.k_schedule.c_str(), r.mrr10, r.mrr100, r.map20, r.ndcg20);
  return buf;
}

/// Parses a table written by `sir compare`; throws on schema violations.
inline std::vector<CompareRow> parse_compare_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCompareHeader) {
    throw IngestError("compare table", 1, "unexpected header");
  }
  std::vector<CompareRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) {
      continue;
    }
    const auto f = sir::detail::split(line, ',');
    if (f.size() != 7) {
      throw IngestError("compare table", n, "expected 7 fields");
    }
    CompareRow r{f[0], f[1], f[2]};
    try {
      r.mrr10 = std::stod(f[3]);
      r.mrr100 = std::stod(f[4]);
      r.map20 = std::stod(f[5]);
      r.ndcg20 = std::stod(f[6]);
    } catch (const std::exception&) {
      throw IngestError("compare table", n, "non-numeric metric");
    }
    if (!parse_strategy(r.strategy) || !parse_selection(r.selection)) {
      throw IngestError("compare table", n, "unknown strategy or selection");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace detail {

/// Config with the fields a comparison may vary removed.
inline Json comparable_part(Json resolved) {
  resolved.erase("strategy");
  resolved.erase("schedule");
  resolved.erase("epochs");
  resolved.erase("level_epochs");
  return resolved;
}

inline CompareRow row_for(const RunConfig& cfg, const RankedRunReport& r) {
  auto value = [&](const char* metric, std::size_t k) {
    const auto* row = r.find(metric, k);
    return row ? row->result.value : 0.0;
  };
  return {std::string(to_string(cfg.sir.strategy)), std::string(to_string(cfg.sir.schedule.selection)),
          cfg.sir.schedule.describe(), value("mrr", 10), value("mrr", 100), value("map", 20), value("ndcg", 20)};
}

}  // namespace detail

inline int cmd_compare(const CompareArgs& args, std::ostream& out) {
  if (args.configs.size() < 2) {
    throw ConfigError("--config", "compare needs at least two configs");
  }
  std::vector<RunConfig> runs;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < args.configs.size(); ++i) {
    RunConfig cfg = resolve_run_config(detail::load_config_json(args.configs[i], args.overrides, args.seed));
    cfg.cutoffs = {10, 20, 100};
    if (!runs.empty() && detail::comparable_part(to_json(cfg)) != detail::comparable_part(to_json(runs.front()))) {
      throw ConfigError("--config", "'" + args.configs[i] + "' differs from '" + args.configs.front() +
                                        "' outside strategy/schedule/epochs fields");
    }
    runs.push_back(std::move(cfg));
    labels.push_back(std::to_string(i + 1));
  }
  if (args.baseline) {
    RunConfig v0 = runs.front();
    v0.sir.strategy = Strategy::V0;
    v0.sir.schedule.selection = SelectionMode::random;
    v0.sir.level_epochs.clear();
    runs.insert(runs.begin(), std::move(v0));
    labels.insert(labels.begin(), "0");
  }
  std::ostringstream table;
  table << kCompareHeader << '\n';
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path dir = fs::path(args.out) / "runs" / (labels[i] + "_" + std::string(to_string(runs[i].sir.strategy)));
    const Json provenance = {{"compare_member", labels[i]}, {"overrides", args.overrides}};
    const RunOutcome outcome = run_training(runs[i], dir, provenance);
    table << format_row(detail::row_for(runs[i], outcome.report)) << '\n';
  }
  fs::create_directories(args.out);
  detail::write_text(fs::path(args.out) / "compare.csv", table.str());
  out << table.str();
  return kExitOk;
}

struct GenArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline void write_synthetic(const SyntheticCorpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  auto emit = [&](const char* name, auto&& writer) {
    std::ostringstream text;
    writer(text);
    detail::write_text(dir / name, text.str());
  };
  emit("queries.tsv", [&](std::ostream& o) { write_queries(o, corpus.queries); });
  emit("corpus.tsv", [&](std::ostream& o) { write_corpus(o, corpus.corpus); });
  emit("candidates.tsv", [&](std::ostream& o) { write_candidates(o, corpus.candidates); });
  emit("qrels.tsv", [&](std::ostream& o) { write_qrels(o, corpus.qrels); });
  emit("difficulty.tsv", [&](std::ostream& o) {
    for (const auto& [did, level] : corpus.difficulty) {
      o << did << '\t' << level << '\n';
    }
  });
}

/// Writes train/ and eval/ splits of the synthetic corpus as MS MARCO-style files.
inline int cmd_gen_synthetic(const GenArgs& args, std::ostream& out) {
  SyntheticSpec spec;
  std::size_t eval_queries = 100;
  if (!args.config.empty()) {
    const RunConfig cfg = resolve_run_config(detail::load_config_json(args.config, args.overrides, std::nullopt));
    if (!cfg.data.synthetic) {
      throw ConfigError("data.synthetic", "config has no synthetic data section");
    }
    spec = *cfg.data.synthetic;
    eval_queries = cfg.data.eval_queries;
  } else if (!args.overrides.empty()) {
    Json root = {{"data", {{"synthetic", Json::object()}}}};
    for (const auto& o : args.overrides) {
      apply_override(root, o);
    }
    const RunConfig cfg = resolve_run_config(root);
    spec = *cfg.data.synthetic;
    eval_queries = cfg.data.eval_queries;
  }
  if (args.seed) {
    spec.seed = *args.seed;
  }
  spec.validate();
  write_synthetic(generate_synthetic(spec), fs::path(args.out) / "train");
  write_synthetic(generate_synthetic(detail::eval_spec(spec, eval_queries)), fs::path(args.out) / "eval");
  out << "wrote " << spec.num_queries << " training and " << eval_queries << " evaluation queries to " << args.out
      << '\n';
  return kExitOk;
}

// ---- entry point --------------------------------------------------------------

/// Parses argv and dispatches; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Self-involvement ranker: cascade hard-negative fine-tuning", "sir"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a scorer with one strategy");
  train->add_option("--config", train_args.config, "JSON config or manifest")->required();
  train->add_option("--set", train_args.overrides, "dotted-path override key=value (repeatable)");
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_option("--seed", train_args.seed, "master seed override");

  EvalArgs eval_args;
  std::string cutoffs_text;
  auto* eval = app.add_subcommand("eval", "rank and score a checkpoint");
  eval->add_option("--checkpoint", eval_args.checkpoint, "scorer checkpoint")->required();
  eval->add_option("--config", eval_args.config, "config whose evaluation data to use");
  eval->add_option("--set", eval_args.overrides, "dotted-path override key=value (repeatable)");
  eval->add_option("--queries", eval_args.files.queries, "queries.tsv");
  eval->add_option("--corpus", eval_args.files.corpus, "corpus.tsv");
  eval->add_option("--candidates", eval_args.files.candidates, "candidates.tsv");
  eval->add_option("--qrels", eval_args.files.qrels, "qrels");
  eval->add_option("--cutoffs", cutoffs_text, "comma-separated cutoffs, e.g. 10,100");
  eval->add_option("--out", eval_args.out, "output directory for metrics.csv and run.trec");
  eval->add_option("--seed", eval_args.seed, "master seed override");

  CompareArgs compare_args;
  bool no_baseline = false;
  auto* compare = app.add_subcommand("compare", "train several configs and tabulate metrics");
  compare->add_option("--config", compare_args.configs, "config (repeat, at least two)")->required();
  compare->add_option("--set", compare_args.overrides, "override applied to every config");
  compare->add_option("--out", compare_args.out, "output directory")->required();
  compare->add_option("--seed", compare_args.seed, "master seed override");
  compare->add_flag("--no-baseline", no_baseline, "omit the V0 random-negative baseline row");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic corpus as TSV files");
  gen->add_option("--config", gen_args.config, "config with a data.synthetic section");
  gen->add_option("--set", gen_args.overrides, "override, e.g. data.synthetic.num_queries=50");
  gen->add_option("--out", gen_args.out, "output directory")->required();
  gen->add_option("--seed", gen_args.seed, "synthetic corpus seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*train) {
      return cmd_train(train_args, out);
    }
    if (*eval) {
      if (!cutoffs_text.empty()) {
        for (const auto& part : sir::detail::split(cutoffs_text, ',')) {
          try {
            eval_args.cutoffs.push_back(std::stoul(part));
          } catch (const std::exception&) {
            throw ConfigError("--cutoffs", "bad cutoff '" + part + "'");
          }
        }
      }
      return cmd_eval(eval_args, out);
    }
    if (*compare) {
      compare_args.baseline = !no_baseline;
      return cmd_compare(compare_args, out);
    }
    return cmd_gen_synthetic(gen_args, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IngestError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CheckpointError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace sir::cli
