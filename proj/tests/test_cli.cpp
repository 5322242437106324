// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "sir/cli.hpp"
#include "support.hpp"

using namespace sirtest;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

Invocation sir_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sir");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  Invocation r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

Json tiny_config(const std::string& strategy = "V3") {
  return Json::parse(R"({
    "strategy": ")" + strategy + R"(",
    "schedule": {"k": [6, 3]},
    "epochs": 2,
    "optimizer": {"lr": 0.003},
    "scorer": {"vocab_buckets": 512, "embed_dim": 8, "hidden_dim": 8},
    "seed": 3,
    "data": {"synthetic": {"num_queries": 12, "eval_queries": 6, "negatives": 9}}
  })");
}

std::string write_config(const fs::path& dir, const std::string& name, const Json& j) {
  const auto path = dir / name;
  std::ofstream(path) << j.dump(2);
  return path.string();
}

}  // namespace

TEST(CliTrain, WritesArtifactsAndRecordsOverrides) {
  const auto dir = scratch_dir("cli-train");
  const auto cfg = write_config(dir, "cfg.json", tiny_config());
  const auto r = sir_cli({"train", "--config", cfg, "--set", "strategy=V4", "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"manifest.json", "model.sirc", "train_log.csv", "metrics.csv", "run.trec", "timing.json"}) {
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  }
  const auto manifest = Json::parse(slurp(dir / "run/manifest.json"));
  EXPECT_EQ(manifest["config"]["strategy"], "V4");
  EXPECT_EQ(manifest["provenance"]["overrides"], Json::array({"strategy=V4"}));
  EXPECT_EQ(manifest["run_id"].get<std::string>().size(), 16u);
  EXPECT_NE(slurp(dir / "run/train_log.csv").find(",V4,"), std::string::npos);
}

TEST(CliTrain, SequentialStrategiesSaveEveryCompressor) {
  const auto dir = scratch_dir("cli-v2");
  const auto cfg = write_config(dir, "cfg.json", tiny_config("V2"));
  ASSERT_EQ(sir_cli({"train", "--config", cfg, "--out", (dir / "run").string()}).code, 0);
  for (int i = 1; i <= 3; ++i) {
    EXPECT_TRUE(fs::exists(dir / "run" / ("compressor_" + std::to_string(i) + ".sirc")));
  }
  EXPECT_EQ(slurp(dir / "run/compressor_3.sirc"), slurp(dir / "run/model.sirc"));
}

TEST(CliTrain, ManifestRerunIsByteIdentical) {
  const auto dir = scratch_dir("cli-rerun");
  const auto cfg = write_config(dir, "cfg.json", tiny_config());
  ASSERT_EQ(sir_cli({"train", "--config", cfg, "--seed", "17", "--out", (dir / "a").string()}).code, 0);
  const auto manifest = (dir / "a/manifest.json").string();
  const auto b = sir_cli({"train", "--config", manifest, "--out", (dir / "b").string()});
  const auto c = sir_cli({"train", "--config", manifest, "--out", (dir / "c").string()});
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(b.out, c.out);
  for (const char* f : {"model.sirc", "metrics.csv", "train_log.csv", "run.trec", "manifest.json"}) {
    EXPECT_EQ(slurp(dir / "b" / f), slurp(dir / "c" / f)) << f;
  }
  // The manifest pins every resolved seed, so it reproduces the original run.
  EXPECT_EQ(slurp(dir / "a/model.sirc"), slurp(dir / "b/model.sirc"));
  EXPECT_EQ(Json::parse(slurp(dir / "a/manifest.json"))["run_id"], Json::parse(slurp(dir / "b/manifest.json"))["run_id"]);
}

TEST(CliTrain, MissingDataPathIsConfigErrorNamingField) {
  const auto dir = scratch_dir("cli-missing");
  Json j = tiny_config();
  j["data"] = {{"train", {{"queries", "nope.tsv"}, {"corpus", "nope"}, {"candidates", "nope"}, {"qrels", "nope"}}}};
  const auto r = sir_cli({"train", "--config", write_config(dir, "cfg.json", j), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("data.train.queries"), std::string::npos) << r.err;
}

TEST(CliTrain, FieldPathDiagnostics) {
  const auto dir = scratch_dir("cli-diag");
  const auto cfg = write_config(dir, "cfg.json", tiny_config());
  const std::vector<std::pair<std::string, std::string>> cases{
      {"optimizer.lr=\"fast\"", "optimizer.lr"},
      {"schedule.k=[3,6]", "schedule.k[1]"},
      {"scorer.depth=2", "scorer.depth"},
      {"strategy=V9", "strategy"},
      {"data.synthetic.negative_overlap=[0.5,0.2,0.3,0.0]", "negative_overlap"},
      {"cutoffs=[0]", "cutoffs[0]"},
  };
  for (const auto& [set, field] : cases) {
    const auto r = sir_cli({"train", "--config", cfg, "--set", set, "--out", (dir / "o").string()});
    EXPECT_EQ(r.code, 2) << set;
    EXPECT_NE(r.err.find(field), std::string::npos) << set << ": " << r.err;
  }
  EXPECT_EQ(sir_cli({"train", "--config", (dir / "absent.json").string(), "--out", "x"}).code, 2);
  EXPECT_EQ(sir_cli({"train", "--out", "x"}).code, 2);
  EXPECT_EQ(sir_cli({"frobnicate"}).code, 2);
}

TEST(CliTrain, DivergenceExitsThree) {
  const auto dir = scratch_dir("cli-nan");
  const auto cfg = write_config(dir, "cfg.json", tiny_config());
  const auto r = sir_cli({"train", "--config", cfg, "--set", "optimizer.lr=1e300", "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(CliEval, UntrainedBaselineAndInProcessOracle) {
  const auto dir = scratch_dir("cli-eval");
  const auto cfg_json = tiny_config();
  const auto cfg = write_config(dir, "cfg.json", cfg_json);
  const RunConfig rc = resolve_run_config(cfg_json);
  const auto params = init_params(rc.sir.scorer, rc.sir.scorer.seed);
  save_checkpoint(params, (dir / "init.sirc").string());

  const auto r = sir_cli({"eval", "--checkpoint", (dir / "init.sirc").string(), "--config", cfg, "--cutoffs", "10,100",
                          "--out", (dir / "e").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto data = cli::load_data(rc);
  const auto direct = evaluate(rank_all(load_checkpoint((dir / "init.sirc").string()), data.eval), data.eval_qrels, {10, 100});
  std::ostringstream expected;
  direct.write_csv(expected);
  EXPECT_EQ(slurp(dir / "e/metrics.csv"), expected.str());
  EXPECT_NE(direct.find("mrr", 10), nullptr);
  EXPECT_NE(direct.find("mrr", 100), nullptr);
  EXPECT_TRUE(std::isfinite(direct.find("mrr", 10)->result.value));
  EXPECT_TRUE(fs::exists(dir / "e/run.trec"));
}

TEST(CliEval, FilesFromGenSynthetic) {
  const auto dir = scratch_dir("cli-gen");
  auto r = sir_cli({"gen-synthetic", "--set", "data.synthetic.num_queries=8", "--set", "data.synthetic.eval_queries=4",
                    "--out", (dir / "data").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"queries.tsv", "corpus.tsv", "candidates.tsv", "qrels.tsv", "difficulty.tsv"}) {
    EXPECT_TRUE(fs::exists(dir / "data/train" / f));
    EXPECT_TRUE(fs::exists(dir / "data/eval" / f));
  }
  Json j = tiny_config();
  auto files = [&](const char* split) {
    const auto base = dir / "data" / split;
    return Json{{"queries", (base / "queries.tsv").string()},
                {"corpus", (base / "corpus.tsv").string()},
                {"candidates", (base / "candidates.tsv").string()},
                {"qrels", (base / "qrels.tsv").string()}};
  };
  j["data"] = {{"train", files("train")}, {"eval", files("eval")}};
  r = sir_cli({"train", "--config", write_config(dir, "files.json", j), "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto eval_dir = dir / "data/eval";
  r = sir_cli({"eval", "--checkpoint", (dir / "run/model.sirc").string(), "--queries", (eval_dir / "queries.tsv").string(),
               "--corpus", (eval_dir / "corpus.tsv").string(), "--candidates", (eval_dir / "candidates.tsv").string(),
               "--qrels", (eval_dir / "qrels.tsv").string(), "--cutoffs", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mrr,5,"), std::string::npos);
  EXPECT_NE(r.out.find(",4,0\n"), std::string::npos) << r.out;
}

TEST(CliEval, BadCheckpointIsExitTwo) {
  const auto dir = scratch_dir("cli-badckpt");
  std::ofstream(dir / "bad.sirc") << "NOPE";
  const auto cfg = write_config(dir, "cfg.json", tiny_config());
  EXPECT_EQ(sir_cli({"eval", "--checkpoint", (dir / "bad.sirc").string(), "--config", cfg}).code, 2);
}

TEST(CliCompare, TableSchemaBaselineAndIdenticalRows) {
  const auto dir = scratch_dir("cli-compare");
  const auto a = write_config(dir, "a.json", tiny_config());
  const auto b = write_config(dir, "b.json", tiny_config());
  const auto r = sir_cli({"compare", "--config", a, "--config", b, "--out", (dir / "cmp").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream table(slurp(dir / "cmp/compare.csv"));
  const auto rows = cli::parse_compare_table(table);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].strategy, "V0");
  EXPECT_EQ(rows[0].selection, "random");
  EXPECT_EQ(rows[1].k_schedule, "6>3");
  EXPECT_EQ(cli::format_row(rows[1]), cli::format_row(rows[2]));
  for (const auto& row : rows) {
    for (double v : {row.mrr10, row.mrr100, row.map20, row.ndcg20}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_EQ(r.out, slurp(dir / "cmp/compare.csv"));
}

TEST(CliCompare, StrategyAndSelectionMayDifferButNothingElse) {
  const auto dir = scratch_dir("cli-compare-diff");
  Json rnd = tiny_config("V4");
  rnd["schedule"]["selection"] = "random";
  const auto a = write_config(dir, "a.json", tiny_config());
  const auto b = write_config(dir, "b.json", rnd);
  const auto ok = sir_cli({"compare", "--config", a, "--config", b, "--no-baseline", "--out", (dir / "ok").string()});
  ASSERT_EQ(ok.code, 0) << ok.err;
  std::istringstream table(ok.out);
  const auto rows = cli::parse_compare_table(table);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].strategy, "V4");
  EXPECT_EQ(rows[1].selection, "random");

  Json other = tiny_config();
  other["optimizer"]["lr"] = 0.01;
  const auto c = write_config(dir, "c.json", other);
  EXPECT_EQ(sir_cli({"compare", "--config", a, "--config", c, "--out", (dir / "bad").string()}).code, 2);
  EXPECT_EQ(sir_cli({"compare", "--config", a, "--out", (dir / "one").string()}).code, 2);
}

TEST(CliCompare, ParseRejectsSchemaViolations) {
  std::istringstream bad_header("strategy,mrr\n");
  EXPECT_THROW(cli::parse_compare_table(bad_header), IngestError);
  std::istringstream bad_row(std::string(cli::kCompareHeader) + "\nV3,top_k,11>5,0.1,0.2\n");
  EXPECT_THROW(cli::parse_compare_table(bad_row), IngestError);
}

TEST(Overrides, DottedPathsAndTypes) {
  Json j = Json::object();
  apply_override(j, "a.b.c=3");
  apply_override(j, "name=plain text");
  apply_override(j, "list=[1,2]");
  EXPECT_EQ(j["a"]["b"]["c"], 3);
  EXPECT_EQ(j["name"], "plain text");
  EXPECT_EQ(j["list"], Json::array({1, 2}));
  EXPECT_THROW(apply_override(j, "noequals"), ConfigError);
  EXPECT_THROW(apply_override(j, "name.x=1"), ConfigError);
}

TEST(RunConfigJson, RoundTripsThroughJson) {
  const RunConfig a = resolve_run_config(tiny_config());
  const RunConfig b = resolve_run_config(to_json(a));
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(run_id(to_json(a)), run_id(to_json(b)));
  EXPECT_NE(a.sir.scorer.seed, a.sir.schedule.rng_seed);
}
