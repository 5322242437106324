// SPDX-License-Identifier: Apache-2.0
//
// Library walkthrough: build a small synthetic task, train the shared-scorer
// cascade, and report ranking quality before and after.
#include <iostream>

#include "sir/sir.hpp"

int main() {
  sir::SyntheticSpec spec;
  spec.num_queries = 100;
  const auto train_data = sir::generate_synthetic(spec);

  sir::SyntheticSpec held_out = spec;
  held_out.seed = 2;
  held_out.id_prefix = "e";
  held_out.num_queries = 50;
  const auto eval_data = sir::generate_synthetic(held_out);

  sir::SirConfig config;
  config.strategy = sir::Strategy::V3;
  config.epochs = 20;
  config.optimizer.lr = 3e-3;
  config.scorer.embed_dim = 32;
  config.seed = 7;
  config.schedule.rng_seed = 8;

  const auto blocks = sir::synthetic_blocks(train_data, config.scorer.vocab_buckets);
  const auto eval = sir::build_eval_set(eval_data.queries, eval_data.corpus, eval_data.candidates,
                                        config.scorer.vocab_buckets);
  const auto base = sir::init_params(config.scorer, 42);

  auto mrr = [&](const sir::ScorerParams& p) { return sir::mrr_at_k(sir::rank_all(p, eval), eval_data.qrels, 10).value; };
  std::cout << "MRR@10 before training: " << mrr(base) << '\n';

  sir::LossLog log;
  const auto result = sir::train(config, blocks, base, log);
  std::cout << "MRR@10 after " << result.updates << " updates: " << mrr(result.classifier) << '\n';
}
