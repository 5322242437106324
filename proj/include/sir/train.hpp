// SPDX-License-Identifier: Apache-2.0
//
// Training drivers for every strategy.
//
//   V0  one compressor, negatives randomly re-sampled to K_last on every use
//   V1  M compressors trained in sequence, each from the base checkpoint,
//       each fed the hardest negatives chosen by its trained predecessor
//   V2  as V1, but compressor i+1 starts from compressor i's trained weights
//   V3  one shared scorer; every update forwards the whole cascade and
//       minimises loss(level 1) + loss(level M)
//   V4  as V3 with the per-level CPR losses summed over all levels
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "sir/adamw.hpp"
#include "sir/block.hpp"
#include "sir/cascade.hpp"
#include "sir/config.hpp"
#include "sir/error.hpp"
#include "sir/random.hpp"
#include "sir/scorer.hpp"

namespace sir {

/// Writes `step,strategy,level,loss` CSV rows; level is 1-based for
/// components and `total` for the optimised objective.
class LossLog {
 public:
  explicit LossLog(std::ostream* out = nullptr) : out_(out) {
    if (out_ != nullptr) {
      *out_ << "step,strategy,level,loss\n";
    }
  }

  void record(std::uint64_t step, Strategy strategy, const std::string& level, double loss) {
    if (out_ == nullptr) {
      return;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", loss);
    *out_ << step << ',' << to_string(strategy) << ',' << level << ',' << buf << '\n';
  }

 private:
  std::ostream* out_;
};

/// One compressor of a sequential (V1/V2) run.
struct CompressorRun {
  ScorerParams initial;
  ScorerParams trained;
  std::vector<TrainingBlock> blocks;  // the compressor's training input
};

struct TrainResult {
  ScorerParams classifier;                // final model
  std::vector<CompressorRun> compressors;  // V1/V2 only
  std::uint64_t updates = 0;
  double last_loss = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::size_t min_negatives(const std::vector<TrainingBlock>& blocks) {
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& b : blocks) {
    n = std::min(n, b.num_negatives());
  }
  return blocks.empty() ? 0 : n;
}

inline void check_inputs(const SirConfig& config, const std::vector<TrainingBlock>& blocks,
                         const ScorerParams& base) {
  if (blocks.empty()) {
    throw ConfigError("data", "no training blocks");
  }
  for (const auto& b : blocks) {
    b.validate();
  }
  config.validate(min_negatives(blocks));
  if (!base.hyper.same_shape(config.scorer)) {
    throw ConfigError("scorer", "base checkpoint shape does not match configured scorer");
  }
}

/// Shared epoch/batch loop. `block_loss` maps (bound scorer, block) to the
/// per-block objective; losses are averaged over the batch before each step.
template <typename BlockLoss>
double fit(ScorerParams& params, const std::vector<TrainingBlock>& blocks, std::size_t epochs,
           const SirConfig& config, Pcg32& order_rng, std::uint64_t& updates, LossLog& log,
           BlockLoss&& block_loss) {
  OptimizerState state = OptimizerState::for_params(params);
  std::vector<std::size_t> order(blocks.size());
  double last = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      order[i] = i;
    }
    shuffle(order, order_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_blocks) {
      const std::size_t end = std::min(order.size(), start + config.batch_blocks);
      const double scale = 1.0 / static_cast<double>(end - start);
      BoundScorer bound(params);
      nd::Var total;
      std::vector<std::pair<std::size_t, double>> components;
      for (std::size_t b = start; b < end; ++b) {
        LossBreakdown loss = block_loss(bound, blocks[order[b]]);
        total = b == start ? loss.total : total + loss.total;
        if (components.empty()) {
          components.assign(loss.components.size(), {0, 0.0});
        }
        for (std::size_t c = 0; c < loss.components.size(); ++c) {
          components[c].first = loss.components[c].first;
          components[c].second += loss.components[c].second * scale;
        }
      }
      total = total * scale;
      last = total.item();
      if (!std::isfinite(last)) {
        throw NumericError("training diverged: non-finite loss at step " + std::to_string(updates + 1));
      }
      nd::backward(total);
      adamw_step(params, bound.grads(), state, config.optimizer);
      ++updates;
      for (const auto& [level, value] : components) {
        log.record(updates, config.strategy, std::to_string(level), value);
      }
      log.record(updates, config.strategy, "total", last);
    }
  }
  return last;
}

}  // namespace detail

/// Mean single-level contrastive loss of `params` over `blocks` (no update).
inline double mean_block_loss(const ScorerParams& params, const std::vector<TrainingBlock>& blocks) {
  if (blocks.empty()) {
    throw ArgumentError("mean_block_loss: no blocks");
  }
  const BoundScorer bound(params, false);
  double total = 0.0;
  for (const auto& b : blocks) {
    total += contrastive_loss(softmax(score_block(bound, b))).item();
  }
  return total / static_cast<double>(blocks.size());
}

/// Inference-only cascade: the block entering each level under `params`.
inline std::vector<TrainingBlock> cascade_blocks(const ScorerParams& params, const TrainingBlock& block,
                                                 const CompressorSchedule& schedule, Pcg32& rng) {
  const BoundScorer bound(params, false);
  std::vector<TrainingBlock> out;
  for (auto& level : run_cascade(bound, block, schedule, rng)) {
    out.push_back(std::move(level.block));
  }
  return out;
}

namespace detail {

inline TrainResult train_sequential(const SirConfig& config, const std::vector<TrainingBlock>& data,
                                    const ScorerParams& base, LossLog& log, bool share_parameters) {
  check_inputs(config, data, base);
  Pcg32 order_rng(mix_seed(config.seed, 1));
  Pcg32 select_rng(config.schedule.rng_seed);
  TrainResult result;
  std::vector<TrainingBlock> blocks = data;
  const std::size_t levels = config.schedule.levels();
  for (std::size_t level = 0; level < levels; ++level) {
    CompressorRun run;
    run.initial = (share_parameters && level > 0) ? result.compressors.back().trained : base;
    run.trained = run.initial;
    run.blocks = blocks;
    result.last_loss = fit(run.trained, run.blocks, config.epochs_for_level(level), config, order_rng,
                           result.updates, log, [](const BoundScorer& bound, const TrainingBlock& block) {
                             std::vector<LevelForward> one;
                             ScoreVector scores = score_block(bound, block);
                             ProbVector probs = softmax(scores);
                             one.push_back({block, std::move(scores), std::move(probs)});
                             return total_loss(Strategy::V1, one);
                           });
    if (level + 1 < levels) {
      // Self-involvement: the frozen compressor re-scores its own inputs.
      const BoundScorer frozen(run.trained, false);
      std::vector<TrainingBlock> next;
      next.reserve(blocks.size());
      for (const auto& block : blocks) {
        const ScoreVector scores = score_block(frozen, block);
        next.push_back(compress_block(
            block, select_negatives(scores, config.schedule.k_per_level[level], config.schedule.selection,
                                    select_rng)));
      }
      blocks = std::move(next);
    }
    result.compressors.push_back(std::move(run));
  }
  result.classifier = result.compressors.back().trained;
  return result;
}

}  // namespace detail

inline TrainResult train_v1(const SirConfig& config, const std::vector<TrainingBlock>& data,
                            const ScorerParams& base, LossLog& log) {
  return detail::train_sequential(config, data, base, log, false);
}

inline TrainResult train_v2(const SirConfig& config, const std::vector<TrainingBlock>& data,
                            const ScorerParams& base, LossLog& log) {
  return detail::train_sequential(config, data, base, log, true);
}

/// V3/V4: one scorer, cascade re-run on every forward so selections track
/// the current parameters.
inline TrainResult train_shared(const SirConfig& config, const std::vector<TrainingBlock>& data,
                                const ScorerParams& base, LossLog& log) {
  if (config.strategy != Strategy::V3 && config.strategy != Strategy::V4) {
    throw ConfigError("strategy", "train_shared implements V3 and V4 only");
  }
  detail::check_inputs(config, data, base);
  Pcg32 order_rng(mix_seed(config.seed, 1));
  Pcg32 select_rng(config.schedule.rng_seed);
  TrainResult result;
  result.classifier = base;
  result.last_loss = detail::fit(result.classifier, data, config.epochs, config, order_rng, result.updates, log,
                                 [&](const BoundScorer& bound, const TrainingBlock& block) {
                                   return total_loss(config.strategy,
                                                     run_cascade(bound, block, config.schedule, select_rng));
                                 });
  return result;
}

/// V0: plain fine-tuning with K_last random negatives per block use (all
/// negatives when the schedule is empty).
inline TrainResult train_v0(const SirConfig& config, const std::vector<TrainingBlock>& data,
                            const ScorerParams& base, LossLog& log) {
  detail::check_inputs(config, data, base);
  Pcg32 order_rng(mix_seed(config.seed, 1));
  Pcg32 select_rng(config.schedule.rng_seed);
  TrainResult result;
  result.classifier = base;
  result.last_loss = detail::fit(
      result.classifier, data, config.epochs, config, order_rng, result.updates, log,
      [&](const BoundScorer& bound, const TrainingBlock& block) {
        const std::size_t k =
            config.schedule.k_per_level.empty() ? block.num_negatives() : config.schedule.k_per_level.back();
        std::vector<std::uint64_t> ids;
        for (auto pos : sample_without_replacement(block.num_negatives(), k, select_rng)) {
          ids.push_back(block.samples[pos + 1].id);
        }
        const TrainingBlock sampled = compress_block(block, ids);
        std::vector<LevelForward> one;
        ScoreVector scores = score_block(bound, sampled);
        ProbVector probs = softmax(scores);
        one.push_back({sampled, std::move(scores), std::move(probs)});
        return total_loss(Strategy::V0, one);
      });
  return result;
}

inline TrainResult train(const SirConfig& config, const std::vector<TrainingBlock>& data,
                         const ScorerParams& base, LossLog& log) {
  switch (config.strategy) {
    case Strategy::V0: return train_v0(config, data, base, log);
    case Strategy::V1: return train_v1(config, data, base, log);
    case Strategy::V2: return train_v2(config, data, base, log);
    case Strategy::V3:
    case Strategy::V4: return train_shared(config, data, base, log);
  }
  throw ConfigError("strategy", "unknown strategy");
}

}  // namespace sir
