// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sir/error.hpp"
#include "sir/scorer.hpp"

namespace sir {

/// V0 is plain fine-tuning on randomly sub-sampled negatives (the reference
/// baseline); V1..V4 are the cascade strategies.
enum class Strategy { V0, V1, V2, V3, V4 };

enum class SelectionMode { top_k, random };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::V0: return "V0";
    case Strategy::V1: return "V1";
    case Strategy::V2: return "V2";
    case Strategy::V3: return "V3";
    case Strategy::V4: return "V4";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  for (auto candidate : {Strategy::V0, Strategy::V1, Strategy::V2, Strategy::V3, Strategy::V4}) {
    if (s == to_string(candidate) || (s.size() == 2 && s[0] == 'v' && s[1] == to_string(candidate)[1])) {
      return candidate;
    }
  }
  return std::nullopt;
}

inline std::string_view to_string(SelectionMode m) {
  return m == SelectionMode::top_k ? "top_k" : "random";
}

inline std::optional<SelectionMode> parse_selection(std::string_view s) {
  if (s == "top_k") {
    return SelectionMode::top_k;
  }
  if (s == "random") {
    return SelectionMode::random;
  }
  return std::nullopt;
}

/// Negatives retained entering levels 2..M. K counts negatives only; the
/// positive always rides along.
struct CompressorSchedule {
  std::vector<std::size_t> k_per_level{11, 5};
  SelectionMode selection = SelectionMode::top_k;
  std::uint64_t rng_seed = 0;

  std::size_t levels() const noexcept { return k_per_level.size() + 1; }

  /// `negatives` is the smallest negative count of any block to be processed.
  /// K_1 == negatives is accepted as the degenerate keep-everything level.
  void validate(std::size_t negatives) const {
    for (std::size_t i = 0; i < k_per_level.size(); ++i) {
      if (k_per_level[i] < 1) {
        throw ConfigError("schedule.k[" + std::to_string(i) + "]", "must be >= 1");
      }
      if (i > 0 && k_per_level[i] >= k_per_level[i - 1]) {
        throw ConfigError("schedule.k[" + std::to_string(i) + "]", "schedule must be strictly decreasing");
      }
    }
    if (!k_per_level.empty() && k_per_level.front() > negatives) {
      throw ConfigError("schedule.k[0]", "keeps " + std::to_string(k_per_level.front()) +
                                             " negatives but blocks only have " +
                                             std::to_string(negatives));
    }
  }

  std::string describe() const {
    std::string out;
    for (std::size_t i = 0; i < k_per_level.size(); ++i) {
      out += (i ? ">" : "") + std::to_string(k_per_level[i]);
    }
    return out.empty() ? "-" : out;
  }

  bool operator==(const CompressorSchedule&) const = default;
};

struct OptimizerHyper {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-8;

  bool operator==(const OptimizerHyper&) const = default;
};

struct SirConfig {
  Strategy strategy = Strategy::V3;
  CompressorSchedule schedule;
  std::size_t epochs = 2;                // per compressor for V1/V2
  std::vector<std::size_t> level_epochs;  // optional per-level override for V1/V2
  std::size_t batch_blocks = 4;
  OptimizerHyper optimizer;
  ScorerHyper scorer;
  std::uint64_t seed = 0;  // data order

  std::size_t epochs_for_level(std::size_t level) const {
    return level < level_epochs.size() ? level_epochs[level] : epochs;
  }

  void validate(std::size_t negatives) const {
    schedule.validate(negatives);
    if ((strategy == Strategy::V1 || strategy == Strategy::V2) && schedule.levels() < 2) {
      throw ConfigError("schedule.k", "V1/V2 need at least two compressors");
    }
    if (!level_epochs.empty() && level_epochs.size() != schedule.levels()) {
      throw ConfigError("level_epochs", "needs one entry per compressor (" +
                                            std::to_string(schedule.levels()) + ")");
    }
    if (batch_blocks < 1) {
      throw ConfigError("batch_blocks", "must be >= 1");
    }
    if (!(optimizer.lr >= 0.0) || !(optimizer.eps > 0.0) || !(optimizer.weight_decay >= 0.0)) {
      throw ConfigError("optimizer", "lr and weight_decay must be >= 0, eps > 0");
    }
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 &&
          optimizer.beta2 < 1.0)) {
      throw ConfigError("optimizer", "betas must lie in [0, 1)");
    }
    try {
      scorer.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError("scorer", e.what());
    }
  }
};

}  // namespace sir
