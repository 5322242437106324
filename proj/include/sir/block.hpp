// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "sir/error.hpp"
#include "sir/ndgrad.hpp"
#include "sir/text.hpp"

namespace sir {

enum class Label { positive, negative };

struct Sample {
  std::uint64_t id = 0;  // unique within a block; survives compression
  std::string doc_id;
  EncodedText text;
  Label label = Label::negative;
  std::optional<int> planted_difficulty;  // synthetic data only
};

/// One query with its positive at index 0 followed by negatives.
struct TrainingBlock {
  std::string query_id;
  EncodedText query;
  std::vector<Sample> samples;

  std::size_t num_negatives() const noexcept { return samples.empty() ? 0 : samples.size() - 1; }
  const Sample& positive() const { return samples.at(0); }

  void validate() const {
    if (samples.empty() || samples.front().label != Label::positive) {
      throw ArgumentError("block " + query_id + ": positive sample must be at index 0");
    }
    std::unordered_set<std::uint64_t> ids;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (i > 0 && samples[i].label != Label::negative) {
        throw ArgumentError("block " + query_id + ": more than one positive sample");
      }
      if (!ids.insert(samples[i].id).second) {
        throw ArgumentError("block " + query_id + ": duplicate sample id " +
                            std::to_string(samples[i].id));
      }
    }
  }
};

/// Per-sample logits of one cascade level, aligned with the block's sample order.
struct ScoreVector {
  std::vector<std::uint64_t> ids;
  nd::Var logits;  // [1 + negatives]

  std::size_t size() const noexcept { return ids.size(); }
  double value(std::size_t i) const { return logits.value()[i]; }
};

/// Softmax of a ScoreVector (or a CPR vector); entries sum to one.
struct ProbVector {
  std::vector<std::uint64_t> ids;
  nd::Var probs;

  std::size_t size() const noexcept { return ids.size(); }
  double value(std::size_t i) const { return probs.value()[i]; }

  std::optional<std::size_t> index_of(std::uint64_t id) const {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == id) {
        return i;
      }
    }
    return std::nullopt;
  }
};

}  // namespace sir
