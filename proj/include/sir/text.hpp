// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sir/error.hpp"

namespace sir {

/// Hashed bag-of-tokens; every id is < the bucket count used to encode it.
struct EncodedText {
  std::vector<std::uint32_t> bucket_ids;

  bool empty() const noexcept { return bucket_ids.empty(); }
  std::size_t size() const noexcept { return bucket_ids.size(); }
  bool operator==(const EncodedText&) const = default;
};

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t hash = 14695981039346656037ULL;
  for (char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ULL;
  }
  return hash;
}

/// Lowercased tokens split on runs of ASCII non-alphanumerics. Bytes >= 0x80
/// are kept inside tokens so UTF-8 words survive intact.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      c >= 0x80;
    if (word) {
      current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) {
    tokens.push_back(std::move(current));
  }
  return tokens;
}

inline EncodedText encode(std::string_view text, std::uint32_t vocab_buckets) {
  if (vocab_buckets == 0) {
    throw ArgumentError("encode: vocab_buckets must be >= 1");
  }
  EncodedText out;
  for (const auto& token : tokenize(text)) {
    out.bucket_ids.push_back(static_cast<std::uint32_t>(fnv1a64(token) % vocab_buckets));
  }
  return out;
}

}  // namespace sir
