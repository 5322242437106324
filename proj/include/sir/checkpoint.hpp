// SPDX-License-Identifier: Apache-2.0
//
// Scorer checkpoint container:
//
//   offset 0   "SIRC"
//   offset 4   u32 LE format version (1)
//   offset 8   u32 LE metadata length L
//   offset 12  L bytes of UTF-8 JSON {tensors:[{name,shape}], hyper, seed}
//   then       every tensor's values as f32 LE, in metadata order
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sir/error.hpp"
#include "sir/scorer.hpp"

namespace sir {

inline constexpr std::array<char, 4> kCheckpointMagic{'S', 'I', 'R', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 12;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
  }
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

inline nlohmann::json checkpoint_metadata(const ScorerParams& params) {
  nlohmann::json tensors = nlohmann::json::array();
  const auto list = params.tensors();
  for (std::size_t i = 0; i < kNumParamTensors; ++i) {
    tensors.push_back({{"name", ScorerParams::names[i]}, {"shape", list[i]->shape()}});
  }
  return {{"tensors", tensors},
          {"hyper",
           {{"vocab_buckets", params.hyper.vocab_buckets},
            {"embed_dim", params.hyper.embed_dim},
            {"hidden_dim", params.hyper.hidden_dim}}},
          {"seed", params.hyper.seed}};
}

}  // namespace detail

/// Container bytes for `params`.
inline std::string serialize_checkpoint(const ScorerParams& params) {
  params.validate();
  const std::string meta = detail::checkpoint_metadata(params).dump();
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  out.reserve(out.size() + 4 * params.num_values());
  for (const auto* t : params.tensors()) {
    for (double x : t->values()) {
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
  }
  return out;
}

inline ScorerParams parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointHeaderBytes) {
    throw CheckpointError(bytes.size(), "truncated header");
  }
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin())) {
    throw CheckpointError(0, "bad magic");
  }
  if (const auto version = detail::get_u32(bytes, 4); version != kCheckpointVersion) {
    throw CheckpointError(4, "unsupported version " + std::to_string(version));
  }
  const std::size_t meta_len = detail::get_u32(bytes, 8);
  if (kCheckpointHeaderBytes + meta_len > bytes.size()) {
    throw CheckpointError(8, "metadata length " + std::to_string(meta_len) + " runs past end of file");
  }
  ScorerParams params;
  try {
    const auto meta = nlohmann::json::parse(bytes.substr(kCheckpointHeaderBytes, meta_len));
    const auto& h = meta.at("hyper");
    params.hyper.vocab_buckets = h.at("vocab_buckets").get<std::uint32_t>();
    params.hyper.embed_dim = h.at("embed_dim").get<std::size_t>();
    params.hyper.hidden_dim = h.at("hidden_dim").get<std::size_t>();
    params.hyper.seed = meta.at("seed").get<std::uint64_t>();
    params.hyper.validate();
    const auto expected = ScorerParams::shapes_for(params.hyper);
    const auto& tensors = meta.at("tensors");
    if (tensors.size() != kNumParamTensors) {
      throw CheckpointError(kCheckpointHeaderBytes, "expected " + std::to_string(kNumParamTensors) + " tensors");
    }
    for (std::size_t i = 0; i < kNumParamTensors; ++i) {
      const auto name = tensors[i].at("name").get<std::string>();
      const auto shape = tensors[i].at("shape").get<nd::Shape>();
      if (name != ScorerParams::names[i]) {
        throw CheckpointError(kCheckpointHeaderBytes, "tensor " + std::to_string(i) + " is '" + name +
                                                          "', expected '" + std::string(ScorerParams::names[i]) + "'");
      }
      if (shape != expected[i]) {
        throw CheckpointError(kCheckpointHeaderBytes, "tensor '" + name + "' has shape " + nd::to_string(shape) +
                                                          " but hyper requires " + nd::to_string(expected[i]));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(kCheckpointHeaderBytes, std::string("bad metadata: ") + e.what());
  } catch (const ArgumentError& e) {
    throw CheckpointError(kCheckpointHeaderBytes, e.what());
  }
  const auto shapes = ScorerParams::shapes_for(params.hyper);
  std::size_t offset = kCheckpointHeaderBytes + meta_len;
  auto targets = params.tensors();
  for (std::size_t i = 0; i < kNumParamTensors; ++i) {
    const std::size_t n = nd::numel(shapes[i]);
    if (offset + 4 * n > bytes.size()) {
      throw CheckpointError(bytes.size(), "truncated data for tensor '" + std::string(ScorerParams::names[i]) + "'");
    }
    std::vector<double> values(n);
    for (std::size_t j = 0; j < n; ++j) {
      values[j] = static_cast<double>(std::bit_cast<float>(detail::get_u32(bytes, offset)));
      offset += 4;
    }
    *targets[i] = nd::Tensor(shapes[i], std::move(values));
  }
  if (offset != bytes.size()) {
    throw CheckpointError(offset, std::to_string(bytes.size() - offset) + " trailing bytes");
  }
  return params;
}

inline void save_checkpoint(const ScorerParams& params, const std::string& path) {
  const std::string bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CheckpointError(0, "cannot open '" + path + "' for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw CheckpointError(0, "write to '" + path + "' failed");
  }
}

inline ScorerParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError(0, "cannot open '" + path + "'");
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace sir
