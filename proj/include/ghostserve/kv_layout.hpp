// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace ghostserve {

// Model geometry that determines KV byte volumes. Each of the N
// tensor-parallel workers holds an equal slice of every chunk's KV state.
struct ModelConfig {
  int layers = 80;
  int kv_heads = 8;
  int head_dim = 128;
  int bytes_per_elem = 2;  // FP16
  int tp_degree = 8;

  void validate() const {
    if (layers < 1 || kv_heads < 1 || head_dim < 1 || tp_degree < 1)
      throw std::invalid_argument("model: all dimensions must be positive");
    if (bytes_per_elem != 2)
      throw std::invalid_argument("model: only FP16 (2-byte) elements are supported");
    if ((static_cast<std::int64_t>(kv_heads) * head_dim) % tp_degree != 0)
      throw std::invalid_argument("model: kv_heads * head_dim must divide evenly across workers");
  }
};

// ceil(s / m) prefill chunks for an s-token input at chunk size m.
inline std::uint32_t chunk_count(std::uint64_t tokens, std::uint32_t chunk_size) {
  if (chunk_size == 0) throw std::invalid_argument("chunk: chunk size must be positive");
  if (tokens == 0) throw std::invalid_argument("chunk: token count must be positive");
  return static_cast<std::uint32_t>((tokens + chunk_size - 1) / chunk_size);
}

// Bytes of one worker's slice of one m-token chunk:
// 2 (K and V) x layers x m x (kv_heads * head_dim / tp) x bytes_per_elem.
inline std::uint64_t slice_bytes(const ModelConfig& cfg, std::uint32_t chunk_size) {
  cfg.validate();
  const std::uint64_t elems_per_token =
      static_cast<std::uint64_t>(cfg.kv_heads) * cfg.head_dim / cfg.tp_degree;
  return 2ull * cfg.layers * chunk_size * elems_per_token * cfg.bytes_per_elem;
}

// Per-token stride within one (tensor, layer) block of a slice.
inline std::uint64_t token_stride_bytes(const ModelConfig& cfg) {
  return static_cast<std::uint64_t>(cfg.kv_heads) * cfg.head_dim / cfg.tp_degree *
         cfg.bytes_per_elem;
}

struct ChunkId {
  std::uint32_t index = 0;

  auto operator<=>(const ChunkId&) const = default;
};

// One worker's byte slice of one chunk's KV state. Layout: K tensor then V
// tensor, each layer-major ([layer][token][head elems]); bytes for tokens at
// and beyond valid_tokens are zero.
struct KvChunkSlice {
  std::uint64_t request_id = 0;
  ChunkId chunk_id;
  int worker = 0;
  std::vector<std::uint8_t> bytes;
  std::uint32_t valid_tokens = 0;
};

// Zero the padding region for a partial chunk: within each (tensor, layer)
// block, tokens [valid_tokens, m). Parity over the active bytes is unchanged
// because every scheme here is byte-wise linear and padding bytes are zero.
inline void pad_partial(KvChunkSlice& slice, const ModelConfig& cfg, std::uint32_t chunk_size) {
  if (slice.valid_tokens > chunk_size)
    throw std::invalid_argument("kv: valid_tokens exceeds chunk size");
  const std::uint64_t stride = token_stride_bytes(cfg);
  const std::uint64_t block = stride * chunk_size;  // one layer of one tensor
  const std::uint64_t pad_off = stride * slice.valid_tokens;
  const std::uint64_t nblocks = 2ull * cfg.layers;
  for (std::uint64_t b = 0; b < nblocks; ++b) {
    std::uint8_t* base = slice.bytes.data() + b * block;
    std::memset(base + pad_off, 0, block - pad_off);
  }
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                             std::uint64_t c) {
  std::uint64_t s = seed;
  s ^= splitmix64(a += 0x9E3779B97F4A7C15ull);
  s ^= splitmix64(b += 0xC2B2AE3D27D4EB4Full);
  s ^= splitmix64(c += 0x165667B19E3779F9ull);
  return s;
}

}  // namespace detail

// Deterministic ground-truth KV bytes for (request, chunk, worker). The
// simulator uses this stream both to fill slices before encoding and as the
// oracle that recovered state is compared against.
inline KvChunkSlice make_ground_truth_slice(std::uint64_t kv_seed, std::uint64_t request_id,
                                            ChunkId chunk, int worker, const ModelConfig& cfg,
                                            std::uint32_t chunk_size,
                                            std::uint32_t valid_tokens) {
  KvChunkSlice slice;
  slice.request_id = request_id;
  slice.chunk_id = chunk;
  slice.worker = worker;
  slice.valid_tokens = valid_tokens;
  const std::uint64_t len = slice_bytes(cfg, chunk_size);
  slice.bytes.resize(len);
  std::uint64_t state =
      detail::mix_key(kv_seed, request_id, chunk.index, static_cast<std::uint64_t>(worker));
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8) {
    const std::uint64_t word = detail::splitmix64(state);
    std::memcpy(slice.bytes.data() + i, &word, 8);
  }
  if (i < len) {
    const std::uint64_t word = detail::splitmix64(state);
    std::memcpy(slice.bytes.data() + i, &word, len - i);
  }
  pad_partial(slice, cfg, chunk_size);
  return slice;
}

}  // namespace ghostserve
