// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ghostserve/coding.hpp"

namespace ghostserve {

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Parity shards for one (request, chunk), the unit that lives in the host
// tier. `slice_len` is the per-shard byte length; large-model simulations may
// carry entries without payloads, in which case only the accounting exists
// and `parity` stays empty.
struct ParityChunk {
  std::uint64_t request_id = 0;
  ChunkId chunk_id;
  CodingScheme scheme;
  std::vector<std::vector<std::uint8_t>> parity;
  std::uint32_t valid_tokens = 0;
  std::uint64_t slice_len = 0;
  std::uint64_t checksum = 0;

  bool payload_present() const { return !parity.empty(); }

  std::uint64_t payload_bytes() const {
    return static_cast<std::uint64_t>(scheme.k) * slice_len;
  }

  std::uint64_t compute_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& buf : parity) h = fnv1a64(buf, h);
    return h;
  }

  void seal() { checksum = compute_checksum(); }
};

enum class ParityGetStatus { kOk, kMissing, kCorrupt };

// Host-tier keyed store of parity chunks with byte accounting. Capacity is a
// hard bound: a put that would exceed it is refused and the caller must stall
// (entries are never evicted). used_bytes counts the logical parity payload
// plus a fixed per-entry metadata charge; peak payload bytes are tracked
// separately so that cross-strategy memory ratios stay exact.
class ParityStore {
 public:
  static constexpr std::uint64_t kPerEntryMetadataBytes = 64;
  static constexpr std::uint64_t kUnlimited = std::numeric_limits<std::uint64_t>::max();

  explicit ParityStore(std::uint64_t capacity_bytes = kUnlimited)
      : capacity_bytes_(capacity_bytes) {}

  std::uint64_t used_bytes() const { return used_bytes_; }
  std::uint64_t capacity_bytes() const { return capacity_bytes_; }
  std::uint64_t payload_bytes() const { return payload_bytes_; }
  std::uint64_t peak_payload_bytes() const { return peak_payload_bytes_; }
  std::size_t entry_count() const { return entries_.size(); }

  // False means back-pressure: the chunk did not fit and nothing changed.
  bool try_put(ParityChunk chunk) {
    const auto key = std::make_pair(chunk.request_id, chunk.chunk_id.index);
    if (entries_.count(key))
      throw std::logic_error("parity store: duplicate entry for request " +
                             std::to_string(chunk.request_id) + " chunk " +
                             std::to_string(chunk.chunk_id.index));
    const std::uint64_t cost = chunk.payload_bytes() + kPerEntryMetadataBytes;
    if (capacity_bytes_ != kUnlimited && used_bytes_ + cost > capacity_bytes_) return false;
    used_bytes_ += cost;
    payload_bytes_ += chunk.payload_bytes();
    peak_payload_bytes_ = std::max(peak_payload_bytes_, payload_bytes_);
    entries_.emplace(key, std::move(chunk));
    return true;
  }

  ParityGetStatus get(std::uint64_t request_id, std::uint32_t chunk_index,
                      const ParityChunk** out) const {
    auto it = entries_.find(std::make_pair(request_id, chunk_index));
    if (it == entries_.end()) return ParityGetStatus::kMissing;
    const ParityChunk& c = it->second;
    if (c.payload_present() && c.compute_checksum() != c.checksum)
      return ParityGetStatus::kCorrupt;
    if (out) *out = &c;
    return ParityGetStatus::kOk;
  }

  bool contains(std::uint64_t request_id, std::uint32_t chunk_index) const {
    return entries_.count(std::make_pair(request_id, chunk_index)) != 0;
  }

  void erase_request(std::uint64_t request_id) {
    auto it = entries_.lower_bound(std::make_pair(request_id, std::uint32_t{0}));
    while (it != entries_.end() && it->first.first == request_id) {
      used_bytes_ -= it->second.payload_bytes() + kPerEntryMetadataBytes;
      payload_bytes_ -= it->second.payload_bytes();
      it = entries_.erase(it);
    }
  }

  // Recompute the accounting from scratch; true iff it matches used_bytes.
  bool audit() const {
    std::uint64_t sum = 0;
    for (const auto& [key, chunk] : entries_) {
      (void)key;
      sum += chunk.payload_bytes() + kPerEntryMetadataBytes;
    }
    return sum == used_bytes_;
  }

  // Test hook: flip a payload byte so the checksum no longer verifies.
  void corrupt_entry(std::uint64_t request_id, std::uint32_t chunk_index) {
    auto it = entries_.find(std::make_pair(request_id, chunk_index));
    if (it == entries_.end() || !it->second.payload_present()) return;
    it->second.parity[0][0] ^= 0xFF;
  }

  const std::map<std::pair<std::uint64_t, std::uint32_t>, ParityChunk>& entries() const {
    return entries_;
  }

 private:
  std::map<std::pair<std::uint64_t, std::uint32_t>, ParityChunk> entries_;
  std::uint64_t capacity_bytes_;
  std::uint64_t used_bytes_ = 0;
  std::uint64_t payload_bytes_ = 0;
  std::uint64_t peak_payload_bytes_ = 0;
};

// ---- persistence -----------------------------------------------------------
//
// Binary layout (all integers little-endian):
//   magic "GSRV", version u16, scheme kind u8, n u8, k u8,
//   then per entry: request_id u64, chunk_id u32, valid_tokens u32,
//   slice_len u64, k parity buffers of slice_len bytes, checksum u64.

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}
  bool done() const { return pos_ == data_.size(); }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (pos_ + n > data_.size())
      throw std::runtime_error("parity file: truncated");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_parity_store(const ParityStore& store) {
  std::vector<std::uint8_t> out;
  if (store.entry_count() == 0)
    throw std::invalid_argument("parity store: nothing to serialize");
  const CodingScheme scheme = store.entries().begin()->second.scheme;
  out.insert(out.end(), {'G', 'S', 'R', 'V'});
  detail::put_u16(out, 1);
  out.push_back(static_cast<std::uint8_t>(scheme.kind));
  out.push_back(static_cast<std::uint8_t>(scheme.n));
  out.push_back(static_cast<std::uint8_t>(scheme.k));
  for (const auto& [key, chunk] : store.entries()) {
    (void)key;
    if (!(chunk.scheme == scheme))
      throw std::invalid_argument("parity store: mixed schemes cannot be serialized");
    if (!chunk.payload_present())
      throw std::invalid_argument("parity store: cannot serialize entries without payloads");
    detail::put_u64(out, chunk.request_id);
    detail::put_u32(out, chunk.chunk_id.index);
    detail::put_u32(out, chunk.valid_tokens);
    detail::put_u64(out, chunk.slice_len);
    for (const auto& buf : chunk.parity) out.insert(out.end(), buf.begin(), buf.end());
    detail::put_u64(out, chunk.checksum);
  }
  return out;
}

inline ParityStore deserialize_parity_store(std::span<const std::uint8_t> bytes,
                                            std::uint64_t capacity_bytes = ParityStore::kUnlimited) {
  detail::ByteReader r(bytes);
  auto magic = r.take(4);
  if (magic[0] != 'G' || magic[1] != 'S' || magic[2] != 'R' || magic[3] != 'V')
    throw std::runtime_error("parity file: bad magic");
  const std::uint16_t version = r.u16();
  if (version != 1) throw std::runtime_error("parity file: unsupported version");
  CodingScheme scheme;
  scheme.kind = static_cast<CodeKind>(r.u8());
  scheme.n = r.u8();
  scheme.k = r.u8();
  scheme.validate();

  ParityStore store(capacity_bytes);
  while (!r.done()) {
    ParityChunk chunk;
    chunk.scheme = scheme;
    chunk.request_id = r.u64();
    chunk.chunk_id.index = r.u32();
    chunk.valid_tokens = r.u32();
    chunk.slice_len = r.u64();
    chunk.parity.resize(static_cast<std::size_t>(scheme.k));
    for (auto& buf : chunk.parity) {
      auto s = r.take(static_cast<std::size_t>(chunk.slice_len));
      buf.assign(s.begin(), s.end());
    }
    chunk.checksum = r.u64();
    if (chunk.compute_checksum() != chunk.checksum)
      throw std::runtime_error("parity file: checksum mismatch for request " +
                               std::to_string(chunk.request_id) + " chunk " +
                               std::to_string(chunk.chunk_id.index));
    if (!store.try_put(std::move(chunk)))
      throw std::runtime_error("parity file: contents exceed store capacity");
  }
  return store;
}

}  // namespace ghostserve
