// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "ghostserve/checkpoint.hpp"
#include "ghostserve/coding.hpp"
#include "ghostserve/cost_model.hpp"
#include "ghostserve/events.hpp"
#include "ghostserve/kv_layout.hpp"
#include "ghostserve/parity_store.hpp"

namespace ghostserve {

struct FailureEvent {
  enum class Phase { kPrefill, kDecode };

  std::vector<int> failed_workers;
  std::uint32_t at_chunk = 0;  // chunks completed before the failure
  double at_time = 0.0;
  Phase phase = Phase::kPrefill;
};

enum class RecoveryMode { kPureRecompute, kHybrid, kFullRecomputeFallback };

inline const char* to_string(RecoveryMode m) {
  switch (m) {
    case RecoveryMode::kPureRecompute: return "pure_recompute";
    case RecoveryMode::kHybrid: return "hybrid";
    case RecoveryMode::kFullRecomputeFallback: return "full_recompute_fallback";
  }
  return "?";
}

// Split of the n completed chunks: [0, r) recomputed, [r, n) reconstructed.
struct RecoveryPlan {
  std::uint32_t recompute_chunks = 0;  // r
  std::vector<std::uint32_t> reconstruct_ids;
  RecoveryMode mode = RecoveryMode::kPureRecompute;
};

// Choose r in [0, n] minimizing max(T_recompute(r), T_reconstruct(n-r)) where
//   T_recompute(r)   = r * m * compute_per_token + restart_overhead
//   T_reconstruct(q) = q * (parity fetch + gather + reconstruct per chunk).
// The two paths run concurrently, so total recovery time is their max. Ties
// break toward smaller r (less recomputation). The max of an increasing and a
// decreasing line is unimodal, so the integer optimum sits at a boundary or
// next to the real balance point; only those candidates need evaluation.
inline std::uint32_t get_recompute_units(std::uint32_t n, std::uint32_t chunk_size,
                                         const CodingScheme& scheme, std::uint64_t slice,
                                         const CostModel& cost) {
  if (n == 0) return 0;
  const double a = static_cast<double>(chunk_size) * cost.compute_per_token;
  const double c = cost.reconstruct_chunk_time(scheme, slice);
  const double restart = cost.restart_overhead;

  auto objective = [&](std::uint32_t r) {
    return std::max(r * a + restart, (n - r) * c);
  };

  std::vector<std::uint32_t> candidates{0, n};
  if (a + c > 0) {
    const double x = (n * c - restart) / (a + c);
    const double fl = std::floor(x);
    if (fl >= 0 && fl <= n) candidates.push_back(static_cast<std::uint32_t>(fl));
    if (fl + 1 >= 0 && fl + 1 <= n) candidates.push_back(static_cast<std::uint32_t>(fl + 1));
  }
  std::sort(candidates.begin(), candidates.end());
  std::uint32_t best = candidates[0];
  double best_f = objective(best);
  for (std::uint32_t r : candidates) {
    const double f = objective(r);
    if (f < best_f) {
      best = r;
      best_f = f;
    }
  }
  return best;
}

enum class ChunkRepairStatus { kOk, kBadParity };

struct ChunkRepairResult {
  ChunkRepairStatus status = ChunkRepairStatus::kOk;
  std::map<int, KvChunkSlice> recovered;  // failed worker -> slice
};

// Erasure-decode one chunk. Worker w maps to data shard w; parity shards sit
// at indices N..N+k-1. The parity checksum is verified first; a mismatch is
// reported so the caller can recompute this chunk instead.
inline ChunkRepairResult reconstruct_chunk(ChunkId chunk_id,
                                           std::span<const KvChunkSlice> surviving,
                                           const ParityChunk& parity,
                                           const std::set<int>& failed) {
  ChunkRepairResult result;
  const CodingScheme& scheme = parity.scheme;
  if (static_cast<int>(failed.size()) > max_tolerance(scheme))
    throw UnrecoverableError("recovery: failures exceed scheme tolerance");
  if (!parity.payload_present() || parity.compute_checksum() != parity.checksum) {
    result.status = ChunkRepairStatus::kBadParity;
    return result;
  }

  std::map<int, ConstShardSpan> shards;
  for (const auto& s : surviving) {
    if (failed.count(s.worker)) continue;
    shards[s.worker] = ConstShardSpan(s.bytes);
  }
  for (int i = 0; i < scheme.k; ++i) shards[scheme.n + i] = ConstShardSpan(parity.parity[i]);

  ErasurePattern lost(std::vector<int>(failed.begin(), failed.end()));
  auto rebuilt = reconstruct(scheme, shards, lost);

  for (auto& [worker, bytes] : rebuilt) {
    KvChunkSlice slice;
    slice.request_id = parity.request_id;
    slice.chunk_id = chunk_id;
    slice.worker = worker;
    slice.valid_tokens = parity.valid_tokens;
    slice.bytes = std::move(bytes);
    result.recovered.emplace(worker, std::move(slice));
  }
  return result;
}

inline bool verify_recovery(std::span<const std::uint8_t> recovered,
                            std::span<const std::uint8_t> ground_truth) {
  return recovered.size() == ground_truth.size() &&
         std::equal(recovered.begin(), recovered.end(), ground_truth.begin());
}

inline bool verify_recovery(const KvChunkSlice& recovered, const KvChunkSlice& ground_truth) {
  return recovered.worker == ground_truth.worker &&
         recovered.valid_tokens == ground_truth.valid_tokens &&
         verify_recovery(ConstShardSpan(recovered.bytes), ConstShardSpan(ground_truth.bytes));
}

struct RecoveryResult {
  RecoveryPlan plan;
  Timeline events;
  double duration = 0.0;  // restart + max(recompute lane, reconstruct lane)
  double recompute_lane = 0.0;
  double reconstruct_lane = 0.0;
  std::uint64_t parity_bytes_fetched = 0;
  // Materialized mode only: recovered[worker][chunk] for every failed worker.
  std::map<int, std::vector<KvChunkSlice>> recovered;
  bool verified = true;
};

// Hard failure: recovery cannot restore state and has no recompute oracle.
class RecoveryAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure handling for one request. `chunk_tokens` holds the valid token
// count of every completed chunk; `ground_truth` (chunk -> worker -> slice)
// supplies surviving slices and the recompute oracle in materialized mode and
// is null for cost-only runs. `buffered_decode_tokens` are in-flight tokens
// below chunk granularity; they are always recomputed.
//
// Outcomes: more failures than parity tolerance, or any needed parity entry
// missing or corrupt, fall back to recomputing all n chunks. Short histories
// (r >= n) recompute everything without touching the store. Otherwise chunks
// [0, r) are recomputed while [r, n) are reconstructed concurrently; the
// restart penalty is charged before both lanes begin.
inline RecoveryResult recover(std::uint64_t request_id, const FailureEvent& failure,
                              ParityStore& store,
                              const std::vector<std::vector<KvChunkSlice>>* ground_truth,
                              const CheckpointConfig& cfg,
                              std::span<const std::uint32_t> chunk_tokens,
                              std::uint32_t buffered_decode_tokens = 0) {
  cfg.validate();
  if (failure.failed_workers.empty())
    throw std::invalid_argument("recovery: no failed workers");
  const std::uint32_t n = failure.at_chunk;
  if (chunk_tokens.size() < n)
    throw std::invalid_argument("recovery: missing chunk token counts");

  const std::uint64_t slice = slice_bytes(cfg.model, cfg.chunk_size);

  RecoveryResult result;
  RecoveryPlan& plan = result.plan;

  const bool over_tolerance =
      static_cast<int>(failure.failed_workers.size()) > max_tolerance(cfg.scheme);
  std::uint32_t r = over_tolerance
                        ? n
                        : get_recompute_units(n, cfg.chunk_size, cfg.scheme, slice, cfg.cost);

  bool parity_ok = true;
  if (!over_tolerance && r < n) {
    for (std::uint32_t c = r; c < n; ++c) {
      const ParityChunk* entry = nullptr;
      if (store.get(request_id, c, &entry) != ParityGetStatus::kOk) {
        parity_ok = false;
        break;
      }
    }
  }

  if (over_tolerance || (!parity_ok && r < n)) {
    plan.mode = RecoveryMode::kFullRecomputeFallback;
    r = n;
  } else if (r >= n) {
    plan.mode = RecoveryMode::kPureRecompute;
    r = n;
  } else {
    plan.mode = RecoveryMode::kHybrid;
  }
  plan.recompute_chunks = r;
  for (std::uint32_t c = r; c < n; ++c) plan.reconstruct_ids.push_back(c);

  // Timeline: restart, then the two lanes in parallel, then resume.
  const double t0 = failure.at_time;
  result.events.push_back({EventKind::kRestart, request_id, n, TimelineEvent::kAllWorkers, t0,
                           cfg.cost.restart_overhead});
  const double lanes_at = t0 + cfg.cost.restart_overhead;
  const int repair_worker = failure.failed_workers.front();

  double recompute_at = lanes_at;
  for (std::uint32_t c = 0; c < r; ++c) {
    const double dur = cfg.cost.chunk_compute_time(chunk_tokens[c]);
    result.events.push_back(
        {EventKind::kRecompute, request_id, c, TimelineEvent::kAllWorkers, recompute_at, dur});
    recompute_at += dur;
  }
  if (buffered_decode_tokens > 0) {
    const double dur = cfg.cost.chunk_compute_time(buffered_decode_tokens);
    result.events.push_back(
        {EventKind::kRecompute, request_id, n, TimelineEvent::kAllWorkers, recompute_at, dur});
    recompute_at += dur;
  }
  result.recompute_lane = recompute_at - lanes_at;

  double reconstruct_at = lanes_at;
  for (std::uint32_t c : plan.reconstruct_ids) {
    const double fetch = cfg.cost.parity_fetch_time(cfg.scheme.k, slice);
    const double gather = cfg.cost.gather_time(cfg.scheme.n, slice);
    const double decode = cfg.cost.reconstruct_time(cfg.scheme.n, slice);
    result.events.push_back(
        {EventKind::kParityFetch, request_id, c, repair_worker, reconstruct_at, fetch});
    result.events.push_back(
        {EventKind::kGather, request_id, c, repair_worker, reconstruct_at + fetch, gather});
    result.events.push_back({EventKind::kReconstruct, request_id, c, repair_worker,
                             reconstruct_at + fetch + gather, decode});
    reconstruct_at += fetch + gather + decode;
    result.parity_bytes_fetched += static_cast<std::uint64_t>(cfg.scheme.k) * slice;
  }
  result.reconstruct_lane = reconstruct_at - lanes_at;

  const double done = lanes_at + std::max(result.recompute_lane, result.reconstruct_lane);
  result.events.push_back(
      {EventKind::kResume, request_id, n, TimelineEvent::kAllWorkers, done, 0.0});
  result.duration = done - t0;

  // Restore bytes in materialized mode: recomputed chunks come from the
  // oracle, reconstructed chunks go through the codec and are verified
  // against it.
  if (ground_truth != nullptr) {
    if (ground_truth->size() < n)
      throw RecoveryAbort("recovery: ground truth missing for completed chunks");
    std::set<int> failed(failure.failed_workers.begin(), failure.failed_workers.end());
    for (int w : failure.failed_workers) result.recovered[w].resize(n);

    for (std::uint32_t c = 0; c < n; ++c) {
      const auto& chunk_slices = (*ground_truth)[c];
      const bool via_recompute = c < r;
      if (via_recompute) {
        for (int w : failure.failed_workers) result.recovered[w][c] = chunk_slices[w];
        continue;
      }
      const ParityChunk* entry = nullptr;
      if (store.get(request_id, c, &entry) != ParityGetStatus::kOk)
        throw RecoveryAbort("recovery: parity vanished mid-recovery");
      auto repair = reconstruct_chunk(ChunkId{c}, chunk_slices, *entry, failed);
      if (repair.status != ChunkRepairStatus::kOk)
        throw RecoveryAbort("recovery: parity failed verification mid-recovery");
      for (int w : failure.failed_workers) {
        auto it = repair.recovered.find(w);
        if (it == repair.recovered.end())
          throw RecoveryAbort("recovery: codec did not return a failed shard");
        if (!verify_recovery(it->second, chunk_slices[w])) result.verified = false;
        result.recovered[w][c] = std::move(it->second);
      }
    }
  }
  return result;
}

}  // namespace ghostserve
