// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ghostserve/coding.hpp"
#include "ghostserve/cost_model.hpp"
#include "ghostserve/events.hpp"
#include "ghostserve/kv_layout.hpp"
#include "ghostserve/parity_store.hpp"

namespace ghostserve {

// Round-robin assignment of the parity-worker duty.
struct AssignmentState {
  int next_worker = 0;
};

inline int next_parity_worker(AssignmentState& state, int tp_degree) {
  if (tp_degree < 1) throw std::invalid_argument("assignment: worker count must be positive");
  const int w = state.next_worker;
  state.next_worker = (state.next_worker + 1) % tp_degree;
  return w;
}

struct CheckpointConfig {
  CodingScheme scheme;
  std::uint32_t chunk_size = 2048;  // m tokens
  ModelConfig model;
  CostModel cost;
  bool checkpoint_decode = true;

  void validate() const {
    scheme.validate();
    model.validate();
    cost.validate();
    if (chunk_size == 0) throw std::invalid_argument("checkpoint: chunk size must be positive");
    if (scheme.n != model.tp_degree)
      throw std::invalid_argument("checkpoint: data shard count must equal tp_degree");
  }
};

// Whether the simulation carries real KV bytes. Large calibrated configs run
// cost-only; small configs materialize so recovery can be checked bit-exactly.
struct KvPolicy {
  bool materialize = true;
  std::uint64_t kv_seed = 0;
};

struct ChunkTiming {
  double start_time = 0.0;      // when this chunk's compute begins
  double host_link_free = 0.0;  // host link availability (offloads serialize)
};

struct ChunkCheckpointOutcome {
  ParityChunk parity;
  Timeline events;
  ChunkTiming timing;    // start_time = when the next chunk may begin
  double compute = 0.0;  // per-worker chunk compute seconds
  double stall = 0.0;    // non-overlapped checkpoint cost (gather + encode)
  int parity_worker = 0;
};

namespace detail {

inline ChunkCheckpointOutcome checkpoint_chunk_impl(
    std::uint64_t request_id, ChunkId chunk, std::uint32_t valid_tokens,
    const CheckpointConfig& cfg, AssignmentState& state, ChunkTiming timing,
    EventKind compute_kind) {
  const int n = cfg.scheme.n;
  const std::uint64_t slice = slice_bytes(cfg.model, cfg.chunk_size);

  ChunkCheckpointOutcome out;
  out.parity_worker = next_parity_worker(state, n);
  out.compute = cfg.cost.chunk_compute_time(valid_tokens);

  const double t0 = timing.start_time;
  for (int w = 0; w < n; ++w)
    out.events.push_back({compute_kind, request_id, chunk.index, w, t0, out.compute});

  const double gather_dur = cfg.cost.gather_time(n, slice);
  const double encode_dur = cfg.cost.encode_time(n, slice);
  const double gather_start = t0 + out.compute;
  out.events.push_back(
      {EventKind::kGather, request_id, chunk.index, out.parity_worker, gather_start, gather_dur});
  out.events.push_back({EventKind::kEncode, request_id, chunk.index, out.parity_worker,
                        gather_start + gather_dur, encode_dur});
  const double barrier_at = gather_start + gather_dur + encode_dur;
  out.events.push_back({EventKind::kBarrier, request_id, chunk.index, TimelineEvent::kAllWorkers,
                        barrier_at, 0.0});

  // Offload is asynchronous: it queues on the host link and overlaps the next
  // chunk's compute, so it does not contribute to the stall.
  const double offload_dur = cfg.cost.offload_time(cfg.scheme.k, slice);
  const double offload_start = std::max(barrier_at, timing.host_link_free);
  out.events.push_back({EventKind::kOffload, request_id, chunk.index, out.parity_worker,
                        offload_start, offload_dur});

  out.stall = gather_dur + encode_dur;
  out.timing.start_time = barrier_at;
  out.timing.host_link_free = offload_start + offload_dur;

  out.parity.request_id = request_id;
  out.parity.chunk_id = chunk;
  out.parity.scheme = cfg.scheme;
  out.parity.valid_tokens = valid_tokens;
  out.parity.slice_len = slice;
  out.parity.seal();
  return out;
}

}  // namespace detail

// Checkpoint one chunk whose N slices have been computed (and padded, for a
// partial tail). Produces the parity chunk plus the timed gather/encode/
// offload events; assignment advances by one.
inline ChunkCheckpointOutcome checkpoint_chunk(std::span<const KvChunkSlice> slices,
                                               const CheckpointConfig& cfg,
                                               AssignmentState& state, ChunkTiming timing,
                                               EventKind compute_kind = EventKind::kComputeChunk) {
  cfg.validate();
  if (static_cast<int>(slices.size()) != cfg.scheme.n)
    throw std::logic_error("checkpoint: expected one slice per worker");
  const std::uint64_t slice_len = slice_bytes(cfg.model, cfg.chunk_size);
  for (const auto& s : slices) {
    if (s.bytes.size() != slice_len)
      throw std::logic_error("checkpoint: slice has unexpected length");
    if (s.chunk_id.index != slices[0].chunk_id.index ||
        s.request_id != slices[0].request_id ||
        s.valid_tokens != slices[0].valid_tokens)
      throw std::logic_error("checkpoint: slices disagree on chunk identity");
  }

  auto out = detail::checkpoint_chunk_impl(slices[0].request_id, slices[0].chunk_id,
                                           slices[0].valid_tokens, cfg, state, timing,
                                           compute_kind);
  std::vector<ConstShardSpan> data;
  data.reserve(slices.size());
  for (const auto& s : slices) data.emplace_back(s.bytes);
  out.parity.parity = encode(cfg.scheme, data);
  out.parity.seal();
  return out;
}

// Cost-only variant: same events and accounting, no payload.
inline ChunkCheckpointOutcome checkpoint_chunk_costs(std::uint64_t request_id, ChunkId chunk,
                                                     std::uint32_t valid_tokens,
                                                     const CheckpointConfig& cfg,
                                                     AssignmentState& state, ChunkTiming timing,
                                                     EventKind compute_kind = EventKind::kComputeChunk) {
  cfg.validate();
  return detail::checkpoint_chunk_impl(request_id, chunk, valid_tokens, cfg, state, timing,
                                       compute_kind);
}

struct PrefillRunResult {
  Timeline events;
  bool completed = false;
  std::uint32_t chunks_done = 0;
  std::optional<std::uint32_t> stalled_at_chunk;  // back-pressure, store unchanged there
  ChunkTiming timing;
  AssignmentState state;
  double compute_time = 0.0;
  double stall_time = 0.0;
  // Materialized mode: ground_truth[chunk][worker], the recovery oracle.
  std::vector<std::vector<KvChunkSlice>> ground_truth;
};

// Algorithm: for each of the ceil(s/m) chunks, compute the N slices, gather
// them to the rotating parity worker, encode, offload parity to the host
// store. On back-pressure the run stops at the offending chunk with a stall
// marker; parity is never dropped.
inline PrefillRunResult run_prefill_with_checkpointing(std::uint64_t request_id,
                                                       std::uint64_t input_tokens,
                                                       const CheckpointConfig& cfg,
                                                       ParityStore& store, const KvPolicy& policy,
                                                       double start_time = 0.0) {
  cfg.validate();
  const std::uint32_t chunks = chunk_count(input_tokens, cfg.chunk_size);
  PrefillRunResult run;
  run.timing.start_time = start_time;
  run.timing.host_link_free = start_time;

  for (std::uint32_t c = 0; c < chunks; ++c) {
    const std::uint32_t valid = (c + 1 == chunks)
        ? static_cast<std::uint32_t>(input_tokens - static_cast<std::uint64_t>(c) * cfg.chunk_size)
        : cfg.chunk_size;
    ChunkCheckpointOutcome out;
    if (policy.materialize) {
      std::vector<KvChunkSlice> slices;
      slices.reserve(static_cast<std::size_t>(cfg.scheme.n));
      for (int w = 0; w < cfg.scheme.n; ++w)
        slices.push_back(make_ground_truth_slice(policy.kv_seed, request_id, ChunkId{c}, w,
                                                 cfg.model, cfg.chunk_size, valid));
      out = checkpoint_chunk(slices, cfg, run.state, run.timing);
      run.ground_truth.push_back(std::move(slices));
    } else {
      out = checkpoint_chunk_costs(request_id, ChunkId{c}, valid, cfg, run.state, run.timing);
    }

    if (!store.try_put(out.parity)) {
      run.events.push_back({EventKind::kStall, request_id, c, TimelineEvent::kAllWorkers,
                            run.timing.start_time, 0.0});
      run.stalled_at_chunk = c;
      if (policy.materialize) run.ground_truth.pop_back();
      return run;
    }
    run.events.insert(run.events.end(), out.events.begin(), out.events.end());
    run.timing = out.timing;
    run.compute_time += out.compute;
    run.stall_time += out.stall;
    ++run.chunks_done;
  }
  run.completed = true;
  return run;
}

// Decode-side checkpointing: token KV is buffered per worker and a checkpoint
// is emitted once a full m-token chunk accumulates (or at request end, with
// masking). The throughput penalty therefore accrues only at chunk
// boundaries.
class DecodeCheckpointer {
 public:
  DecodeCheckpointer(std::uint64_t request_id, std::uint32_t first_chunk_index,
                     const CheckpointConfig& cfg, const KvPolicy& policy)
      : request_id_(request_id), next_chunk_(first_chunk_index), cfg_(cfg), policy_(policy) {
    cfg_.validate();
  }

  std::uint32_t buffered_tokens() const { return buffered_; }

  // One generated token; emits a checkpoint when the buffer reaches m.
  std::optional<ChunkCheckpointOutcome> step(AssignmentState& state, ChunkTiming& timing) {
    ++buffered_;
    if (buffered_ < cfg_.chunk_size) return std::nullopt;
    return emit(state, timing);
  }

  // Request finished: checkpoint whatever is buffered, masked past the tail.
  std::optional<ChunkCheckpointOutcome> flush(AssignmentState& state, ChunkTiming& timing) {
    if (buffered_ == 0) return std::nullopt;
    return emit(state, timing);
  }

  const std::vector<std::vector<KvChunkSlice>>& ground_truth() const { return ground_truth_; }

 private:
  std::optional<ChunkCheckpointOutcome> emit(AssignmentState& state, ChunkTiming& timing) {
    const std::uint32_t valid = buffered_;
    const ChunkId chunk{next_chunk_};
    ChunkCheckpointOutcome out;
    if (policy_.materialize) {
      std::vector<KvChunkSlice> slices;
      for (int w = 0; w < cfg_.scheme.n; ++w)
        slices.push_back(make_ground_truth_slice(policy_.kv_seed, request_id_, chunk, w,
                                                 cfg_.model, cfg_.chunk_size, valid));
      out = checkpoint_chunk(slices, cfg_, state, timing, EventKind::kDecodeStep);
      ground_truth_.push_back(std::move(slices));
    } else {
      out = checkpoint_chunk_costs(request_id_, chunk, valid, cfg_, state, timing,
                                   EventKind::kDecodeStep);
    }
    ++next_chunk_;
    buffered_ = 0;
    timing = out.timing;
    return out;
  }

  std::uint64_t request_id_;
  std::uint32_t next_chunk_;
  CheckpointConfig cfg_;
  KvPolicy policy_;
  std::uint32_t buffered_ = 0;
  std::vector<std::vector<KvChunkSlice>> ground_truth_;
};

}  // namespace ghostserve
