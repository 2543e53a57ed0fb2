// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace ghostserve {

enum class EventKind {
  kComputeChunk,   // prefill chunk forward pass (one event per worker)
  kDecodeStep,     // decode chunk generation
  kGather,         // slices collected onto the parity worker
  kEncode,         // parity generation
  kOffload,        // async parity write to the host tier
  kBarrier,        // sync point after encode; next chunk may start
  kStall,          // back-pressure or synchronous checkpoint wait
  kReplicateWrite, // synchronous full-copy checkpoint write
  kRestart,        // reconnect/warmup after a failure
  kRecompute,      // lost chunks re-executed
  kParityFetch,    // parity read back over the host link
  kReplicaFetch,   // full-copy restore read during recovery
  kReconstruct,    // erasure decode of a chunk
  kResume,         // serving resumes after recovery
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::kComputeChunk: return "compute_chunk";
    case EventKind::kDecodeStep: return "decode_step";
    case EventKind::kGather: return "gather";
    case EventKind::kEncode: return "encode";
    case EventKind::kOffload: return "offload";
    case EventKind::kBarrier: return "barrier";
    case EventKind::kStall: return "stall";
    case EventKind::kReplicateWrite: return "replicate_write";
    case EventKind::kRestart: return "restart";
    case EventKind::kRecompute: return "recompute";
    case EventKind::kParityFetch: return "parity_fetch";
    case EventKind::kReplicaFetch: return "replica_fetch";
    case EventKind::kReconstruct: return "reconstruct";
    case EventKind::kResume: return "resume";
  }
  return "?";
}

// One timed activity on the virtual clock. worker == kAllWorkers marks
// node-wide events (barriers, restarts).
struct TimelineEvent {
  static constexpr int kAllWorkers = -1;

  EventKind kind = EventKind::kComputeChunk;
  std::uint64_t request_id = 0;
  std::uint32_t chunk_id = 0;
  int worker = kAllWorkers;
  double start = 0.0;
  double duration = 0.0;

  double end() const { return start + duration; }
};

using Timeline = std::vector<TimelineEvent>;

}  // namespace ghostserve
