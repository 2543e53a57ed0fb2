// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ghostserve/checkpoint.hpp"
#include "ghostserve/coding.hpp"
#include "ghostserve/cost_model.hpp"
#include "ghostserve/events.hpp"
#include "ghostserve/parity_store.hpp"
#include "ghostserve/recovery.hpp"
#include "ghostserve/trace.hpp"

namespace ghostserve {

enum class StrategyKind { kRecomputeOnly, kReplicateHost, kReplicateDisk, kGhostServe };

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::kRecomputeOnly: return "recompute_only";
    case StrategyKind::kReplicateHost: return "replicate_host";
    case StrategyKind::kReplicateDisk: return "replicate_disk";
    case StrategyKind::kGhostServe: return "ghostserve";
  }
  return "?";
}

struct Strategy {
  StrategyKind kind = StrategyKind::kGhostServe;
  CodingScheme scheme;  // ghostserve only

  bool checkpoints() const { return kind != StrategyKind::kRecomputeOnly; }
};

struct SimConfig {
  CheckpointConfig checkpoint;
  double disk_bw = 6e9;
  std::uint64_t store_capacity_bytes = ParityStore::kUnlimited;
  KvPolicy kv{false, 3};      // cost-only by default; enable for small models
  bool record_timeline = false;
  std::uint32_t verify_chunks = 2;  // sampled recoverability audits when materialized
  bool retain_parity = false;       // keep completed requests' parity (for save/load)
};

struct MetricsReport {
  std::vector<double> prefill_latency;
  std::vector<double> decode_latency;
  std::vector<double> recovery_latency;
  double p50 = 0.0;
  double p99 = 0.0;
  double eitr = 1.0;
  double mttr = 0.0;
  std::uint64_t io_bytes_checkpoint = 0;
  std::uint64_t io_bytes_recovery = 0;
  std::uint64_t parity_store_peak_bytes = 0;
};

// Inference busy time divided by total accounted runtime, where checkpoint
// stalls, recovery work and restart overheads are the non-inference part.
// Concurrent events (the N per-worker compute events of one chunk, or the two
// recovery lanes) are measured as interval unions, not sums. Async offloads
// and zero-length sync points are excluded entirely.
inline double compute_eitr(const Timeline& timeline) {
  auto union_length = [](std::vector<std::pair<double, double>>& iv) {
    std::sort(iv.begin(), iv.end());
    double total = 0.0, hi = -1.0, lo = 0.0;
    bool open = false;
    for (auto& [s, e] : iv) {
      if (!open || s > hi) {
        if (open) total += hi - lo;
        lo = s;
        hi = e;
        open = true;
      } else {
        hi = std::max(hi, e);
      }
    }
    if (open) total += hi - lo;
    return total;
  };

  std::vector<std::pair<double, double>> inference, overhead;
  for (const TimelineEvent& ev : timeline) {
    if (ev.duration <= 0) continue;
    switch (ev.kind) {
      case EventKind::kComputeChunk:
      case EventKind::kDecodeStep:
        inference.emplace_back(ev.start, ev.end());
        break;
      case EventKind::kGather:
      case EventKind::kEncode:
      case EventKind::kStall:
      case EventKind::kReplicateWrite:
      case EventKind::kRestart:
      case EventKind::kRecompute:
      case EventKind::kParityFetch:
      case EventKind::kReplicaFetch:
      case EventKind::kReconstruct:
        overhead.emplace_back(ev.start, ev.end());
        break;
      case EventKind::kOffload:
      case EventKind::kBarrier:
      case EventKind::kResume:
        break;
    }
  }
  const double inf = union_length(inference);
  const double ovh = union_length(overhead);
  const double total = inf + ovh;
  if (total <= 0) throw std::invalid_argument("eitr: total runtime must be positive");
  return inf / total;
}

inline double compute_mttr(std::span<const double> recovery_durations) {
  if (recovery_durations.empty()) return 0.0;
  double sum = 0.0;
  for (double d : recovery_durations) sum += d;
  return sum / static_cast<double>(recovery_durations.size());
}

// Nearest-rank percentile: smallest sample with cumulative frequency >= q.
inline double percentile_nearest_rank(std::vector<double> samples, double q) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(
      std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                    std::ceil(q * static_cast<double>(samples.size())))));
  return samples[std::min(rank, samples.size()) - 1];
}

// Exhaustively check that one stored chunk survives every erasure pattern of
// up to max_tolerance workers, comparing against the retained slices.
inline bool audit_chunk_recoverability(const ParityStore& store,
                                       std::span<const KvChunkSlice> chunk_slices,
                                       const CodingScheme& scheme) {
  if (chunk_slices.empty()) return false;
  const ParityChunk* entry = nullptr;
  if (store.get(chunk_slices[0].request_id, chunk_slices[0].chunk_id.index, &entry) !=
      ParityGetStatus::kOk)
    return false;
  const int tol = max_tolerance(scheme);
  std::vector<int> pattern;
  // Enumerate all non-empty worker subsets of size <= tol.
  auto check = [&](const std::vector<int>& failed_vec) {
    std::set<int> failed(failed_vec.begin(), failed_vec.end());
    auto repair = reconstruct_chunk(chunk_slices[0].chunk_id, chunk_slices, *entry, failed);
    if (repair.status != ChunkRepairStatus::kOk) return false;
    for (int w : failed)
      if (!verify_recovery(repair.recovered.at(w), chunk_slices[static_cast<std::size_t>(w)]))
        return false;
    return true;
  };
  std::vector<int> stack;
  auto rec = [&](auto&& self, int start) -> bool {
    if (!stack.empty() && !check(stack)) return false;
    if (static_cast<int>(stack.size()) == tol) return true;
    for (int w = start; w < scheme.n; ++w) {
      stack.push_back(w);
      if (!self(self, w + 1)) return false;
      stack.pop_back();
    }
    return true;
  };
  return rec(rec, 0);
}

struct SimResult {
  MetricsReport report;
  Timeline timeline;  // populated when SimConfig.record_timeline
  ParityStore store;  // final host-tier state; non-empty only with retain_parity
};

namespace detail {

struct RequestState {
  TraceRequest req;
  std::uint32_t prefill_chunks = 0;
  std::uint32_t decode_total_chunks = 0;
  std::uint32_t chunks_done = 0;
  std::vector<std::uint32_t> chunk_tokens;
  std::vector<std::vector<KvChunkSlice>> ground_truth;
  AssignmentState assign;
  const InjectedFailure* failure = nullptr;
  bool failure_fired = false;
  bool blocked = false;
  std::uint64_t replica_live_bytes = 0;
  double prefill_time = 0.0;
  double decode_time = 0.0;
  double recovery_time = 0.0;
};

}  // namespace detail

// Deterministic single-node simulation: the N workers serve the trace with
// chunk-level interleaving across active requests in arrival order. Failures
// stall the whole node until the strategy's recovery path completes.
inline SimResult simulate(const std::vector<TraceRequest>& trace, const Strategy& strategy,
                          const SimConfig& sim, const std::vector<InjectedFailure>& failures) {
  CheckpointConfig cfg = sim.checkpoint;
  if (strategy.kind == StrategyKind::kGhostServe) cfg.scheme = strategy.scheme;
  cfg.validate();
  if (trace.empty()) throw std::invalid_argument("simulate: empty trace");
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].id != i)
      throw std::invalid_argument("simulate: request ids must be dense and in order");
    if (i > 0 && trace[i].arrival < trace[i - 1].arrival)
      throw std::invalid_argument("simulate: arrivals must be nondecreasing");
  }

  const int n_workers = cfg.model.tp_degree;
  const std::uint64_t slice = slice_bytes(cfg.model, cfg.chunk_size);
  const double replicate_bw =
      strategy.kind == StrategyKind::kReplicateDisk ? sim.disk_bw : cfg.cost.host_bw;

  std::map<std::uint64_t, const InjectedFailure*> failure_by_request;
  for (const auto& f : failures) failure_by_request[f.request_id] = &f;

  std::vector<detail::RequestState> states;
  states.reserve(trace.size());
  for (const TraceRequest& req : trace) {
    detail::RequestState rs;
    rs.req = req;
    rs.prefill_chunks = chunk_count(req.input_len, cfg.chunk_size);
    rs.decode_total_chunks = chunk_count(req.output_len, cfg.chunk_size);
    auto it = failure_by_request.find(req.id);
    if (it != failure_by_request.end()) rs.failure = it->second;
    states.push_back(std::move(rs));
  }

  ParityStore store(sim.store_capacity_bytes);
  SimResult result;
  Timeline& timeline = result.timeline;
  auto record = [&](const Timeline& evs) {
    if (sim.record_timeline) timeline.insert(timeline.end(), evs.begin(), evs.end());
  };

  double clock = 0.0;
  double host_link_free = 0.0;
  double inference_busy = 0.0;
  double overhead_busy = 0.0;
  std::uint64_t replica_live = 0, replica_peak = 0;
  std::vector<double> episodes;
  std::vector<double> e2e;
  MetricsReport& report = result.report;
  report.prefill_latency.assign(trace.size(), 0.0);
  report.decode_latency.assign(trace.size(), 0.0);
  report.recovery_latency.assign(trace.size(), 0.0);
  e2e.assign(trace.size(), 0.0);

  std::vector<std::size_t> active;
  std::size_t next_pending = 0;
  std::size_t completed = 0;
  std::size_t cursor = 0;

  auto run_recovery = [&](detail::RequestState& rs) {
    FailureEvent ev = rs.failure->event;
    ev.at_time = clock;
    double duration = 0.0;
    const double restart = cfg.cost.restart_overhead;
    Timeline evs;
    switch (strategy.kind) {
      case StrategyKind::kGhostServe: {
        auto rec = recover(rs.req.id, ev, store, sim.kv.materialize ? &rs.ground_truth : nullptr,
                           cfg, rs.chunk_tokens, 0);
        if (!rec.verified)
          throw std::logic_error("simulate: recovered state diverged from ground truth");
        duration = rec.duration;
        report.io_bytes_recovery += rec.parity_bytes_fetched;
        evs = std::move(rec.events);
        if (sim.kv.materialize && sim.verify_chunks > 0) {
          const std::uint32_t n = ev.at_chunk;
          const std::uint32_t step = std::max<std::uint32_t>(1, n / sim.verify_chunks);
          for (std::uint32_t c = 0; c < n; c += step) {
            if (!store.contains(rs.req.id, c)) continue;  // chunk was never checkpointed
            if (!audit_chunk_recoverability(store, rs.ground_truth[c], cfg.scheme))
              throw std::logic_error("simulate: recoverability audit failed");
          }
        }
        break;
      }
      case StrategyKind::kReplicateHost:
      case StrategyKind::kReplicateDisk: {
        const std::uint64_t bytes =
            static_cast<std::uint64_t>(ev.at_chunk) * n_workers * slice;
        const double fetch = static_cast<double>(bytes) / replicate_bw;
        evs.push_back({EventKind::kRestart, rs.req.id, ev.at_chunk, TimelineEvent::kAllWorkers,
                       clock, restart});
        evs.push_back({EventKind::kReplicaFetch, rs.req.id, ev.at_chunk,
                       ev.failed_workers.front(), clock + restart, fetch});
        evs.push_back({EventKind::kResume, rs.req.id, ev.at_chunk, TimelineEvent::kAllWorkers,
                       clock + restart + fetch, 0.0});
        duration = restart + fetch;
        report.io_bytes_recovery += bytes;
        break;
      }
      case StrategyKind::kRecomputeOnly: {
        evs.push_back({EventKind::kRestart, rs.req.id, ev.at_chunk, TimelineEvent::kAllWorkers,
                       clock, restart});
        double at = clock + restart;
        for (std::uint32_t c = 0; c < ev.at_chunk; ++c) {
          const double dur = cfg.cost.chunk_compute_time(rs.chunk_tokens[c]);
          evs.push_back({EventKind::kRecompute, rs.req.id, c, TimelineEvent::kAllWorkers, at, dur});
          at += dur;
        }
        evs.push_back(
            {EventKind::kResume, rs.req.id, ev.at_chunk, TimelineEvent::kAllWorkers, at, 0.0});
        duration = at - clock;
        break;
      }
    }
    record(evs);
    clock += duration;
    overhead_busy += duration;
    episodes.push_back(duration);
    rs.recovery_time += duration;
    report.recovery_latency[rs.req.id] += duration;
  };

  // Process one chunk; returns false on parity-store back-pressure.
  auto process_chunk = [&](detail::RequestState& rs) -> bool {
    const bool is_prefill = rs.chunks_done < rs.prefill_chunks;
    const std::uint32_t chunk_index = rs.chunks_done;
    std::uint32_t valid;
    if (is_prefill) {
      const std::uint64_t done_tokens =
          static_cast<std::uint64_t>(chunk_index) * cfg.chunk_size;
      valid = static_cast<std::uint32_t>(
          std::min<std::uint64_t>(cfg.chunk_size, rs.req.input_len - done_tokens));
    } else {
      const std::uint64_t decoded =
          static_cast<std::uint64_t>(chunk_index - rs.prefill_chunks) * cfg.chunk_size;
      valid = static_cast<std::uint32_t>(
          std::min<std::uint64_t>(cfg.chunk_size, rs.req.output_len - decoded));
    }
    const EventKind compute_kind =
        is_prefill ? EventKind::kComputeChunk : EventKind::kDecodeStep;
    const double compute_dur = cfg.cost.chunk_compute_time(valid);
    const bool checkpoint_this =
        strategy.checkpoints() && (is_prefill || cfg.checkpoint_decode);

    double chunk_time = 0.0;
    if (strategy.kind == StrategyKind::kGhostServe && checkpoint_this) {
      AssignmentState assign_copy = rs.assign;
      ChunkTiming timing{clock, host_link_free};
      ChunkCheckpointOutcome out;
      std::vector<KvChunkSlice> slices;
      if (sim.kv.materialize) {
        for (int w = 0; w < cfg.scheme.n; ++w)
          slices.push_back(make_ground_truth_slice(sim.kv.kv_seed, rs.req.id,
                                                   ChunkId{chunk_index}, w, cfg.model,
                                                   cfg.chunk_size, valid));
        out = checkpoint_chunk(slices, cfg, assign_copy, timing, compute_kind);
      } else {
        out = checkpoint_chunk_costs(rs.req.id, ChunkId{chunk_index}, valid, cfg, assign_copy,
                                     timing, compute_kind);
      }
      if (!store.try_put(out.parity)) {
        if (!rs.blocked)
          record({{EventKind::kStall, rs.req.id, chunk_index, TimelineEvent::kAllWorkers, clock,
                   0.0}});
        return false;
      }
      rs.assign = assign_copy;
      if (sim.kv.materialize) rs.ground_truth.push_back(std::move(slices));
      record(out.events);
      clock = out.timing.start_time;
      host_link_free = out.timing.host_link_free;
      inference_busy += out.compute;
      overhead_busy += out.stall;
      report.io_bytes_checkpoint += static_cast<std::uint64_t>(cfg.scheme.k) * slice;
      chunk_time = out.compute + out.stall;
    } else {
      // Ghost runs retain ground truth even for chunks that are not
      // checkpointed, so decode-phase failures can recompute them.
      if (strategy.kind == StrategyKind::kGhostServe && sim.kv.materialize) {
        std::vector<KvChunkSlice> slices;
        for (int w = 0; w < cfg.scheme.n; ++w)
          slices.push_back(make_ground_truth_slice(sim.kv.kv_seed, rs.req.id,
                                                   ChunkId{chunk_index}, w, cfg.model,
                                                   cfg.chunk_size, valid));
        rs.ground_truth.push_back(std::move(slices));
      }
      Timeline evs;
      for (int w = 0; w < n_workers; ++w)
        evs.push_back({compute_kind, rs.req.id, chunk_index, w, clock, compute_dur});
      double end = clock + compute_dur;
      inference_busy += compute_dur;
      if (checkpoint_this) {  // replicate strategies
        const double write = cfg.cost.replicate_write_time(n_workers, slice, replicate_bw);
        evs.push_back({EventKind::kReplicateWrite, rs.req.id, chunk_index,
                       TimelineEvent::kAllWorkers, end, write});
        end += write;
        overhead_busy += write;
        report.io_bytes_checkpoint += static_cast<std::uint64_t>(n_workers) * slice;
        rs.replica_live_bytes += static_cast<std::uint64_t>(n_workers) * slice;
        replica_live += static_cast<std::uint64_t>(n_workers) * slice;
        replica_peak = std::max(replica_peak, replica_live);
      }
      record(evs);
      chunk_time = end - clock;
      clock = end;
    }

    (is_prefill ? rs.prefill_time : rs.decode_time) += chunk_time;
    rs.chunk_tokens.push_back(valid);
    ++rs.chunks_done;
    if (rs.failure && !rs.failure_fired && rs.failure->event.at_chunk == rs.chunks_done) {
      rs.failure_fired = true;
      run_recovery(rs);
    }
    return true;
  };

  std::size_t blocked_streak = 0;
  while (completed < trace.size()) {
    while (next_pending < trace.size() && trace[next_pending].arrival <= clock)
      active.push_back(next_pending++);
    if (active.empty()) {
      clock = std::max(clock, trace[next_pending].arrival);
      continue;
    }
    if (cursor >= active.size()) cursor = 0;
    detail::RequestState& rs = states[active[cursor]];

    if (!process_chunk(rs)) {
      rs.blocked = true;
      if (++blocked_streak >= active.size())
        throw std::runtime_error(
            "simulate: parity store capacity deadlock; checkpoint scheduler stalled");
      ++cursor;
      continue;
    }
    rs.blocked = false;
    blocked_streak = 0;

    const std::uint32_t total_chunks = rs.prefill_chunks + rs.decode_total_chunks;
    if (rs.chunks_done == total_chunks) {
      e2e[rs.req.id] = clock - rs.req.arrival;
      report.prefill_latency[rs.req.id] = rs.prefill_time;
      report.decode_latency[rs.req.id] = rs.decode_time;
      if (!sim.retain_parity) store.erase_request(rs.req.id);
      replica_live -= rs.replica_live_bytes;
      rs.replica_live_bytes = 0;
      rs.ground_truth.clear();
      for (auto idx : active) states[idx].blocked = false;
      active.erase(active.begin() + static_cast<std::ptrdiff_t>(cursor));
      ++completed;
    } else {
      ++cursor;
    }
  }

  report.p50 = percentile_nearest_rank(e2e, 0.50);
  report.p99 = percentile_nearest_rank(e2e, 0.99);
  report.eitr = (inference_busy + overhead_busy) > 0
                    ? inference_busy / (inference_busy + overhead_busy)
                    : 1.0;
  report.mttr = compute_mttr(episodes);
  report.parity_store_peak_bytes =
      strategy.kind == StrategyKind::kGhostServe ? store.peak_payload_bytes() : replica_peak;
  result.store = std::move(store);
  return result;
}

}  // namespace ghostserve
