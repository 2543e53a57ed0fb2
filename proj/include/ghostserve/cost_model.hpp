// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>

#include "ghostserve/coding.hpp"
#include "ghostserve/kv_layout.hpp"

namespace ghostserve {

// Timing model for the virtual cluster. Defaults are calibrated so that a
// 2048-token chunk of the 70B-like reference config takes ~123 ms to compute,
// the per-chunk checkpoint stall stays under 5% of that, and parity offload
// fully overlaps the next chunk.
struct CostModel {
  double compute_per_token = 6.0e-5;        // s/token/worker, prefill and decode
  double intra_bw = 400e9;                  // B/s worker-to-worker fabric
  double host_bw = 32e9;                    // B/s host link
  double encode_rate = 180e9;               // B/s fused encode throughput
  double reconstruct_rate = 300e9;          // B/s fused reconstruct throughput
  double fixed_collective_latency = 2.0e-5; // s per collective
  double restart_overhead = 2.0;            // s: reconnect, warmup, graph capture

  void validate() const {
    if (compute_per_token <= 0 || intra_bw <= 0 || host_bw <= 0 || encode_rate <= 0 ||
        reconstruct_rate <= 0 || fixed_collective_latency < 0 || restart_overhead < 0)
      throw std::invalid_argument("cost: rates must be positive");
    if (host_bw > intra_bw)
      throw std::invalid_argument("cost: host link cannot be faster than the intra-node fabric");
  }

  double chunk_compute_time(std::uint32_t tokens) const { return tokens * compute_per_token; }

  // Many-to-one gather of N-1 peer slices onto the parity worker.
  double gather_time(int tp_degree, std::uint64_t slice) const {
    return static_cast<double>(tp_degree - 1) * slice / intra_bw + fixed_collective_latency;
  }

  double encode_time(int tp_degree, std::uint64_t slice) const {
    return static_cast<double>(tp_degree) * slice / encode_rate;
  }

  double offload_time(int parity_shards, std::uint64_t slice) const {
    return static_cast<double>(parity_shards) * slice / host_bw;
  }

  double parity_fetch_time(int parity_shards, std::uint64_t slice) const {
    return static_cast<double>(parity_shards) * slice / host_bw;
  }

  double reconstruct_time(int tp_degree, std::uint64_t slice) const {
    return static_cast<double>(tp_degree) * slice / reconstruct_rate;
  }

  // Full cost of reconstructing one chunk: parity fetch over the host link,
  // gather of survivors, then the decode pass.
  double reconstruct_chunk_time(const CodingScheme& scheme, std::uint64_t slice) const {
    return parity_fetch_time(scheme.k, slice) + gather_time(scheme.n, slice) +
           reconstruct_time(scheme.n, slice);
  }

  // Synchronous full-slice replication write (all N slices over one link).
  double replicate_write_time(int tp_degree, std::uint64_t slice, double bw) const {
    return static_cast<double>(tp_degree) * slice / bw;
  }
};

}  // namespace ghostserve
