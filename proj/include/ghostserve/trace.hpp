// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ghostserve/kv_layout.hpp"
#include "ghostserve/recovery.hpp"

namespace ghostserve {

struct TraceRequest {
  enum class Class { kLongInShortOut, kShortInLongOut };

  std::uint64_t id = 0;
  double arrival = 0.0;
  std::uint64_t input_len = 1;
  std::uint64_t output_len = 1;
  Class cls = Class::kLongInShortOut;
};

inline const char* to_string(TraceRequest::Class c) {
  return c == TraceRequest::Class::kLongInShortOut ? "long_in_short_out" : "short_in_long_out";
}

struct LengthRange {
  std::uint64_t min = 1;
  std::uint64_t max = 1;

  void validate(const char* what) const {
    if (min < 1 || max < min)
      throw std::invalid_argument(std::string("trace: empty length range for ") + what);
  }
};

// Synthetic workload: Poisson arrivals, a configurable mix of
// long-input-short-output and short-input-long-output requests, lengths
// uniform within each class's range.
struct TraceGenConfig {
  std::uint64_t seed = 1;
  std::uint32_t count = 16;
  double arrival_rate = 1.0;     // arrivals per second
  double long_input_mix = 0.5;   // fraction of long-in-short-out requests
  LengthRange long_in{16384, 65536};
  LengthRange long_out{128, 512};
  LengthRange short_in{128, 1024};
  LengthRange short_out{2048, 8192};

  void validate() const {
    if (count < 1) throw std::invalid_argument("trace: count must be >= 1");
    if (arrival_rate <= 0) throw std::invalid_argument("trace: arrival rate must be positive");
    if (long_input_mix < 0 || long_input_mix > 1)
      throw std::invalid_argument("trace: mix must be in [0, 1]");
    long_in.validate("long_in");
    long_out.validate("long_out");
    short_in.validate("short_in");
    short_out.validate("short_out");
  }
};

namespace detail {

// Deterministic stream helpers over splitmix64; all simulator randomness
// flows through these so runs reproduce bit-for-bit from the seeds.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0xD1B54A32D192ED03ull) {}

  std::uint64_t next() { return splitmix64(state_); }

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

  std::uint64_t uniform_in(std::uint64_t lo, std::uint64_t hi) {  // inclusive
    return lo + next() % (hi - lo + 1);
  }

 private:
  std::uint64_t state_;
};

}  // namespace detail

inline std::vector<TraceRequest> generate_trace(const TraceGenConfig& cfg) {
  cfg.validate();
  detail::Rng rng(cfg.seed);
  std::vector<TraceRequest> trace;
  trace.reserve(cfg.count);
  double clock = 0.0;
  for (std::uint32_t i = 0; i < cfg.count; ++i) {
    clock += rng.exponential(cfg.arrival_rate);
    TraceRequest req;
    req.id = i;
    req.arrival = clock;
    const bool long_input = rng.uniform01() < cfg.long_input_mix;
    req.cls = long_input ? TraceRequest::Class::kLongInShortOut
                         : TraceRequest::Class::kShortInLongOut;
    const LengthRange& in = long_input ? cfg.long_in : cfg.short_in;
    const LengthRange& out = long_input ? cfg.long_out : cfg.short_out;
    req.input_len = rng.uniform_in(in.min, in.max);
    req.output_len = rng.uniform_in(out.min, out.max);
    trace.push_back(req);
  }
  return trace;
}

struct FailureInjectorConfig {
  double rate = 0.1;  // fraction of requests that hit one failure
  std::uint64_t seed = 2;
  int workers_per_failure = 1;

  void validate(int tp_degree) const {
    if (rate < 0 || rate > 1) throw std::invalid_argument("failures: rate must be in [0, 1]");
    if (workers_per_failure < 1 || workers_per_failure > tp_degree)
      throw std::invalid_argument("failures: workers_per_failure must be in [1, N]");
  }
};

struct InjectedFailure {
  std::uint64_t request_id = 0;
  FailureEvent event;
};

// Each request is independently selected with probability `rate`; a selected
// request fails once, at a uniformly random completed-chunk count across its
// whole run (prefill + decode), with `workers_per_failure` distinct workers.
// `at_time` stays zero here; the simulator stamps it when the failure fires.
inline std::vector<InjectedFailure> inject_failures(const std::vector<TraceRequest>& trace,
                                                    const FailureInjectorConfig& cfg,
                                                    std::uint32_t chunk_size, int tp_degree) {
  cfg.validate(tp_degree);
  detail::Rng rng(cfg.seed);
  std::vector<InjectedFailure> failures;
  for (const TraceRequest& req : trace) {
    const double u = rng.uniform01();
    if (u >= cfg.rate) continue;
    const std::uint32_t prefill_chunks = chunk_count(req.input_len, chunk_size);
    const std::uint32_t decode_chunks = chunk_count(req.output_len, chunk_size);
    const std::uint32_t total = prefill_chunks + decode_chunks;

    InjectedFailure f;
    f.request_id = req.id;
    f.event.at_chunk = static_cast<std::uint32_t>(rng.uniform_in(1, total));
    f.event.phase = f.event.at_chunk <= prefill_chunks ? FailureEvent::Phase::kPrefill
                                                       : FailureEvent::Phase::kDecode;
    // Distinct workers via partial Fisher-Yates over [0, N).
    std::vector<int> workers(static_cast<std::size_t>(tp_degree));
    for (int w = 0; w < tp_degree; ++w) workers[static_cast<std::size_t>(w)] = w;
    for (int i = 0; i < cfg.workers_per_failure; ++i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_in(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(tp_degree - 1)));
      std::swap(workers[static_cast<std::size_t>(i)], workers[j]);
      f.event.failed_workers.push_back(workers[static_cast<std::size_t>(i)]);
    }
    failures.push_back(std::move(f));
  }
  return failures;
}

}  // namespace ghostserve
