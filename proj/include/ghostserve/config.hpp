// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ghostserve/simulator.hpp"
#include "ghostserve/trace.hpp"

namespace ghostserve {

// Run parameters, one flat dotted key each. Text format: "key = value" lines,
// '#' comments, lists comma-separated. Unknown keys are rejected so sweep
// scripts fail loudly on typos, and a dumped effective config reloads to an
// identical run.
struct RunConfig {
  ModelConfig model;
  std::string scheme_kind = "rs";
  int scheme_parity_shards = 2;
  std::uint32_t chunk_size_tokens = 2048;
  bool checkpoint_decode = true;
  CostModel cost;
  double disk_bw = 6e9;
  std::uint64_t store_capacity_bytes = 0;  // 0 = unlimited
  std::string strategy_kind = "ghostserve";
  TraceGenConfig trace;
  FailureInjectorConfig failures{0.0, 2, 1};
  std::string sim_materialize = "auto";  // auto | on | off
  std::uint64_t sim_kv_seed = 3;
  std::uint32_t sim_verify_chunks = 2;
  bool sim_record_timeline = false;
  std::vector<std::string> sweep_strategies;     // empty -> strategy.kind only
  std::vector<std::string> sweep_failure_rates;  // raw tokens, empty -> failures.rate only
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: bad bool for " + key + ": '" + v + "' (want true|false)");
}

inline std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string fmt_double(double d) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), d);
  (void)ec;
  return std::string(buf, p);
}

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

}  // namespace detail

inline void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_list;
  using detail::parse_u64;

  auto as_int = [&](const std::string& v) { return static_cast<int>(parse_u64(key, v)); };
  auto as_u32 = [&](const std::string& v) { return static_cast<std::uint32_t>(parse_u64(key, v)); };

  if (key == "model.layers") cfg.model.layers = as_int(value);
  else if (key == "model.kv_heads") cfg.model.kv_heads = as_int(value);
  else if (key == "model.head_dim") cfg.model.head_dim = as_int(value);
  else if (key == "model.tp_degree") cfg.model.tp_degree = as_int(value);
  else if (key == "scheme.kind") cfg.scheme_kind = value;
  else if (key == "scheme.parity_shards") cfg.scheme_parity_shards = as_int(value);
  else if (key == "chunk.size_tokens") cfg.chunk_size_tokens = as_u32(value);
  else if (key == "checkpoint.decode") cfg.checkpoint_decode = parse_bool(key, value);
  else if (key == "cost.compute_per_token") cfg.cost.compute_per_token = parse_double(key, value);
  else if (key == "cost.intra_bw") cfg.cost.intra_bw = parse_double(key, value);
  else if (key == "cost.host_bw") cfg.cost.host_bw = parse_double(key, value);
  else if (key == "cost.encode_rate") cfg.cost.encode_rate = parse_double(key, value);
  else if (key == "cost.reconstruct_rate") cfg.cost.reconstruct_rate = parse_double(key, value);
  else if (key == "cost.fixed_collective_latency")
    cfg.cost.fixed_collective_latency = parse_double(key, value);
  else if (key == "cost.restart_overhead") cfg.cost.restart_overhead = parse_double(key, value);
  else if (key == "cost.disk_bw") cfg.disk_bw = parse_double(key, value);
  else if (key == "store.capacity_bytes") cfg.store_capacity_bytes = parse_u64(key, value);
  else if (key == "strategy.kind") cfg.strategy_kind = value;
  else if (key == "trace.seed") cfg.trace.seed = parse_u64(key, value);
  else if (key == "trace.count") cfg.trace.count = as_u32(value);
  else if (key == "trace.arrival_rate") cfg.trace.arrival_rate = parse_double(key, value);
  else if (key == "trace.long_input_mix") cfg.trace.long_input_mix = parse_double(key, value);
  else if (key == "trace.long_in_min") cfg.trace.long_in.min = parse_u64(key, value);
  else if (key == "trace.long_in_max") cfg.trace.long_in.max = parse_u64(key, value);
  else if (key == "trace.long_out_min") cfg.trace.long_out.min = parse_u64(key, value);
  else if (key == "trace.long_out_max") cfg.trace.long_out.max = parse_u64(key, value);
  else if (key == "trace.short_in_min") cfg.trace.short_in.min = parse_u64(key, value);
  else if (key == "trace.short_in_max") cfg.trace.short_in.max = parse_u64(key, value);
  else if (key == "trace.short_out_min") cfg.trace.short_out.min = parse_u64(key, value);
  else if (key == "trace.short_out_max") cfg.trace.short_out.max = parse_u64(key, value);
  else if (key == "failures.rate") cfg.failures.rate = parse_double(key, value);
  else if (key == "failures.seed") cfg.failures.seed = parse_u64(key, value);
  else if (key == "failures.workers_per_failure")
    cfg.failures.workers_per_failure = as_int(value);
  else if (key == "sim.materialize") cfg.sim_materialize = value;
  else if (key == "sim.kv_seed") cfg.sim_kv_seed = parse_u64(key, value);
  else if (key == "sim.verify_chunks") cfg.sim_verify_chunks = as_u32(value);
  else if (key == "sim.record_timeline") cfg.sim_record_timeline = parse_bool(key, value);
  else if (key == "sweep.strategies") cfg.sweep_strategies = parse_list(value);
  else if (key == "sweep.failure_rates") cfg.sweep_failure_rates = parse_list(value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

inline std::string dump_config(const RunConfig& cfg) {
  using detail::fmt_double;
  using detail::join;
  std::ostringstream out;
  auto kv = [&out](const std::string& k, const std::string& v) { out << k << " = " << v << "\n"; };
  kv("checkpoint.decode", cfg.checkpoint_decode ? "true" : "false");
  kv("chunk.size_tokens", std::to_string(cfg.chunk_size_tokens));
  kv("cost.compute_per_token", fmt_double(cfg.cost.compute_per_token));
  kv("cost.disk_bw", fmt_double(cfg.disk_bw));
  kv("cost.encode_rate", fmt_double(cfg.cost.encode_rate));
  kv("cost.fixed_collective_latency", fmt_double(cfg.cost.fixed_collective_latency));
  kv("cost.host_bw", fmt_double(cfg.cost.host_bw));
  kv("cost.intra_bw", fmt_double(cfg.cost.intra_bw));
  kv("cost.reconstruct_rate", fmt_double(cfg.cost.reconstruct_rate));
  kv("cost.restart_overhead", fmt_double(cfg.cost.restart_overhead));
  kv("failures.rate", fmt_double(cfg.failures.rate));
  kv("failures.seed", std::to_string(cfg.failures.seed));
  kv("failures.workers_per_failure", std::to_string(cfg.failures.workers_per_failure));
  kv("model.head_dim", std::to_string(cfg.model.head_dim));
  kv("model.kv_heads", std::to_string(cfg.model.kv_heads));
  kv("model.layers", std::to_string(cfg.model.layers));
  kv("model.tp_degree", std::to_string(cfg.model.tp_degree));
  kv("scheme.kind", cfg.scheme_kind);
  kv("scheme.parity_shards", std::to_string(cfg.scheme_parity_shards));
  kv("sim.kv_seed", std::to_string(cfg.sim_kv_seed));
  kv("sim.materialize", cfg.sim_materialize);
  kv("sim.record_timeline", cfg.sim_record_timeline ? "true" : "false");
  kv("sim.verify_chunks", std::to_string(cfg.sim_verify_chunks));
  kv("store.capacity_bytes", std::to_string(cfg.store_capacity_bytes));
  kv("strategy.kind", cfg.strategy_kind);
  kv("sweep.failure_rates", join(cfg.sweep_failure_rates));
  kv("sweep.strategies", join(cfg.sweep_strategies));
  kv("trace.arrival_rate", fmt_double(cfg.trace.arrival_rate));
  kv("trace.count", std::to_string(cfg.trace.count));
  kv("trace.long_in_max", std::to_string(cfg.trace.long_in.max));
  kv("trace.long_in_min", std::to_string(cfg.trace.long_in.min));
  kv("trace.long_input_mix", fmt_double(cfg.trace.long_input_mix));
  kv("trace.long_out_max", std::to_string(cfg.trace.long_out.max));
  kv("trace.long_out_min", std::to_string(cfg.trace.long_out.min));
  kv("trace.seed", std::to_string(cfg.trace.seed));
  kv("trace.short_in_max", std::to_string(cfg.trace.short_in.max));
  kv("trace.short_in_min", std::to_string(cfg.trace.short_in.min));
  kv("trace.short_out_max", std::to_string(cfg.trace.short_out.max));
  kv("trace.short_out_min", std::to_string(cfg.trace.short_out.min));
  return out.str();
}

inline void load_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    config_set(cfg, key, value);
  }
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  load_config_text(cfg, ss.str());
  return cfg;
}

inline CodeKind code_kind_from_string(const std::string& s) {
  if (s == "xor") return CodeKind::kXor;
  if (s == "rdp") return CodeKind::kRdp;
  if (s == "rs") return CodeKind::kReedSolomon;
  throw ConfigError("config: unknown scheme.kind '" + s + "' (want xor|rdp|rs)");
}

inline StrategyKind strategy_kind_from_string(const std::string& s) {
  if (s == "recompute_only") return StrategyKind::kRecomputeOnly;
  if (s == "replicate_host") return StrategyKind::kReplicateHost;
  if (s == "replicate_disk") return StrategyKind::kReplicateDisk;
  if (s == "ghostserve") return StrategyKind::kGhostServe;
  throw ConfigError("config: unknown strategy.kind '" + s + "'");
}

inline CodingScheme scheme_from_config(const RunConfig& cfg) {
  CodingScheme scheme;
  scheme.kind = code_kind_from_string(cfg.scheme_kind);
  scheme.n = cfg.model.tp_degree;
  scheme.k = scheme.kind == CodeKind::kXor   ? 1
             : scheme.kind == CodeKind::kRdp ? 2
                                             : cfg.scheme_parity_shards;
  scheme.validate();
  return scheme;
}

// Assemble the validated simulator inputs from a RunConfig. Materialization
// "auto" turns real KV bytes on only when slices are small enough to carry.
inline SimConfig sim_config_from(const RunConfig& cfg) {
  SimConfig sim;
  sim.checkpoint.scheme = scheme_from_config(cfg);
  sim.checkpoint.chunk_size = cfg.chunk_size_tokens;
  sim.checkpoint.model = cfg.model;
  sim.checkpoint.cost = cfg.cost;
  sim.checkpoint.checkpoint_decode = cfg.checkpoint_decode;
  sim.checkpoint.validate();
  sim.disk_bw = cfg.disk_bw;
  sim.store_capacity_bytes =
      cfg.store_capacity_bytes == 0 ? ParityStore::kUnlimited : cfg.store_capacity_bytes;
  if (cfg.sim_materialize == "on") sim.kv.materialize = true;
  else if (cfg.sim_materialize == "off") sim.kv.materialize = false;
  else if (cfg.sim_materialize == "auto")
    sim.kv.materialize = slice_bytes(cfg.model, cfg.chunk_size_tokens) <= (4u << 20);
  else
    throw ConfigError("config: sim.materialize must be auto|on|off");
  sim.kv.kv_seed = cfg.sim_kv_seed;
  sim.verify_chunks = cfg.sim_verify_chunks;
  sim.record_timeline = cfg.sim_record_timeline;
  if (cfg.disk_bw <= 0) throw ConfigError("config: cost.disk_bw must be positive");
  return sim;
}

inline Strategy strategy_from(const RunConfig& cfg, const std::string& kind) {
  Strategy s;
  s.kind = strategy_kind_from_string(kind);
  s.scheme = scheme_from_config(cfg);
  return s;
}

}  // namespace ghostserve
