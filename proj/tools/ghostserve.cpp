// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ghostserve/coding.hpp"
#include "ghostserve/config.hpp"
#include "ghostserve/parity_store.hpp"
#include "ghostserve/report.hpp"
#include "ghostserve/simulator.hpp"
#include "ghostserve/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;      // bad arguments or configuration
constexpr int kExitIntegrity = 2;  // runtime or data-integrity failure

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const fs::path& path, const void* data, std::size_t len) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
}

void write_file(const fs::path& path, const std::string& text) {
  write_file(path, text.data(), text.size());
}

ghostserve::CodingScheme scheme_from_flags(const std::string& kind, int n, int k) {
  ghostserve::CodingScheme scheme;
  scheme.kind = ghostserve::code_kind_from_string(kind);
  scheme.n = n;
  scheme.k = scheme.kind == ghostserve::CodeKind::kXor   ? 1
             : scheme.kind == ghostserve::CodeKind::kRdp ? 2
                                                         : k;
  scheme.validate();
  return scheme;
}

// ---- encode ----------------------------------------------------------------

int cmd_encode(const std::string& kind, int declared_n, int parity_shards,
               const std::vector<std::string>& files, const std::string& out_dir) {
  if (declared_n > 0 && declared_n != static_cast<int>(files.size()))
    throw std::invalid_argument("scheme declares " + std::to_string(declared_n) +
                                " data shards but " + std::to_string(files.size()) +
                                " files were given");
  const auto scheme = scheme_from_flags(kind, static_cast<int>(files.size()), parity_shards);
  std::vector<std::vector<std::uint8_t>> data;
  data.reserve(files.size());
  for (const auto& f : files) data.push_back(read_file(f));
  for (std::size_t i = 1; i < data.size(); ++i)
    if (data[i].size() != data[0].size())
      throw std::invalid_argument("input shards must have equal length ('" + files[i] +
                                  "' differs)");

  const auto parity = ghostserve::encode(scheme, data);

  fs::create_directories(out_dir);
  ordered_json manifest;
  manifest["scheme"] = ghostserve::to_string(scheme.kind);
  manifest["n"] = scheme.n;
  manifest["k"] = scheme.k;
  manifest["shard_len"] = data[0].size();
  for (std::size_t i = 0; i < files.size(); ++i)
    manifest["data"].push_back(
        {{"path", files[i]}, {"checksum", ghostserve::fnv1a64(data[i])}});
  for (int i = 0; i < scheme.k; ++i) {
    const fs::path p = fs::path(out_dir) / ("parity_" + std::to_string(i) + ".bin");
    write_file(p, parity[static_cast<std::size_t>(i)].data(),
               parity[static_cast<std::size_t>(i)].size());
    manifest["parity"].push_back(
        {{"path", p.string()}, {"checksum", ghostserve::fnv1a64(parity[static_cast<std::size_t>(i)])}});
  }
  const fs::path mpath = fs::path(out_dir) / "manifest.json";
  write_file(mpath, manifest.dump(2) + "\n");
  std::cout << "wrote " << scheme.k << " parity shard(s) and " << mpath.string() << "\n";
  return kExitOk;
}

// ---- reconstruct -----------------------------------------------------------

int cmd_reconstruct(const std::string& manifest_path, const std::vector<int>& lost_vec,
                    const std::string& out_dir) {
  const auto manifest = ordered_json::parse(read_file(manifest_path));
  ghostserve::CodingScheme scheme;
  scheme.kind = ghostserve::code_kind_from_string(manifest.at("scheme"));
  scheme.n = manifest.at("n");
  scheme.k = manifest.at("k");
  scheme.validate();

  ghostserve::ErasurePattern lost(lost_vec);
  const int tol = ghostserve::max_tolerance(scheme);
  if (static_cast<int>(lost.lost.size()) > tol)
    throw std::invalid_argument(std::to_string(lost.lost.size()) +
                                " losses exceed the scheme tolerance of " + std::to_string(tol));

  auto shard_entry = [&](int idx) -> const ordered_json& {
    return idx < scheme.n ? manifest.at("data").at(idx)
                          : manifest.at("parity").at(idx - scheme.n);
  };

  std::vector<std::vector<std::uint8_t>> storage;
  std::map<int, ghostserve::ConstShardSpan> surviving;
  storage.reserve(static_cast<std::size_t>(scheme.n + scheme.k));
  for (int idx = 0; idx < scheme.n + scheme.k; ++idx) {
    if (lost.contains(idx)) continue;
    const auto& entry = shard_entry(idx);
    storage.push_back(read_file(entry.at("path").get<std::string>()));
    if (ghostserve::fnv1a64(storage.back()) != entry.at("checksum").get<std::uint64_t>())
      throw IntegrityError("checksum mismatch for shard " + std::to_string(idx) + " ('" +
                           entry.at("path").get<std::string>() + "')");
    surviving[idx] = ghostserve::ConstShardSpan(storage.back());
  }

  auto recovered = ghostserve::reconstruct(scheme, surviving, lost);

  fs::create_directories(out_dir);
  for (const auto& [idx, bytes] : recovered) {
    const fs::path p = fs::path(out_dir) / ("recovered_" + std::to_string(idx) + ".bin");
    write_file(p, bytes.data(), bytes.size());
    if (ghostserve::fnv1a64(bytes) != shard_entry(idx).at("checksum").get<std::uint64_t>())
      throw IntegrityError("recovered shard " + std::to_string(idx) +
                           " does not match its manifest checksum");
    std::cout << "recovered shard " << idx << " -> " << p.string() << "\n";
  }
  if (recovered.empty()) std::cout << "no data shards lost; nothing to recover\n";
  return kExitOk;
}

// ---- simulate ---------------------------------------------------------------

int cmd_simulate(const std::string& config_path, const std::vector<std::string>& overrides,
                 std::optional<std::uint64_t> seed, const std::string& out_dir,
                 const std::string& format, const std::string& save_parity) {
  ghostserve::RunConfig cfg;
  if (!config_path.empty()) cfg = ghostserve::load_config_file(config_path);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ghostserve::ConfigError("--set expects KEY=VALUE, got '" + ov + "'");
    ghostserve::config_set(cfg, ov.substr(0, eq), ov.substr(eq + 1));
  }
  if (seed) {
    cfg.trace.seed = *seed;
    cfg.failures.seed = *seed + 1;
  }

  auto sim = ghostserve::sim_config_from(cfg);
  if (format == "csv") sim.record_timeline = true;

  std::vector<std::string> strategies =
      cfg.sweep_strategies.empty() ? std::vector<std::string>{cfg.strategy_kind}
                                   : cfg.sweep_strategies;
  std::vector<std::string> rates = cfg.sweep_failure_rates.empty()
                                       ? std::vector<std::string>{ghostserve::detail::fmt_double(
                                             cfg.failures.rate)}
                                       : cfg.sweep_failure_rates;
  for (const auto& s : strategies) ghostserve::strategy_kind_from_string(s);  // validate early

  if (!save_parity.empty()) {
    if (strategies.size() != 1 || rates.size() != 1)
      throw ghostserve::ConfigError("--save-parity needs a single (strategy, rate) cell");
    if (ghostserve::strategy_kind_from_string(strategies[0]) !=
        ghostserve::StrategyKind::kGhostServe)
      throw ghostserve::ConfigError("--save-parity requires strategy.kind=ghostserve");
    if (!sim.kv.materialize)
      throw ghostserve::ConfigError("--save-parity requires sim.materialize=on");
    sim.retain_parity = true;
  }

  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "effective_config.txt", ghostserve::dump_config(cfg));

  const auto trace = ghostserve::generate_trace(cfg.trace);
  std::string summary = ghostserve::summary_csv_header();

  for (const auto& strategy_name : strategies) {
    for (const auto& rate_token : rates) {
      ghostserve::FailureInjectorConfig inj = cfg.failures;
      inj.rate = ghostserve::detail::parse_double("sweep.failure_rates", rate_token);
      const auto failures = ghostserve::inject_failures(trace, inj, cfg.chunk_size_tokens,
                                                        cfg.model.tp_degree);
      const auto strategy = ghostserve::strategy_from(cfg, strategy_name);
      const auto result = ghostserve::simulate(trace, strategy, sim, failures);

      ghostserve::ReportMeta meta{strategy_name, rate_token, cfg.trace.seed, inj.seed,
                                  cfg.trace.count};
      const std::string stem = "report_" + strategy_name + "_r" + rate_token;
      write_file(fs::path(out_dir) / (stem + ".json"),
                 ghostserve::report_to_json(result.report, meta).dump(2) + "\n");
      if (format == "csv")
        write_file(fs::path(out_dir) / ("timeline_" + strategy_name + "_r" + rate_token + ".csv"),
                   ghostserve::timeline_to_csv(result.timeline));
      if (!save_parity.empty()) {
        const auto bytes = ghostserve::serialize_parity_store(result.store);
        write_file(save_parity, bytes.data(), bytes.size());
        std::cout << "saved " << result.store.entry_count() << " parity entries to "
                  << save_parity << "\n";
      }
      summary += ghostserve::summary_csv_row(result.report, meta);
    }
  }
  write_file(fs::path(out_dir) / "summary.csv", summary);
  std::cout << summary;
  return kExitOk;
}

// ---- bench -----------------------------------------------------------------

int cmd_bench(const std::string& kind, int n, int parity_shards,
              const std::vector<std::uint64_t>& sizes, int reps, const std::string& out_file) {
  const auto scheme = scheme_from_flags(kind, n, parity_shards);
  for (auto s : sizes)
    if (s == 0) throw std::invalid_argument("shard sizes must be positive");
  if (reps < 1) throw std::invalid_argument("reps must be >= 1");

  std::ostringstream csv;
  csv << "scheme,n,k,shard_bytes,rep,encode_bps,reconstruct_bps\n";
  std::mt19937_64 rng(42);
  for (std::uint64_t size : sizes) {
    std::vector<std::vector<std::uint8_t>> data(static_cast<std::size_t>(scheme.n));
    for (auto& shard : data) {
      shard.resize(size);
      for (auto& b : shard) b = static_cast<std::uint8_t>(rng());
    }
    std::vector<int> lost_vec;
    for (int i = 0; i < ghostserve::max_tolerance(scheme); ++i) lost_vec.push_back(i);
    const ghostserve::ErasurePattern lost(lost_vec);

    // Untimed warmup: builds the product tables and warms the caches so the
    // first recorded rep is comparable to the rest.
    (void)ghostserve::encode(scheme, data);

    for (int rep = 0; rep < reps; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto parity = ghostserve::encode(scheme, data);
      const auto t1 = std::chrono::steady_clock::now();

      std::map<int, ghostserve::ConstShardSpan> surviving;
      for (int i = 0; i < scheme.n; ++i)
        if (!lost.contains(i)) surviving[i] = ghostserve::ConstShardSpan(data[static_cast<std::size_t>(i)]);
      for (int i = 0; i < scheme.k; ++i)
        surviving[scheme.n + i] = ghostserve::ConstShardSpan(parity[static_cast<std::size_t>(i)]);
      const auto t2 = std::chrono::steady_clock::now();
      const auto rebuilt = ghostserve::reconstruct(scheme, surviving, lost);
      const auto t3 = std::chrono::steady_clock::now();
      if (rebuilt.size() != lost.lost.size()) throw IntegrityError("bench: reconstruct failed");

      const double enc_s = std::chrono::duration<double>(t1 - t0).count();
      const double rec_s = std::chrono::duration<double>(t3 - t2).count();
      const double bytes = static_cast<double>(size) * scheme.n;
      csv << ghostserve::to_string(scheme.kind) << ',' << scheme.n << ',' << scheme.k << ','
          << size << ',' << rep << ',' << static_cast<std::uint64_t>(bytes / enc_s) << ','
          << static_cast<std::uint64_t>(bytes / rec_s) << '\n';
    }
  }
  if (out_file.empty())
    std::cout << csv.str();
  else
    write_file(out_file, csv.str());
  return kExitOk;
}

// ---- report ----------------------------------------------------------------

// Load a saved parity file, verify every checksum, print what it holds.
int cmd_report_parity(const std::string& parity_file) {
  const auto bytes = read_file(parity_file);
  ghostserve::ParityStore store;
  try {
    store = ghostserve::deserialize_parity_store(bytes);
  } catch (const std::runtime_error& e) {
    throw IntegrityError(e.what());
  }
  if (store.entry_count() == 0) {
    std::cout << "entries: 0\n";
    return kExitOk;
  }
  const auto& first = store.entries().begin()->second;
  std::cout << "scheme: " << ghostserve::to_string(first.scheme.kind) << " n=" << first.scheme.n
            << " k=" << first.scheme.k << "\n"
            << "entries: " << store.entry_count() << "\n"
            << "payload_bytes: " << store.payload_bytes() << "\n"
            << "checksums: ok\n";
  return kExitOk;
}

int cmd_report(const std::string& in_dir, const std::string& format,
               const std::string& out_file) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(in_dir))
    if (entry.path().extension() == ".json" &&
        entry.path().filename().string().rfind("report_", 0) == 0)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::invalid_argument("no report_*.json files in '" + in_dir + "'");

  std::string out;
  if (format == "json") {
    ordered_json combined = ordered_json::array();
    for (const auto& f : files) combined.push_back(ordered_json::parse(read_file(f)));
    out = combined.dump(2) + "\n";
  } else {
    out = ghostserve::summary_csv_header();
    for (const auto& f : files) {
      const auto j = ordered_json::parse(read_file(f));
      std::ostringstream row;
      char buf[64];
      auto fmt = [&buf](double d) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), d);
        (void)ec;
        return std::string(buf, p);
      };
      row << j.at("meta").at("strategy").get<std::string>() << ','
          << j.at("meta").at("failure_rate").get<std::string>() << ','
          << j.at("meta").at("requests").get<std::uint32_t>() << ','
          << fmt(j.at("eitr").get<double>()) << ',' << fmt(j.at("mttr").get<double>()) << ','
          << fmt(j.at("p50").get<double>()) << ',' << fmt(j.at("p99").get<double>()) << ','
          << j.at("io_bytes_checkpoint").get<std::uint64_t>() << ','
          << j.at("io_bytes_recovery").get<std::uint64_t>() << ','
          << j.at("parity_store_peak_bytes").get<std::uint64_t>() << '\n';
      out += row.str();
    }
  }
  if (out_file.empty())
    std::cout << out;
  else
    write_file(out_file, out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"erasure-coded KV-cache checkpointing simulator"};
  app.require_subcommand(1);

  // encode
  auto* enc = app.add_subcommand("encode", "encode data shard files into parity files");
  std::string enc_scheme = "rs";
  int enc_n = 0;
  int enc_k = 2;
  std::vector<std::string> enc_files;
  std::string enc_out = ".";
  enc->add_option("--scheme", enc_scheme, "xor|rdp|rs")->capture_default_str();
  enc->add_option("-n,--data-shards", enc_n, "declared data shard count (default: file count)");
  enc->add_option("-k,--parity-shards", enc_k, "parity shard count (rs only)")
      ->capture_default_str();
  enc->add_option("--out", enc_out, "output directory")->capture_default_str();
  enc->add_option("files", enc_files, "n equal-length data shard files")->required();

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "rebuild lost shards from a manifest");
  std::string rec_manifest;
  std::vector<int> rec_lost;
  std::string rec_out = ".";
  rec->add_option("--manifest", rec_manifest, "manifest.json from encode")->required();
  rec->add_option("--lost", rec_lost, "lost shard indices (data 0..n-1, parity n..n+k-1)")
      ->required()
      ->delimiter(',');
  rec->add_option("--out", rec_out, "output directory")->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "run the cluster simulation sweep");
  std::string sim_config;
  std::vector<std::string> sim_sets;
  std::string sim_out = "out";
  std::string sim_format = "json";
  std::uint64_t sim_seed = 0;
  bool sim_seed_given = false;
  sim->add_option("--config", sim_config, "run config file (flat dotted keys)");
  sim->add_option("--set", sim_sets, "KEY=VALUE override, repeatable");
  sim->add_option("--seed", sim_seed, "override trace.seed (failures.seed becomes seed+1)")
      ->each([&](const std::string&) { sim_seed_given = true; });
  sim->add_option("--out", sim_out, "output directory")->capture_default_str();
  sim->add_option("--format", sim_format, "json|csv (csv adds timelines)")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  std::string sim_save_parity;
  sim->add_option("--save-parity", sim_save_parity,
                  "write the final parity store to this file (materialized runs)");

  // bench
  auto* ben = app.add_subcommand("bench", "measure codec throughput");
  std::string ben_scheme = "rs";
  int ben_n = 8;
  int ben_k = 2;
  std::vector<std::uint64_t> ben_sizes{1u << 20};
  int ben_reps = 5;
  std::string ben_out;
  ben->add_option("--scheme", ben_scheme, "xor|rdp|rs")->capture_default_str();
  ben->add_option("-n,--data-shards", ben_n, "data shard count")->capture_default_str();
  ben->add_option("-k,--parity-shards", ben_k, "parity shard count (rs only)")
      ->capture_default_str();
  ben->add_option("--sizes", ben_sizes, "shard sizes in bytes")->delimiter(',');
  ben->add_option("--reps", ben_reps, "repetitions per size")->capture_default_str();
  ben->add_option("--out", ben_out, "CSV output file (default stdout)");

  // report
  auto* rep = app.add_subcommand("report", "combine cell reports into one table");
  std::string rep_in = "out";
  std::string rep_format = "csv";
  std::string rep_out;
  std::string rep_parity;
  rep->add_option("--in", rep_in, "directory with report_*.json files")->capture_default_str();
  rep->add_option("--format", rep_format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  rep->add_option("--out", rep_out, "output file (default stdout)");
  rep->add_option("--parity", rep_parity, "inspect a saved parity store file instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand(enc))
      return cmd_encode(enc_scheme, enc_n, enc_k, enc_files, enc_out);
    if (app.got_subcommand(rec)) return cmd_reconstruct(rec_manifest, rec_lost, rec_out);
    if (app.got_subcommand(sim))
      return cmd_simulate(sim_config, sim_sets,
                          sim_seed_given ? std::optional<std::uint64_t>(sim_seed) : std::nullopt,
                          sim_out, sim_format, sim_save_parity);
    if (app.got_subcommand(ben))
      return cmd_bench(ben_scheme, ben_n, ben_k, ben_sizes, ben_reps, ben_out);
    if (app.got_subcommand(rep)) {
      if (!rep_parity.empty()) return cmd_report_parity(rep_parity);
      return cmd_report(rep_in, rep_format, rep_out);
    }
  } catch (const ghostserve::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIntegrity;
  }
  return kExitUsage;
}
