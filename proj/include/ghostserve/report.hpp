// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ghostserve/events.hpp"
#include "ghostserve/simulator.hpp"

namespace ghostserve {

struct ReportMeta {
  std::string strategy;
  std::string failure_rate;  // raw config token, kept verbatim for filenames
  std::uint64_t trace_seed = 0;
  std::uint64_t failure_seed = 0;
  std::uint32_t requests = 0;
};

inline nlohmann::ordered_json report_to_json(const MetricsReport& report, const ReportMeta& meta) {
  nlohmann::ordered_json j;
  j["prefill_latency"] = report.prefill_latency;
  j["decode_latency"] = report.decode_latency;
  j["recovery_latency"] = report.recovery_latency;
  j["p50"] = report.p50;
  j["p99"] = report.p99;
  j["eitr"] = report.eitr;
  j["mttr"] = report.mttr;
  j["io_bytes_checkpoint"] = report.io_bytes_checkpoint;
  j["io_bytes_recovery"] = report.io_bytes_recovery;
  j["parity_store_peak_bytes"] = report.parity_store_peak_bytes;
  j["meta"] = {{"strategy", meta.strategy},
               {"failure_rate", meta.failure_rate},
               {"trace_seed", meta.trace_seed},
               {"failure_seed", meta.failure_seed},
               {"requests", meta.requests}};
  return j;
}

inline std::string timeline_to_csv(const Timeline& timeline) {
  std::ostringstream out;
  out << "time,worker,kind,chunk_id,request_id,duration\n";
  char buf[64];
  auto fmt = [&buf](double d) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), d);
    (void)ec;
    return std::string(buf, p);
  };
  for (const TimelineEvent& ev : timeline) {
    out << fmt(ev.start) << ',' << ev.worker << ',' << to_string(ev.kind) << ',' << ev.chunk_id
        << ',' << ev.request_id << ',' << fmt(ev.duration) << '\n';
  }
  return out.str();
}

inline std::string summary_csv_header() {
  return "strategy,failure_rate,requests,eitr,mttr,p50,p99,io_bytes_checkpoint,"
         "io_bytes_recovery,parity_store_peak_bytes\n";
}

inline std::string summary_csv_row(const MetricsReport& report, const ReportMeta& meta) {
  std::ostringstream out;
  char buf[64];
  auto fmt = [&buf](double d) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), d);
    (void)ec;
    return std::string(buf, p);
  };
  out << meta.strategy << ',' << meta.failure_rate << ',' << meta.requests << ','
      << fmt(report.eitr) << ',' << fmt(report.mttr) << ',' << fmt(report.p50) << ','
      << fmt(report.p99) << ',' << report.io_bytes_checkpoint << ',' << report.io_bytes_recovery
      << ',' << report.parity_store_peak_bytes << '\n';
  return out.str();
}

}  // namespace ghostserve
