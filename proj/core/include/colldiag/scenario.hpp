// Copyright 2026 The colldiag Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

/// @file scenario.hpp
/// @brief Scenario scripts and the simulator -> probe -> analyzer pipeline.
///
/// Script lines (blank lines and '#' comments ignored):
///
///   cluster N CHANNELS SEED [bw=B/us] [latency=US] [jitter=US] [measure=0|1]
///   config KEY=VALUE                       analyzer or probe setting
///   comm ID ring|tree R0,R1,...            members may use a-b ranges
///   round COMM OP ALGO PROTO BYTES         posts the next round now
///   fault KIND VICTIM ROUND [key=val...]   delay_us, factor, freeze, rounds,
///                                          op, proto, bytes
///   advance USEC                           moves the clock forward by USEC
///   destroy ID
///   repeat N ... end                       nestable
///   expect KIND VICTIM

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "colldiag/analyzer.hpp"
#include "colldiag/collective_sim.hpp"
#include "colldiag/collector.hpp"
#include "colldiag/probe.hpp"

namespace colldiag {

struct Expectation {
  AnomalyKind kind = AnomalyKind::kH1;
  RankId victim;
  friend bool operator==(const Expectation&, const Expectation&) = default;
};

namespace script {
struct CreateComm {
  CommunicatorDecl decl;
};
struct PostRound {
  CommunicatorId comm;
  OperationDescriptor descriptor;
};
struct InjectFault {
  FaultSpec fault;
};
struct Advance {
  std::uint64_t delta_us = 0;
};
struct DestroyComm {
  CommunicatorId comm;
};
}  // namespace script

using ScriptStep = std::variant<script::CreateComm, script::PostRound,
                                script::InjectFault, script::Advance,
                                script::DestroyComm>;

struct Scenario {
  std::string name;
  std::optional<ClusterConfig> cluster;
  /// `config` lines in order; applied to the analyzer or probe config.
  std::vector<std::pair<std::string, std::string>> settings;
  std::vector<ScriptStep> steps;  // repeat blocks already expanded
  std::vector<Expectation> expectations;
};

/// Throws kScenarioSyntax ("line N: ...") on any error.
Scenario parse_scenario(std::string_view text, std::string name = "");
/// Throws kIo if unreadable, kScenarioSyntax on bad content.
Scenario load_scenario(const std::string& path);

/// True if `key` is a probe setting rather than an analyzer one.
bool is_probe_key(std::string_view key);

struct RunOptions {
  /// Applied after the script's own config lines.
  std::vector<std::pair<std::string, std::string>> overrides;
  std::optional<std::uint64_t> seed;
  bool record_events = false;
};

struct RunSummary {
  std::string scenario;
  std::uint64_t rounds = 0;
  std::uint64_t snapshots = 0;
  std::vector<AnomalyReport> reports;
  std::vector<Expectation> expectations;
  double wall_ms = 0;
  std::uint64_t sim_time_us = 0;

  /// Each expectation is matched by a distinct report of the same kind that
  /// names the victim, and no report is left over.
  bool expectations_met() const;

  std::string to_text() const;
  /// Parses to_text() output. Throws kMalformedRecord.
  static RunSummary parse(std::string_view text);
};

struct RunResult {
  RunSummary summary;
  std::vector<TraceEvent> events;
  std::vector<SnapshotRecord> snapshots;
  TraceLog trace;
  AnalyzerConfig analyzer_config;
  ProbeConfig probe_config;
};

/// Executes the script end to end. Analyzer ticks, heartbeats and samples at
/// time t run after every simulator event at t.
RunResult run_scenario(const Scenario& scenario, const RunOptions& options = {});

/// One row per expectation (or per unexpected report).
struct ReportRow {
  std::string scenario;
  std::string expected;  // "-" if none
  std::string victim;
  std::string reported;  // "-" if none
  bool detected = false;      // some report was paired with the row
  bool located = false;       // ... and it has the expected class
  bool root_correct = false;  // ... and it names the victim
  std::optional<std::uint64_t> detection_latency_us;
  std::optional<std::uint64_t> location_latency_us;
};

std::vector<ReportRow> report_rows(const RunSummary& summary);
void write_report_table(const std::vector<ReportRow>& rows, bool csv,
                        std::ostream& out);

}  // namespace colldiag
