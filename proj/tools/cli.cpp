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

#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "colldiag/analyzer.hpp"
#include "colldiag/collector.hpp"
#include "colldiag/error.hpp"
#include "colldiag/scenario.hpp"
#include "colldiag/text.hpp"

namespace colldiag::cli {

namespace {

std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::kInvalidConfiguration,
                  "--config expects KEY=VALUE, got '" + item + "'");
    }
    out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path);
  return f;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct RunArgs {
  std::string scenario;
  std::vector<std::string> config;
  std::optional<double> theta;
  std::string out_path;
  std::string trace_path;
  std::string events_path;
  std::optional<std::uint64_t> seed;
  bool csv = false;
};

int do_run(const RunArgs& a, std::ostream& out) {
  const Scenario scenario = load_scenario(a.scenario);
  RunOptions options;
  options.overrides = parse_overrides(a.config);
  if (a.theta) {
    options.overrides.emplace_back("theta_slow", format_double(*a.theta));
  }
  options.seed = a.seed;
  options.record_events = !a.events_path.empty();

  const RunResult result = run_scenario(scenario, options);
  if (!a.out_path.empty()) {
    auto f = open_out(a.out_path);
    f << result.summary.to_text();
    if (!f) throw Error(ErrorCode::kIo, "write failed for " + a.out_path);
  }
  if (!a.trace_path.empty()) {
    auto f = open_out(a.trace_path);
    write_trace(result.trace, f);
    if (!f) throw Error(ErrorCode::kIo, "write failed for " + a.trace_path);
  }
  if (!a.events_path.empty()) {
    auto f = open_out(a.events_path);
    for (const auto& e : result.events) f << e.to_line() << '\n';
    if (!f) throw Error(ErrorCode::kIo, "write failed for " + a.events_path);
  }
  write_report_table(report_rows(result.summary), a.csv, out);
  return result.summary.expectations_met() ? kOk : kMismatch;
}

int do_replay(const std::string& path, std::ostream& out) {
  const TraceLog log = load_trace(path);
  const auto stream = log.stream();
  for (const auto& r : diagnose(stream, log.end_us, log.analyzer_config())) {
    out << r.to_line() << '\n';
  }
  return kOk;
}

int do_report(const std::vector<std::string>& paths, bool csv,
              std::ostream& out) {
  std::vector<ReportRow> rows;
  bool met = true;
  for (const auto& p : paths) {
    const auto summary = RunSummary::parse(slurp(p));
    met = met && summary.expectations_met();
    auto more = report_rows(summary);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  write_report_table(rows, csv, out);
  return met ? kOk : kMismatch;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Collective-communication anomaly diagnosis"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario script");
  run_cmd->add_option("scenario", run_args.scenario, "Scenario file")
      ->required();
  run_cmd->add_option("--config", run_args.config,
                      "Analyzer or probe setting KEY=VALUE");
  run_cmd->add_option("--theta-slow", run_args.theta, "Slow-ratio threshold");
  run_cmd->add_option("--out", run_args.out_path, "Write the run summary");
  run_cmd->add_option("--trace", run_args.trace_path, "Write the snapshot trace");
  run_cmd->add_option("--events", run_args.events_path,
                      "Write the simulator event trace");
  run_cmd->add_option("--seed", run_args.seed, "Override the cluster seed");
  run_cmd->add_flag("--csv", run_args.csv, "CSV instead of a table");

  std::string trace_path;
  auto* replay_cmd =
      app.add_subcommand("replay", "Re-run the analyzer over a saved trace");
  replay_cmd->add_option("trace", trace_path, "Trace file")->required();

  std::vector<std::string> summaries;
  bool report_csv = false;
  auto* report_cmd =
      app.add_subcommand("report", "Tabulate saved run summaries");
  report_cmd->add_option("summary", summaries, "Summary files")->required();
  report_cmd->add_flag("--csv", report_csv, "CSV instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) return do_run(run_args, out);
    if (*replay_cmd) return do_replay(trace_path, out);
    if (*report_cmd) return do_report(summaries, report_csv, out);
  } catch (const Error& e) {
    err << "colldiag: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace colldiag::cli
