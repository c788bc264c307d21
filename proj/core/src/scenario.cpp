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

#include "colldiag/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "colldiag/error.hpp"
#include "colldiag/text.hpp"

namespace colldiag {

// ---------------------------------------------------------------------------
// Parsing

namespace {

constexpr std::uint64_t kMaxExpandedSteps = 50'000'000;

struct Line {
  std::size_t number;
  std::vector<std::string_view> fields;
};

class Parser {
 public:
  explicit Parser(std::string_view text) {
    std::size_t number = 0;
    for (auto raw : split(text, '\n')) {
      ++number;
      if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
      if (auto hash = raw.find('#'); hash != std::string_view::npos) {
        raw = raw.substr(0, hash);
      }
      auto fields = split_ws(raw);
      if (!fields.empty()) lines_.push_back({number, std::move(fields)});
    }
  }

  Scenario parse(std::string name) {
    scenario_.name = std::move(name);
    std::size_t i = 0;
    parse_block(i, false);
    return std::move(scenario_);
  }

 private:
  [[noreturn]] void fail(const Line& line, const std::string& why) const {
    throw Error(ErrorCode::kScenarioSyntax,
                "line " + std::to_string(line.number) + ": " + why);
  }

  std::uint64_t u64(const Line& line, std::string_view text,
                    const char* what) const {
    auto v = parse_u64(text);
    if (!v) fail(line, std::string("bad ") + what + " '" + std::string(text) + "'");
    return *v;
  }

  double dbl(const Line& line, std::string_view text, const char* what) const {
    auto v = parse_double(text);
    if (!v) fail(line, std::string("bad ") + what + " '" + std::string(text) + "'");
    return *v;
  }

  std::uint32_t rank(const Line& line, std::string_view text) const {
    const auto v = u64(line, text, "rank");
    if (v > UINT32_MAX) fail(line, "rank out of range");
    return static_cast<std::uint32_t>(v);
  }

  void need(const Line& line, std::size_t min, std::size_t max,
            const char* usage) const {
    if (line.fields.size() < min || line.fields.size() > max) {
      fail(line, std::string("usage: ") + usage);
    }
  }

  void need_cluster(const Line& line) const {
    if (!scenario_.cluster) fail(line, "'cluster' must come first");
  }

  void emit(const Line& line, ScriptStep step) {
    if (++expanded_ > kMaxExpandedSteps) fail(line, "script expands too far");
    scenario_.steps.push_back(std::move(step));
  }

  // Parses lines from i up to a matching 'end' (nested) or end of input.
  void parse_block(std::size_t& i, bool nested) {
    while (i < lines_.size()) {
      const Line& line = lines_[i];
      const auto cmd = line.fields[0];
      if (cmd == "end") {
        if (!nested) fail(line, "'end' without 'repeat'");
        ++i;
        return;
      }
      if (cmd == "repeat") {
        need(line, 2, 2, "repeat N");
        const auto n = u64(line, line.fields[1], "repeat count");
        const std::size_t body = ++i;
        std::size_t after = body;
        if (n == 0) {
          // Still parse the body so syntax errors surface.
          const auto saved = scenario_.steps.size();
          parse_block(after, true);
          scenario_.steps.resize(saved);
        }
        for (std::uint64_t k = 0; k < n; ++k) {
          after = body;
          parse_block(after, true);
        }
        i = after;
        continue;
      }
      parse_line(line);
      ++i;
    }
    if (nested) fail(lines_.back(), "'repeat' without 'end'");
  }

  void parse_line(const Line& line) {
    const auto& f = line.fields;
    const auto cmd = f[0];
    if (cmd == "cluster") {
      need(line, 4, 8, "cluster N CHANNELS SEED [bw=] [latency=] [jitter=] [measure=]");
      if (scenario_.cluster) fail(line, "duplicate 'cluster'");
      ClusterConfig c;
      const auto n = u64(line, f[1], "rank count");
      const auto ch = u64(line, f[2], "channel count");
      if (n == 0 || n > UINT32_MAX) fail(line, "rank count out of range");
      if (ch < 1 || ch > kMaxChannels) fail(line, "channels must be in [1, 8]");
      c.num_ranks = static_cast<std::uint32_t>(n);
      c.channels_per_rank = static_cast<std::uint32_t>(ch);
      c.seed = u64(line, f[3], "seed");
      for (std::size_t k = 4; k < f.size(); ++k) {
        const auto [key, value] = key_value(line, f[k]);
        if (key == "bw") {
          c.link_bandwidth_bytes_per_us = dbl(line, value, "bandwidth");
          if (!(c.link_bandwidth_bytes_per_us > 0)) fail(line, "bw must be > 0");
        } else if (key == "latency") {
          c.base_latency_us = u64(line, value, "latency");
        } else if (key == "jitter") {
          c.entry_jitter_us = u64(line, value, "jitter");
        } else if (key == "measure") {
          c.measurement_enabled = u64(line, value, "measure") != 0;
        } else {
          fail(line, "unknown cluster option '" + std::string(key) + "'");
        }
      }
      scenario_.cluster = c;
    } else if (cmd == "config") {
      need(line, 2, 2, "config KEY=VALUE");
      const auto [key, value] = key_value(line, f[1]);
      try {
        if (is_probe_key(key)) {
          (void)u64(line, value, "value");
        } else {
          AnalyzerConfig analyzer;
          analyzer.set(key, value);
        }
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kScenarioSyntax) throw;
        fail(line, e.what());
      }
      scenario_.settings.emplace_back(std::string(key), std::string(value));
    } else if (cmd == "comm") {
      need_cluster(line);
      need(line, 4, 4, "comm ID ring|tree R0,R1,...");
      std::string text;
      for (auto part : f) text += std::string(part) + ' ';
      CommunicatorDecl decl;
      try {
        decl = parse_comm_decl(text);
      } catch (const Error& e) {
        fail(line, e.what());
      }
      emit(line, script::CreateComm{std::move(decl)});
    } else if (cmd == "round") {
      need_cluster(line);
      need(line, 6, 6, "round COMM OP ALGO PROTO BYTES");
      script::PostRound post;
      post.comm = CommunicatorId{u64(line, f[1], "communicator id")};
      post.descriptor = descriptor(line, f[2], f[3], f[4], f[5]);
      emit(line, post);
    } else if (cmd == "fault") {
      need_cluster(line);
      if (f.size() < 4) fail(line, "usage: fault KIND VICTIM ROUND [key=val...]");
      parse_fault(line);
    } else if (cmd == "advance") {
      need(line, 2, 2, "advance USEC");
      emit(line, script::Advance{u64(line, f[1], "duration")});
    } else if (cmd == "destroy") {
      need(line, 2, 2, "destroy ID");
      emit(line, script::DestroyComm{CommunicatorId{u64(line, f[1], "id")}});
    } else if (cmd == "expect") {
      need(line, 3, 3, "expect KIND VICTIM");
      auto kind = parse_anomaly_kind(f[1]);
      if (!kind) fail(line, "unknown anomaly kind '" + std::string(f[1]) + "'");
      scenario_.expectations.push_back({*kind, RankId{rank(line, f[2])}});
    } else {
      fail(line, "unknown directive '" + std::string(cmd) + "'");
    }
  }

  std::pair<std::string_view, std::string_view> key_value(
      const Line& line, std::string_view token) const {
    const auto eq = token.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      fail(line, "expected key=value, got '" + std::string(token) + "'");
    }
    return {token.substr(0, eq), token.substr(eq + 1)};
  }

  OperationDescriptor descriptor(const Line& line, std::string_view op,
                                 std::string_view algo, std::string_view proto,
                                 std::string_view bytes) const {
    OperationDescriptor d;
    try {
      d.op = parse_op_name(op);
      d.algorithm = parse_algorithm(algo);
      d.protocol = parse_protocol(proto);
    } catch (const Error& e) {
      fail(line, e.what());
    }
    d.data_size_bytes = u64(line, bytes, "byte count");
    if (d.data_size_bytes == 0) fail(line, "byte count must be > 0");
    return d;
  }

  void parse_fault(const Line& line) {
    const auto& f = line.fields;
    FaultSpec spec;
    auto kind = parse_fault_kind(f[1]);
    if (!kind) fail(line, "unknown fault kind '" + std::string(f[1]) + "'");
    spec.kind = *kind;
    spec.victim = RankId{rank(line, f[2])};
    spec.trigger_round = u64(line, f[3], "trigger round");
    for (std::size_t k = 4; k < f.size(); ++k) {
      const auto [key, value] = key_value(line, f[k]);
      try {
        if (key == "delay_us") {
          spec.entry_delay_us = u64(line, value, "delay");
        } else if (key == "factor") {
          spec.bandwidth_factor = dbl(line, value, "factor");
        } else if (key == "freeze") {
          spec.freeze_after_fraction = dbl(line, value, "freeze fraction");
        } else if (key == "rounds") {
          spec.duration_rounds = u64(line, value, "rounds");
        } else if (key == "op") {
          spec.substitute_op = parse_op_name(value);
        } else if (key == "proto") {
          spec.substitute_protocol = parse_protocol(value);
        } else if (key == "bytes") {
          spec.substitute_bytes = u64(line, value, "bytes");
          if (*spec.substitute_bytes == 0) fail(line, "bytes must be > 0");
        } else {
          fail(line, "unknown fault option '" + std::string(key) + "'");
        }
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kScenarioSyntax) throw;
        fail(line, e.what());
      }
    }
    const bool substitutes = spec.substitute_op || spec.substitute_protocol ||
                             spec.substitute_bytes;
    if (substitutes && spec.kind != FaultKind::kInconsistentHang) {
      fail(line, "substitute fields only apply to InconsistentHang");
    }
    const bool slow_comm = spec.kind == FaultKind::kCommSlow ||
                           spec.kind == FaultKind::kMixedSlow;
    if (slow_comm && !(spec.bandwidth_factor > 0 && spec.bandwidth_factor < 1)) {
      fail(line, "factor must be in (0, 1)");
    }
    if (spec.kind == FaultKind::kHardwareFault &&
        !(spec.freeze_after_fraction >= 0 && spec.freeze_after_fraction < 1)) {
      fail(line, "freeze must be in [0, 1)");
    }
    emit(line, script::InjectFault{spec});
  }

  std::vector<Line> lines_;
  Scenario scenario_;
  std::uint64_t expanded_ = 0;
};

}  // namespace

bool is_probe_key(std::string_view key) {
  return key == "sample_interval_us" || key == "heartbeat_interval_us" ||
         key == "rate_window_samples";
}

Scenario parse_scenario(std::string_view text, std::string name) {
  Parser parser(text);
  return parser.parse(std::move(name));
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string name = path;
  if (auto slash = name.find_last_of('/'); slash != std::string::npos) {
    name = name.substr(slash + 1);
  }
  if (auto dot = name.rfind('.'); dot != std::string::npos && dot > 0) {
    name = name.substr(0, dot);
  }
  return parse_scenario(buf.str(), name);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

void set_probe_key(ProbeConfig& config, std::string_view key,
                   std::string_view value) {
  const auto v = parse_u64(value);
  if (!v) {
    throw Error(ErrorCode::kInvalidConfiguration,
                "bad value '" + std::string(value) + "' for " +
                    std::string(key));
  }
  if (key == "sample_interval_us") {
    config.sample_interval_us = *v;
  } else if (key == "heartbeat_interval_us") {
    config.heartbeat_interval_us = *v;
  } else {
    config.rate_window_samples = *v;
  }
}

class Pipeline final : public SimObserver {
 public:
  Pipeline(const ClusterConfig& cluster, AnalyzerConfig analyzer,
           ProbeConfig probe, bool record_events)
      : cluster_(cluster), analyzer_(analyzer), probe_config_(probe) {
    cluster_.set_observer(this);
    cluster_.enable_event_trace(record_events);
    probes_.reserve(cluster.num_ranks);
    for (std::uint32_t r = 0; r < cluster.num_ranks; ++r) {
      probes_.emplace_back(RankId{r}, &cluster_.frame(RankId{r}), probe);
    }
    collector_.set_config(analyzer.to_pairs());
    next_grid_ = probe.sample_interval_us;
    next_hb_ = probe.heartbeat_interval_us;
    next_tick_ = analyzer.eval_tick_us;
  }

  void on_post(const PostRecord& post) override {
    probes_.at(post.rank.value).on_post(post);
  }

  void on_enter(RankId rank, CommunicatorId comm, std::uint64_t round,
                std::uint64_t time_us) override {
    probes_.at(rank.value).on_enter(comm, round, time_us);
  }

  void on_complete(const CompletionEvent& e) override {
    emit(probes_.at(e.rank.value).on_complete(e.comm, e.round, e.time_us),
         e.time_us);
  }

  void create(const CommunicatorDecl& decl) {
    cluster_.create_communicator(decl.id, decl.members, decl.algorithm);
    collector_.declare_communicator(decl);
    analyzer_.declare_communicator(decl);
  }

  void destroy(CommunicatorId id) {
    const auto members = cluster_.communicator(id).members();
    cluster_.destroy_communicator(id);
    for (const auto& m : members) probes_.at(m.value).release(id);
  }

  void post(CommunicatorId comm, const OperationDescriptor& d) {
    cluster_.post_collective(comm, d, cluster_.next_round(comm));
    ++rounds_;
  }

  void add_fault(const FaultSpec& f) { cluster_.add_fault(f); }

  // Runs events up to `target`; timers at `target` only when inclusive.
  void run_until(std::uint64_t target, bool inclusive) {
    for (;;) {
      const auto te = cluster_.next_event_time().value_or(kNever);
      const auto tt = std::min(next_hb_, next_tick_);
      const bool timer_ok = inclusive ? tt <= target : tt < target;
      if (te <= target && (te <= tt || !timer_ok)) {
        catch_up(te);
        cluster_.advance(te);
      } else if (timer_ok) {
        catch_up(tt + 1);
        if (tt == next_hb_) {
          for (auto& p : probes_) {
            for (auto& s : p.heartbeat(tt)) emit(std::move(s), tt);
          }
          next_hb_ += probe_config_.heartbeat_interval_us;
        }
        if (tt == next_tick_) {
          analyzer_.tick(tt);
          next_tick_ += analyzer_.config().eval_tick_us;
        }
      } else {
        break;
      }
    }
    if (target > cluster_.now()) {
      catch_up(target);
      cluster_.advance(target);
    }
  }

  void finish() { collector_.set_end(cluster_.now()); }

  std::uint64_t now() const { return cluster_.now(); }
  std::uint64_t rounds() const { return rounds_; }
  const Analyzer& analyzer() const { return analyzer_; }
  const Collector& collector() const { return collector_; }
  std::vector<SnapshotRecord>& snapshots() { return snapshots_; }
  const std::vector<TraceEvent>& events() const {
    return cluster_.event_trace();
  }

 private:
  void emit(MetricSnapshot snap, std::uint64_t t) {
    SnapshotRecord rec{kSchemaVersion, t, std::move(snap)};
    collector_.ingest(rec);
    analyzer_.ingest(rec.snapshot);
    snapshots_.push_back(std::move(rec));
  }

  // Samples every grid point in [next_grid_, x). The frames cannot change
  // between two simulator events, so one real sample covers the run.
  void catch_up(std::uint64_t x) {
    if (x <= next_grid_) return;
    const auto dt = probe_config_.sample_interval_us;
    const std::uint64_t n = (x - next_grid_ + dt - 1) / dt;
    for (auto& p : probes_) {
      p.sample();
      if (n > 1) p.sample_unchanged(n - 1);
    }
    next_grid_ += n * dt;
  }

  Cluster cluster_;
  Analyzer analyzer_;
  Collector collector_;
  ProbeConfig probe_config_;
  std::vector<Probe> probes_;
  std::vector<SnapshotRecord> snapshots_;
  std::uint64_t next_grid_ = 0;
  std::uint64_t next_hb_ = 0;
  std::uint64_t next_tick_ = 0;
  std::uint64_t rounds_ = 0;
};

template <class... Fs>
struct Overload : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overload(Fs...) -> Overload<Fs...>;

}  // namespace

RunResult run_scenario(const Scenario& scenario, const RunOptions& options) {
  if (!scenario.cluster) {
    throw Error(ErrorCode::kScenarioSyntax, "scenario has no 'cluster' line");
  }
  const auto started = std::chrono::steady_clock::now();

  AnalyzerConfig analyzer;
  ProbeConfig probe;
  auto apply = [&](const std::vector<std::pair<std::string, std::string>>& kv) {
    for (const auto& [k, v] : kv) {
      if (is_probe_key(k)) {
        set_probe_key(probe, k, v);
      } else {
        analyzer.set(k, v);
      }
    }
  };
  apply(scenario.settings);
  apply(options.overrides);
  analyzer.validate();
  probe.validate();

  ClusterConfig cluster = *scenario.cluster;
  if (options.seed) cluster.seed = *options.seed;

  Pipeline pipe(cluster, analyzer, probe, options.record_events);
  for (const auto& step : scenario.steps) {
    std::visit(
        Overload{
            [&](const script::CreateComm& s) { pipe.create(s.decl); },
            [&](const script::PostRound& s) {
              pipe.post(s.comm, s.descriptor);
            },
            [&](const script::InjectFault& s) { pipe.add_fault(s.fault); },
            [&](const script::Advance& s) {
              pipe.run_until(pipe.now() + s.delta_us, false);
            },
            [&](const script::DestroyComm& s) { pipe.destroy(s.comm); },
        },
        step);
  }
  pipe.run_until(pipe.now(), true);
  pipe.finish();

  RunResult out;
  out.summary.scenario = scenario.name;
  out.summary.rounds = pipe.rounds();
  out.summary.snapshots = pipe.snapshots().size();
  out.summary.reports = pipe.analyzer().reports();
  out.summary.expectations = scenario.expectations;
  out.summary.sim_time_us = pipe.now();
  out.events = pipe.events();
  out.snapshots = std::move(pipe.snapshots());
  out.trace = pipe.collector().log();
  out.analyzer_config = analyzer;
  out.probe_config = probe;
  out.summary.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - started)
                            .count();
  return out;
}

// ---------------------------------------------------------------------------
// Summaries

namespace {

bool names(const AnomalyReport& r, const Expectation& e) {
  return r.kind == e.kind &&
         std::find(r.roots.begin(), r.roots.end(), e.victim) != r.roots.end();
}

// Maximum matching of expectations to distinct reports; -1 = unmatched.
std::vector<int> match_expectations(const RunSummary& s) {
  const auto n = s.expectations.size();
  std::vector<int> owner(s.reports.size(), -1);
  std::function<bool(std::size_t, std::vector<bool>&)> augment =
      [&](std::size_t e, std::vector<bool>& seen) {
        for (std::size_t r = 0; r < s.reports.size(); ++r) {
          if (seen[r] || !names(s.reports[r], s.expectations[e])) continue;
          seen[r] = true;
          if (owner[r] < 0 ||
              augment(static_cast<std::size_t>(owner[r]), seen)) {
            owner[r] = static_cast<int>(e);
            return true;
          }
        }
        return false;
      };
  for (std::size_t e = 0; e < n; ++e) {
    std::vector<bool> seen(s.reports.size(), false);
    augment(e, seen);
  }
  std::vector<int> match(n, -1);
  for (std::size_t r = 0; r < owner.size(); ++r) {
    if (owner[r] >= 0) match[static_cast<std::size_t>(owner[r])] = static_cast<int>(r);
  }
  return match;
}

[[noreturn]] void bad_summary(const std::string& why) {
  throw Error(ErrorCode::kMalformedRecord, "summary: " + why);
}

}  // namespace

bool RunSummary::expectations_met() const {
  if (expectations.size() != reports.size()) return false;
  const auto match = match_expectations(*this);
  return std::all_of(match.begin(), match.end(), [](int m) { return m >= 0; });
}

std::string RunSummary::to_text() const {
  std::ostringstream os;
  os << "# colldiag summary v1\n"
     << "scenario " << scenario << '\n'
     << "rounds " << rounds << '\n'
     << "snapshots " << snapshots << '\n'
     << "sim_time_us " << sim_time_us << '\n'
     << "wall_ms " << format_double(wall_ms) << '\n';
  for (const auto& e : expectations) {
    os << "expect " << to_string(e.kind) << ' ' << e.victim.value << '\n';
  }
  for (const auto& r : reports) os << "report " << r.to_line() << '\n';
  return os.str();
}

RunSummary RunSummary::parse(std::string_view text) {
  RunSummary s;
  bool header = false;
  for (auto raw : split(text, '\n')) {
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (raw.empty()) continue;
    if (raw.front() == '#') {
      if (raw == "# colldiag summary v1") header = true;
      continue;
    }
    const auto space = raw.find(' ');
    const auto key = raw.substr(0, space);
    const auto rest =
        space == std::string_view::npos ? std::string_view{} : raw.substr(space + 1);
    auto num = [&](const char* what) {
      auto v = parse_u64(rest);
      if (!v) bad_summary(std::string("bad ") + what);
      return *v;
    };
    if (key == "scenario") {
      s.scenario = std::string(rest);
    } else if (key == "rounds") {
      s.rounds = num("rounds");
    } else if (key == "snapshots") {
      s.snapshots = num("snapshots");
    } else if (key == "sim_time_us") {
      s.sim_time_us = num("sim_time_us");
    } else if (key == "wall_ms") {
      auto v = parse_double(rest);
      if (!v) bad_summary("bad wall_ms");
      s.wall_ms = *v;
    } else if (key == "expect") {
      const auto f = split_ws(rest);
      if (f.size() != 2) bad_summary("expected 'expect KIND VICTIM'");
      auto kind = parse_anomaly_kind(f[0]);
      auto victim = parse_u64(f[1]);
      if (!kind || !victim || *victim > UINT32_MAX) bad_summary("bad expectation");
      s.expectations.push_back({*kind, RankId{static_cast<std::uint32_t>(*victim)}});
    } else if (key == "report") {
      s.reports.push_back(AnomalyReport::parse_line(rest));
    } else {
      bad_summary("unknown line '" + std::string(raw) + "'");
    }
  }
  if (!header) bad_summary("missing header");
  return s;
}

std::vector<ReportRow> report_rows(const RunSummary& summary) {
  std::vector<ReportRow> rows;
  const auto match = match_expectations(summary);
  std::vector<bool> used(summary.reports.size(), false);
  for (int m : match) {
    if (m >= 0) used[static_cast<std::size_t>(m)] = true;
  }
  auto fill = [](ReportRow& row, const AnomalyReport& r) {
    row.reported = std::string(to_string(r.kind));
    row.detected = true;
    if (r.detected_us >= r.onset_us) {
      row.detection_latency_us = r.detected_us - r.onset_us;
    }
    if (r.located_us >= r.detected_us) {
      row.location_latency_us = r.located_us - r.detected_us;
    }
  };
  for (std::size_t e = 0; e < summary.expectations.size(); ++e) {
    const auto& exp = summary.expectations[e];
    ReportRow row;
    row.scenario = summary.scenario;
    row.expected = std::string(to_string(exp.kind));
    row.victim = std::to_string(exp.victim.value);
    row.reported = "-";
    int pick = match[e];
    if (pick < 0) {
      // Fall back to an unused report of any kind so misclassifications show.
      for (std::size_t r = 0; r < summary.reports.size(); ++r) {
        if (!used[r]) {
          pick = static_cast<int>(r);
          used[r] = true;
          break;
        }
      }
    }
    if (pick >= 0) {
      const auto& r = summary.reports[static_cast<std::size_t>(pick)];
      fill(row, r);
      row.located = r.kind == exp.kind;
      row.root_correct =
          std::find(r.roots.begin(), r.roots.end(), exp.victim) != r.roots.end();
    }
    rows.push_back(std::move(row));
  }
  for (std::size_t r = 0; r < summary.reports.size(); ++r) {
    if (used[r]) continue;
    ReportRow row;
    row.scenario = summary.scenario;
    row.expected = "-";
    row.victim = "-";
    fill(row, summary.reports[r]);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_report_table(const std::vector<ReportRow>& rows, bool csv,
                        std::ostream& out) {
  auto latency = [](const std::optional<std::uint64_t>& v) {
    return v ? std::to_string(*v) : std::string("-");
  };
  if (csv) {
    out << "scenario,expected,victim,reported,detected,located,root_correct,"
           "detection_latency_us,location_latency_us\n";
    auto yn = [](bool b) { return b ? "yes" : "no"; };
    for (const auto& r : rows) {
      out << r.scenario << ',' << r.expected << ',' << r.victim << ','
          << r.reported << ',' << yn(r.detected) << ',' << yn(r.located) << ','
          << yn(r.root_correct) << ',' << latency(r.detection_latency_us) << ','
          << latency(r.location_latency_us) << '\n';
    }
    return;
  }
  const std::vector<std::string> head = {
      "scenario", "expected", "victim", "reported", "detected",
      "located",  "root",     "detect_us", "locate_us"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    auto mark = [](bool b) { return std::string(b ? "✓" : "✗"); };
    cells.push_back({r.scenario, r.expected, r.victim, r.reported,
                     mark(r.detected), mark(r.located), mark(r.root_correct),
                     latency(r.detection_latency_us),
                     latency(r.location_latency_us)});
  }
  // Display width: count UTF-8 lead bytes only.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> w(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    w[c] = width(head[c]);
    for (const auto& row : cells) w[c] = std::max(w[c], width(row[c]));
  }
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << row[c];
      if (c + 1 < row.size()) out << std::string(w[c] - width(row[c]) + 2, ' ');
    }
    out << '\n';
  };
  line(head);
  for (const auto& row : cells) line(row);
}

}  // namespace colldiag
