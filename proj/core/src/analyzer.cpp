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

#include "colldiag/analyzer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "colldiag/error.hpp"
#include "colldiag/text.hpp"

namespace colldiag {

// ---------------------------------------------------------------------------
// Configuration

void AnalyzerConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidConfiguration, what);
  };
  if (!(alpha > 0 && alpha < beta && beta < 1)) {
    fail("need 0 < alpha < beta < 1");
  }
  if (!(theta_slow > 0)) fail("theta_slow must be > 0");
  if (slow_window_us == 0 || eval_tick_us == 0) {
    fail("slow_window_us and eval_tick_us must be positive");
  }
  if (hang_threshold_us <= slow_window_us) {
    fail("hang_threshold_us must exceed slow_window_us");
  }
  if (slow_window_us % eval_tick_us != 0) {
    fail("slow_window_us must be a multiple of eval_tick_us");
  }
  if (repetition_threshold == 0) fail("repetition_threshold must be positive");
  if (initial_baseline_us == 0) fail("initial_baseline_us must be positive");
  if (m_rounds_cap == 0) fail("m_rounds_cap must be positive");
}

void AnalyzerConfig::set(std::string_view key, std::string_view value) {
  auto as_u64 = [&]() {
    auto v = parse_u64(value);
    if (!v) {
      throw Error(ErrorCode::kInvalidConfiguration,
                  "bad value '" + std::string(value) + "' for " +
                      std::string(key));
    }
    return *v;
  };
  auto as_double = [&]() {
    auto v = parse_double(value);
    if (!v) {
      throw Error(ErrorCode::kInvalidConfiguration,
                  "bad value '" + std::string(value) + "' for " +
                      std::string(key));
    }
    return *v;
  };
  if (key == "hang_threshold_us") {
    hang_threshold_us = as_u64();
  } else if (key == "slow_window_us") {
    slow_window_us = as_u64();
  } else if (key == "theta_slow") {
    theta_slow = as_double();
  } else if (key == "alpha") {
    alpha = as_double();
  } else if (key == "beta") {
    beta = as_double();
  } else if (key == "repetition_threshold") {
    repetition_threshold = as_u64();
  } else if (key == "initial_baseline_us") {
    initial_baseline_us = as_u64();
  } else if (key == "m_rounds_cap") {
    m_rounds_cap = as_u64();
  } else if (key == "m_time_cap_us") {
    m_time_cap_us = as_u64();
  } else if (key == "barrier_size_bytes") {
    barrier_size_bytes = as_u64();
  } else if (key == "eval_tick_us") {
    eval_tick_us = as_u64();
  } else if (key == "auto_theta") {
    auto v = as_u64();
    if (v > 1) {
      throw Error(ErrorCode::kInvalidConfiguration, "auto_theta is 0 or 1");
    }
    auto_theta = v == 1;
  } else {
    throw Error(ErrorCode::kInvalidConfiguration,
                "unknown analyzer key '" + std::string(key) + "'");
  }
}

std::vector<std::pair<std::string, std::string>> AnalyzerConfig::to_pairs()
    const {
  return {
      {"hang_threshold_us", std::to_string(hang_threshold_us)},
      {"slow_window_us", std::to_string(slow_window_us)},
      {"theta_slow", format_double(theta_slow)},
      {"alpha", format_double(alpha)},
      {"beta", format_double(beta)},
      {"repetition_threshold", std::to_string(repetition_threshold)},
      {"initial_baseline_us", std::to_string(initial_baseline_us)},
      {"m_rounds_cap", std::to_string(m_rounds_cap)},
      {"m_time_cap_us", std::to_string(m_time_cap_us)},
      {"barrier_size_bytes", std::to_string(barrier_size_bytes)},
      {"eval_tick_us", std::to_string(eval_tick_us)},
      {"auto_theta", auto_theta ? "1" : "0"},
  };
}

// ---------------------------------------------------------------------------
// Names

std::string_view to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::kH1: return "H1";
    case AnomalyKind::kH2: return "H2";
    case AnomalyKind::kH3: return "H3";
    case AnomalyKind::kS1: return "S1_comp";
    case AnomalyKind::kS2: return "S2_comm";
    case AnomalyKind::kS3: return "S3_mixed";
  }
  return "?";
}

std::optional<AnomalyKind> parse_anomaly_kind(std::string_view text) {
  static constexpr std::pair<std::string_view, AnomalyKind> kNames[] = {
      {"H1", AnomalyKind::kH1},      {"H2", AnomalyKind::kH2},
      {"H3", AnomalyKind::kH3},      {"S1_comp", AnomalyKind::kS1},
      {"S2_comm", AnomalyKind::kS2}, {"S3_mixed", AnomalyKind::kS3},
      {"S1", AnomalyKind::kS1},      {"S2", AnomalyKind::kS2},
      {"S3", AnomalyKind::kS3},
  };
  for (const auto& [name, kind] : kNames) {
    if (name == text) return kind;
  }
  if (auto fault = parse_fault_kind(text)) return anomaly_for(*fault);
  return std::nullopt;
}

AnomalyKind anomaly_for(FaultKind fault) {
  switch (fault) {
    case FaultKind::kNotEnteredHang: return AnomalyKind::kH1;
    case FaultKind::kInconsistentHang: return AnomalyKind::kH2;
    case FaultKind::kHardwareFault: return AnomalyKind::kH3;
    case FaultKind::kCompSlow: return AnomalyKind::kS1;
    case FaultKind::kCommSlow: return AnomalyKind::kS2;
    case FaultKind::kMixedSlow: return AnomalyKind::kS3;
  }
  return AnomalyKind::kH1;
}

std::string_view to_string(BaselineSource source) {
  return source == BaselineSource::kLearned ? "learned" : "configured";
}

bool is_barrier(const OperationDescriptor& d, const AnalyzerConfig& config) {
  return d.op == OpName::kAllReduce &&
         d.data_size_bytes <= config.barrier_size_bytes;
}

std::vector<std::vector<RankId>> comparison_groups(const Communicator& comm) {
  if (comm.algorithm() == Algorithm::kRing) return {comm.members()};
  std::vector<std::vector<RankId>> groups;
  const auto& layers = comm.tree_layers();
  for (std::size_t p = 0; p < comm.size(); ++p) {
    if (layers[p] >= groups.size()) groups.resize(layers[p] + 1);
    groups[layers[p]].push_back(comm.members()[p]);
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Baseline, window selection and ratios

BaselineState BaselineState::configured(double initial_us,
                                        std::uint64_t m_cap) {
  BaselineState s;
  s.value_us = initial_us;
  s.m_cap = m_cap;
  return s;
}

BaselineState update_baseline(BaselineState state, std::uint64_t r,
                              double t_max) {
  if (r != state.rounds_seen + 1) {
    throw Error(ErrorCode::kOrdering,
                "baseline expected round " +
                    std::to_string(state.rounds_seen + 1) + ", got " +
                    std::to_string(r));
  }
  state.rounds_seen = r;
  if (state.source == BaselineSource::kLearned) return state;
  const std::uint64_t limit = state.m != 0 ? state.m : state.m_cap;
  if (r <= limit) {
    state.round_maxima.push_back(t_max);
    return state;
  }
  state.m = limit;
  double sum = 0;
  for (double v : state.round_maxima) sum += v;
  state.value_us = sum / static_cast<double>(state.round_maxima.size());
  state.source = BaselineSource::kLearned;
  return state;
}

std::optional<RoundExtent> select_extreme_round(
    std::span<const RoundExtent> window, bool by_max) {
  if (window.empty()) return std::nullopt;
  const RoundExtent* best = &window[0];
  auto key = [by_max](const RoundExtent& e) {
    return by_max ? e.t_max : e.t_max - e.t_min;
  };
  for (const auto& e : window) {
    const double k = key(e);
    const double kb = key(*best);
    if (k > kb || (k == kb && e.round < best->round)) best = &e;
  }
  return *best;
}

double slow_ratio(double t_max, double t_base) {
  if (!(t_base > 0)) {
    throw Error(ErrorCode::kInvalidBaseline, "T_base must be positive");
  }
  return (t_max - t_base) / t_base;
}

double p_ratio(double t_max, double t_min, double t_base) {
  if (!(t_max > t_base)) {
    throw Error(ErrorCode::kInvalidInvocation,
                "P is only defined when T_max > T_base");
  }
  const double p = (t_max - t_min) / (t_max - t_base);
  return std::clamp(p, 0.0, 1.0);
}

double estimate_theta(std::span<const double> history) {
  if (history.size() < 30) {
    throw Error(ErrorCode::kInsufficientData,
                "need at least 30 ratios, have " +
                    std::to_string(history.size()));
  }
  const double n = static_cast<double>(history.size());
  double mean = 0;
  for (double v : history) mean += v;
  mean /= n;
  double var = 0;
  for (double v : history) var += (v - mean) * (v - mean);
  var /= n;
  return std::clamp(mean + 3.0 * std::sqrt(var), 1.0, 10.0);
}

SlowDecision detect_slow(std::span<const RoundExtent> window,
                         const BaselineState& baseline, SlowCounter& counter,
                         const AnalyzerConfig& config, bool by_max) {
  SlowDecision d;
  d.extreme = select_extreme_round(window, by_max);
  if (!d.extreme) return d;
  d.ratio = slow_ratio(d.extreme->t_max, baseline.value_us);
  d.flagged = d.ratio > config.theta_slow;
  if (!d.flagged) {
    counter.detections = 0;
    counter.latched = false;
    return d;
  }
  ++counter.detections;
  if (counter.detections > config.repetition_threshold && !counter.latched) {
    d.alert = true;
    counter.latched = true;
  }
  return d;
}

std::optional<HangAlert> detect_hang(CommunicatorId comm,
                                     std::span<const InFlightRound> in_flight,
                                     std::uint64_t now_us,
                                     const AnalyzerConfig& config) {
  std::optional<std::uint64_t> round;
  for (const auto& f : in_flight) {
    if (is_barrier(f.descriptor, config) || now_us < f.enter_time_us) continue;
    if (now_us - f.enter_time_us <= config.hang_threshold_us) continue;
    if (!round || f.round < *round) round = f.round;
  }
  if (!round) return std::nullopt;
  HangAlert alert;
  alert.round = *round;
  alert.trace_id = make_trace_id(comm, *round, 0);
  alert.onset_us = UINT64_MAX;
  for (const auto& f : in_flight) {
    if (f.round == *round) {
      alert.onset_us = std::min(alert.onset_us, f.enter_time_us);
    }
  }
  return alert;
}

Rational combined_rate(const Rational& send, const Rational& recv) {
  if (send.is_zero() || recv.is_zero()) return Rational();
  // 1/(b/a + d/c) = ac / (bc + ad)
  const unsigned __int128 num =
      static_cast<unsigned __int128>(send.num()) * recv.num();
  const unsigned __int128 den =
      static_cast<unsigned __int128>(send.den()) * recv.num() +
      static_cast<unsigned __int128>(recv.den()) * send.num();
  unsigned __int128 a = num;
  unsigned __int128 b = den;
  while (b != 0) {
    const unsigned __int128 t = a % b;
    a = b;
    b = t;
  }
  return Rational(static_cast<std::uint64_t>(num / a),
                  static_cast<std::uint64_t>(den / a));
}

// ---------------------------------------------------------------------------
// Location

namespace {

RankEvidence evidence_of(const MemberState& m) {
  RankEvidence e;
  e.rank = m.rank;
  e.last_round = m.last_round;
  if (m.current) {
    e.send_total = m.current->total_send();
    e.recv_total = m.current->total_recv();
    e.send_rate = m.current->send_rate;
    e.recv_rate = m.current->recv_rate;
    e.duration_us = m.current->duration_us;
    e.descriptor = m.current->descriptor;
    e.completed = m.current->reason == SnapshotReason::kCompletion;
  }
  return e;
}

RankEvidence evidence_of(const MetricSnapshot& s) {
  RankEvidence e;
  e.rank = s.rank;
  e.last_round = s.round;
  e.send_total = s.total_send();
  e.recv_total = s.total_recv();
  e.send_rate = s.send_rate;
  e.recv_rate = s.recv_rate;
  e.duration_us = s.duration_us;
  e.descriptor = s.descriptor;
  e.completed = s.reason == SnapshotReason::kCompletion;
  return e;
}

// Ranks of `members` (indices) whose count is minimal.
std::vector<RankId> min_count_ranks(std::span<const MemberState> members,
                                    const std::vector<std::size_t>& idx) {
  std::vector<RankId> out;
  std::uint64_t best = UINT64_MAX;
  for (std::size_t i : idx) {
    const std::uint64_t c = members[i].current->total_count();
    if (c < best) {
      best = c;
      out.clear();
    }
    if (c == best) out.push_back(members[i].rank);
  }
  return out;
}

std::vector<RankId> sorted_union(std::vector<RankId> a,
                                 const std::vector<RankId>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

}  // namespace

AnomalyReport locate_hang(CommunicatorId comm, std::uint64_t round,
                          std::span<const MemberState> members,
                          Algorithm algorithm) {
  const bool any_snapshot = std::any_of(
      members.begin(), members.end(),
      [](const MemberState& m) { return m.current.has_value(); });
  if (!any_snapshot) {
    throw Error(ErrorCode::kInsufficientEvidence,
                "no snapshot of round " + std::to_string(round));
  }
  AnomalyReport report;
  report.comm = comm;
  report.round = round;
  for (const auto& m : members) report.evidence.push_back(evidence_of(m));

  for (const auto& m : members) {
    if (!m.last_round || *m.last_round < round) report.roots.push_back(m.rank);
  }
  if (!report.roots.empty()) {
    report.kind = AnomalyKind::kH1;
    return report;
  }

  // The Operation Type Set most members run; ties go to the smallest tuple.
  std::map<OperationDescriptor, std::size_t> votes;
  for (const auto& m : members) {
    if (m.current) ++votes[m.current->descriptor];
  }
  const OperationDescriptor mode =
      std::max_element(votes.begin(), votes.end(),
                       [](const auto& a, const auto& b) {
                         return a.second < b.second;
                       })
          ->first;
  for (const auto& m : members) {
    if (!m.current) continue;
    if (m.current->reason == SnapshotReason::kCompletion ||
        m.current->descriptor != mode) {
      report.roots.push_back(m.rank);
    }
  }
  if (!report.roots.empty()) {
    report.kind = AnomalyKind::kH2;
    return report;
  }

  report.kind = AnomalyKind::kH3;
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].current) all.push_back(i);
  }
  if (algorithm == Algorithm::kTree) {
    // Cross-layer counts differ by design, so compare within the deepest
    // layer whose members disagree.
    std::map<std::uint32_t, std::vector<std::size_t>, std::greater<>> layers;
    for (std::size_t i : all) layers[members[i].layer].push_back(i);
    for (const auto& [layer, idx] : layers) {
      const std::uint64_t first = members[idx.front()].current->total_count();
      const bool uneven = std::any_of(idx.begin(), idx.end(), [&](auto i) {
        return members[i].current->total_count() != first;
      });
      if (uneven) {
        report.roots = min_count_ranks(members, idx);
        return report;
      }
    }
  }
  report.roots = min_count_ranks(members, all);
  return report;
}

AnomalyReport locate_slow(std::span<const MetricSnapshot> snapshots,
                          const BaselineState& baseline,
                          const AnalyzerConfig& config) {
  if (snapshots.empty()) {
    throw Error(ErrorCode::kInsufficientEvidence, "no snapshots to locate");
  }
  for (const auto& s : snapshots) {
    if (!s.complete_time_us) {
      throw Error(ErrorCode::kInsufficientEvidence,
                  "rank " + std::to_string(s.rank.value) +
                      " has not completed the round");
    }
  }
  AnomalyReport report;
  report.comm = snapshots.front().comm();
  report.round = snapshots.front().round;
  report.baseline_source = baseline.source;
  report.t_base = baseline.value_us;
  std::uint64_t t_max = 0;
  std::uint64_t t_min = UINT64_MAX;
  for (const auto& s : snapshots) {
    t_max = std::max(t_max, s.duration_us);
    t_min = std::min(t_min, s.duration_us);
    report.evidence.push_back(evidence_of(s));
  }
  report.t_max = static_cast<double>(t_max);
  report.t_min = static_cast<double>(t_min);
  report.r = slow_ratio(report.t_max, report.t_base);
  report.p = p_ratio(report.t_max, report.t_min, report.t_base);

  for (const auto& s : snapshots) {
    if (s.duration_us == t_min) report.duration_candidates.push_back(s.rank);
  }
  Rational slowest = combined_rate(snapshots.front().send_rate,
                                   snapshots.front().recv_rate);
  for (const auto& s : snapshots) {
    slowest = std::min(slowest, combined_rate(s.send_rate, s.recv_rate));
  }
  for (const auto& s : snapshots) {
    if (combined_rate(s.send_rate, s.recv_rate) == slowest) {
      report.rate_candidates.push_back(s.rank);
    }
  }
  if (report.p > config.beta) {
    report.kind = AnomalyKind::kS1;
    report.roots = report.duration_candidates;
  } else if (report.p < config.alpha) {
    report.kind = AnomalyKind::kS2;
    report.roots = report.rate_candidates;
  } else {
    report.kind = AnomalyKind::kS3;
    report.roots =
        sorted_union(report.duration_candidates, report.rate_candidates);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report text

namespace {

std::string join_ranks(const std::vector<RankId>& ranks) {
  std::string out;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ranks[i].value);
  }
  return out.empty() ? "-" : out;
}

std::vector<RankId> parse_ranks(std::string_view text) {
  std::vector<RankId> out;
  if (text == "-") return out;
  for (auto part : split(text, ',')) {
    auto v = parse_u64(part);
    if (!v || *v > UINT32_MAX) {
      throw Error(ErrorCode::kMalformedRecord,
                  "bad rank '" + std::string(part) + "'");
    }
    out.push_back(RankId{static_cast<std::uint32_t>(*v)});
  }
  return out;
}

}  // namespace

std::string AnomalyReport::to_line() const {
  std::ostringstream os;
  os << "kind=" << to_string(kind) << " comm=" << comm.value
     << " round=" << round << " roots=" << join_ranks(roots);
  if (is_hang()) {
    os << " R=- P=- T_base=- T_max=- T_min=- baseline=-";
  } else {
    os << " R=" << format_double(r) << " P=" << format_double(p)
       << " T_base=" << format_double(t_base)
       << " T_max=" << format_double(t_max)
       << " T_min=" << format_double(t_min)
       << " baseline=" << to_string(baseline_source)
       << " min_duration=" << join_ranks(duration_candidates)
       << " min_rate=" << join_ranks(rate_candidates);
  }
  os << " onset_us=" << onset_us << " detected_us=" << detected_us
     << " located_us=" << located_us;
  return os.str();
}

AnomalyReport AnomalyReport::parse_line(std::string_view line) {
  AnomalyReport r;
  bool have_kind = false;
  auto bad = [&](std::string_view why) {
    throw Error(ErrorCode::kMalformedRecord,
                std::string(why) + " in report '" + std::string(line) + "'");
  };
  auto u64 = [&](std::string_view v) {
    auto x = parse_u64(v);
    if (!x) bad("bad integer");
    return *x;
  };
  auto dbl = [&](std::string_view v) {
    if (v == "-") return 0.0;
    auto x = parse_double(v);
    if (!x) bad("bad number");
    return *x;
  };
  for (auto token : split_ws(line)) {
    const auto eq = token.find('=');
    if (eq == std::string_view::npos) bad("token without '='");
    const auto key = token.substr(0, eq);
    const auto value = token.substr(eq + 1);
    if (key == "kind") {
      auto k = parse_anomaly_kind(value);
      if (!k) bad("unknown kind");
      r.kind = *k;
      have_kind = true;
    } else if (key == "comm") {
      r.comm = CommunicatorId{u64(value)};
    } else if (key == "round") {
      r.round = u64(value);
    } else if (key == "roots") {
      r.roots = parse_ranks(value);
    } else if (key == "R") {
      r.r = dbl(value);
    } else if (key == "P") {
      r.p = dbl(value);
    } else if (key == "T_base") {
      r.t_base = dbl(value);
    } else if (key == "T_max") {
      r.t_max = dbl(value);
    } else if (key == "T_min") {
      r.t_min = dbl(value);
    } else if (key == "baseline") {
      r.baseline_source = value == "learned" ? BaselineSource::kLearned
                                             : BaselineSource::kConfigured;
    } else if (key == "min_duration") {
      r.duration_candidates = parse_ranks(value);
    } else if (key == "min_rate") {
      r.rate_candidates = parse_ranks(value);
    } else if (key == "onset_us") {
      r.onset_us = u64(value);
    } else if (key == "detected_us") {
      r.detected_us = u64(value);
    } else if (key == "located_us") {
      r.located_us = u64(value);
    }
  }
  if (!have_kind) bad("missing kind");
  return r;
}

// ---------------------------------------------------------------------------
// Analyzer

Analyzer::Analyzer(AnalyzerConfig config)
    : config_(config), theta_(config.theta_slow) {
  config_.validate();
}

void Analyzer::declare_communicator(const CommunicatorDecl& decl) {
  Communicator comm(decl.id, decl.members, decl.algorithm);
  CommState cs{std::move(comm)};
  cs.counter.comm = decl.id;
  const std::size_t n = cs.comm.size();
  cs.group_of.assign(n, 0);
  cs.last_round.assign(n, std::nullopt);
  if (decl.algorithm == Algorithm::kRing) {
    cs.groups.emplace_back(n);
    std::iota(cs.groups[0].begin(), cs.groups[0].end(), 0);
  } else {
    for (std::size_t p = 0; p < n; ++p) {
      const auto layer = cs.comm.tree_layers()[p];
      if (layer >= cs.groups.size()) cs.groups.resize(layer + 1);
      cs.groups[layer].push_back(p);
      cs.group_of[p] = layer;
    }
  }
  comms_.insert_or_assign(decl.id.value, std::move(cs));
}

std::vector<std::vector<RankId>> Analyzer::comparison_groups(
    CommunicatorId id) const {
  auto it = comms_.find(id.value);
  if (it == comms_.end()) {
    throw Error(ErrorCode::kUnknownCommunicator,
                "communicator " + std::to_string(id.value));
  }
  return colldiag::comparison_groups(it->second.comm);
}

const BaselineState* Analyzer::baseline(CommunicatorId id, std::size_t group,
                                        const OperationDescriptor& key) const {
  auto it = comms_.find(id.value);
  if (it == comms_.end()) return nullptr;
  auto b = it->second.baselines.find({group, key});
  return b == it->second.baselines.end() ? nullptr : &b->second;
}

void Analyzer::ingest(const MetricSnapshot& s) {
  auto it = comms_.find(s.comm().value);
  if (it == comms_.end()) {
    ++skipped_;
    return;
  }
  CommState& cs = it->second;
  const auto pos = cs.comm.position_of(s.rank);
  if (!pos) {
    ++skipped_;
    return;
  }
  auto& last = cs.last_round[*pos];
  if (!last || s.round > *last) last = s.round;
  if (!cs.first_entry || s.enter_time_us < *cs.first_entry) {
    cs.first_entry = s.enter_time_us;
  }
  if (cs.finished.count(s.round) != 0) return;
  RoundRec& rec = cs.rounds[s.round];
  if (rec.latest.empty()) rec.latest.resize(cs.comm.size());
  auto& slot = rec.latest[*pos];
  const bool was_complete =
      slot && slot->reason == SnapshotReason::kCompletion;
  if (was_complete && s.reason != SnapshotReason::kCompletion) return;
  slot = s;
  if (!was_complete && s.reason == SnapshotReason::kCompletion) {
    ++rec.completed;
    rec.max_completion = std::max(rec.max_completion, *s.complete_time_us);
    if (rec.completed == cs.comm.size()) {
      finish_round(cs, s.round, rec);
      cs.rounds.erase(s.round);
    }
  }
}

void Analyzer::finish_round(CommState& cs, std::uint64_t round,
                            RoundRec& rec) {
  cs.finished.insert(round);
  if (is_barrier(rec.latest.front()->descriptor, config_)) return;
  const std::uint64_t window = rec.max_completion / config_.slow_window_us;
  for (std::size_t g = 0; g < cs.groups.size(); ++g) {
    WindowItem item;
    item.group = g;
    item.key = rec.latest[cs.groups[g].front()]->descriptor;
    std::uint64_t t_max = 0;
    std::uint64_t t_min = UINT64_MAX;
    for (std::size_t p : cs.groups[g]) {
      const MetricSnapshot& s = *rec.latest[p];
      t_max = std::max(t_max, s.duration_us);
      t_min = std::min(t_min, s.duration_us);
      item.snapshots.push_back(s);
    }
    item.extent = RoundExtent{round, static_cast<double>(t_max),
                              static_cast<double>(t_min)};
    auto [bit, inserted] = cs.baselines.try_emplace(
        {g, item.key},
        BaselineState::configured(static_cast<double>(config_.initial_baseline_us),
                                  config_.m_rounds_cap));
    BaselineState& b = bit->second;
    if (b.m == 0 && b.source == BaselineSource::kConfigured &&
        rec.max_completion > *cs.first_entry + config_.m_time_cap_us) {
      b.m = std::max<std::uint64_t>(1, b.round_maxima.size());
    }
    const std::uint64_t r = b.rounds_seen + 1;
    b = update_baseline(std::move(b), r, item.extent.t_max);
    cs.windows[window].push_back(std::move(item));
  }
}

std::optional<AnomalyReport> Analyzer::check_hang(CommState& cs,
                                                  std::uint64_t now) {
  // One hang per communicator until the stuck round resolves.
  for (auto r : cs.hang_latched) {
    if (cs.finished.count(r) == 0) return std::nullopt;
  }
  std::vector<InFlightRound> in_flight;
  for (const auto& [round, rec] : cs.rounds) {
    for (const auto& s : rec.latest) {
      if (s && s->reason == SnapshotReason::kHeartbeat) {
        in_flight.push_back({s->rank, round, s->descriptor, s->enter_time_us});
      }
    }
  }
  auto alert = detect_hang(cs.comm.id(), in_flight, now, config_);
  if (!alert) return std::nullopt;
  cs.hang_latched.insert(alert->round);
  const RoundRec& rec = cs.rounds.at(alert->round);
  std::vector<MemberState> members(cs.comm.size());
  std::uint64_t onset = alert->onset_us;
  for (std::size_t p = 0; p < cs.comm.size(); ++p) {
    members[p].rank = cs.comm.members()[p];
    members[p].layer = cs.group_of[p];
    members[p].last_round = cs.last_round[p];
    members[p].current = rec.latest[p];
    if (rec.latest[p]) onset = std::min(onset, rec.latest[p]->enter_time_us);
  }
  AnomalyReport report =
      locate_hang(cs.comm.id(), alert->round, members, cs.comm.algorithm());
  report.onset_us = onset;
  report.detected_us = now;
  report.located_us = now;
  return report;
}

std::optional<AnomalyReport> Analyzer::check_slow(CommState& cs,
                                                  std::uint64_t now) {
  const std::uint64_t w = now / config_.slow_window_us;
  std::vector<WindowItem> items;
  while (!cs.windows.empty() && cs.windows.begin()->first < w) {
    auto node = cs.windows.extract(cs.windows.begin());
    for (auto& item : node.mapped()) items.push_back(std::move(item));
  }
  if (items.empty()) return std::nullopt;

  struct Candidate {
    std::size_t group;
    OperationDescriptor key;
    RoundExtent extreme;
    double ratio;
  };
  std::map<std::pair<std::size_t, OperationDescriptor>,
           std::vector<const WindowItem*>>
      by_key;
  for (const auto& item : items) by_key[{item.group, item.key}].push_back(&item);

  std::vector<Candidate> flagged;
  std::vector<double> ratios;
  for (const auto& [gk, list] : by_key) {
    std::vector<RoundExtent> extents;
    for (const auto* item : list) extents.push_back(item->extent);
    const bool singleton = cs.groups[gk.first].size() == 1;
    const auto extreme = select_extreme_round(extents, singleton);
    const BaselineState& b = cs.baselines.at(gk);
    const double ratio = slow_ratio(extreme->t_max, b.value_us);
    ratios.push_back(ratio);
    if (ratio > theta_) flagged.push_back({gk.first, gk.second, *extreme, ratio});
  }

  if (flagged.empty()) {
    cs.counter.detections = 0;
    cs.counter.latched = false;
    if (config_.auto_theta) {
      clean_ratios_.insert(clean_ratios_.end(), ratios.begin(), ratios.end());
      if (clean_ratios_.size() >= 30) theta_ = estimate_theta(clean_ratios_);
    }
    return std::nullopt;
  }
  if (++cs.counter.detections == 1) cs.first_flag_us = now;
  if (cs.counter.detections <= config_.repetition_threshold ||
      cs.counter.latched) {
    return std::nullopt;
  }
  cs.counter.latched = true;

  // Widest spread first, then largest ratio, then the deeper layer.
  const Candidate& pick = *std::max_element(
      flagged.begin(), flagged.end(), [](const Candidate& a, const Candidate& b) {
        const double ra = a.extreme.t_max - a.extreme.t_min;
        const double rb = b.extreme.t_max - b.extreme.t_min;
        if (ra != rb) return ra < rb;
        if (a.ratio != b.ratio) return a.ratio < b.ratio;
        return a.group < b.group;
      });
  const WindowItem* chosen = nullptr;
  for (const auto* item : by_key.at({pick.group, pick.key})) {
    if (item->extent.round == pick.extreme.round) chosen = item;
  }
  AnomalyReport report = locate_slow(
      chosen->snapshots, cs.baselines.at({pick.group, pick.key}), config_);
  report.onset_us = cs.first_flag_us;
  report.detected_us = now;
  report.located_us = now;
  return report;
}

std::vector<AnomalyReport> Analyzer::tick(std::uint64_t now_us) {
  if (now_us % config_.eval_tick_us != 0) {
    throw Error(ErrorCode::kInvalidInvocation,
                "tick at " + std::to_string(now_us) +
                    " is off the evaluation grid");
  }
  if (now_us < last_tick_) {
    throw Error(ErrorCode::kOrdering, "ticks must not go backwards");
  }
  last_tick_ = now_us;
  std::vector<AnomalyReport> out;
  for (auto& [id, cs] : comms_) {
    if (auto r = check_hang(cs, now_us)) out.push_back(std::move(*r));
    if (now_us % config_.slow_window_us == 0) {
      if (auto r = check_slow(cs, now_us)) out.push_back(std::move(*r));
    }
  }
  reports_.insert(reports_.end(), out.begin(), out.end());
  return out;
}

std::vector<AnomalyReport> diagnose(std::span<const StreamEntry> stream,
                                    std::uint64_t end_us,
                                    const AnalyzerConfig& config) {
  Analyzer analyzer(config);
  std::uint64_t next_tick = config.eval_tick_us;
  for (const auto& entry : stream) {
    if (const auto* decl = std::get_if<CommunicatorDecl>(&entry.item)) {
      analyzer.declare_communicator(*decl);
      continue;
    }
    while (next_tick < entry.time_us) {
      analyzer.tick(next_tick);
      next_tick += config.eval_tick_us;
    }
    analyzer.ingest(std::get<MetricSnapshot>(entry.item));
  }
  while (next_tick <= end_us) {
    analyzer.tick(next_tick);
    next_tick += config.eval_tick_us;
  }
  return analyzer.reports();
}

}  // namespace colldiag
