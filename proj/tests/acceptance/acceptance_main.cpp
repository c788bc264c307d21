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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "colldiag/analyzer.hpp"
#include "colldiag/collector.hpp"
#include "colldiag/collective_sim.hpp"
#include "colldiag/error.hpp"
#include "colldiag/probe.hpp"
#include "colldiag/scenario.hpp"
#include "colldiag/trace_model.hpp"
#include "support/oracles.hpp"

namespace {

using namespace colldiag;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kSecond = 1'000'000;
constexpr std::uint64_t kSeeds = 50;

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void print(int n, const Verdict& v) {
  std::cout << "criterion " << n << ": " << (v.pass ? "PASS" : "FAIL") << "  "
            << v.detail << std::endl;
  if (!v.pass) ++failures;
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << std::fixed << v;
  return os.str();
}

std::vector<std::string> lines_of(const std::vector<AnomalyReport>& reports) {
  std::vector<std::string> out;
  for (const auto& r : reports) out.push_back(r.to_line());
  return out;
}

// --- 1 and 5: randomized single-fault runs ----------------------------------

struct FaultRun {
  AnomalyKind kind;
  std::uint64_t seed;
  std::uint32_t victim;
  std::uint64_t trigger;
  RunResult result;
};

std::string single_fault_script(AnomalyKind kind, std::uint64_t seed,
                                std::uint32_t victim, std::uint64_t trigger) {
  std::ostringstream s;
  s << "cluster 16 1 " << seed << " bw=3500 jitter=500\n"
    << "comm 1 ring 0-15\n";
  const bool hang = kind <= AnomalyKind::kH3;
  switch (kind) {
    case AnomalyKind::kH1: s << "fault NotEnteredHang "; break;
    case AnomalyKind::kH2: s << "fault InconsistentHang "; break;
    case AnomalyKind::kH3: s << "fault HardwareFault "; break;
    case AnomalyKind::kS1: s << "fault CompSlow "; break;
    case AnomalyKind::kS2: s << "fault CommSlow "; break;
    case AnomalyKind::kS3: s << "fault MixedSlow "; break;
  }
  s << victim << ' ' << trigger;
  switch (kind) {
    case AnomalyKind::kH3: s << " freeze=0.5"; break;
    case AnomalyKind::kS1: s << " delay_us=200000"; break;
    case AnomalyKind::kS2: s << " factor=0.2"; break;
    case AnomalyKind::kS3: s << " delay_us=140000 factor=0.2"; break;
    default: break;
  }
  s << "\nrepeat " << (hang ? trigger + 1 : trigger + 50) << "\n"
    << "  round 1 AllReduce Ring Simple 67108864\n"
    << "  advance 5000000\n"
    << "end\n";
  if (hang) s << "advance 320000000\n";
  s << "expect " << to_string(kind) << ' ' << victim << '\n';
  return s.str();
}

std::vector<FaultRun> run_fault_matrix(double& wall_s) {
  std::vector<FaultRun> runs;
  const auto start = Clock::now();
  for (auto kind : {AnomalyKind::kH1, AnomalyKind::kH2, AnomalyKind::kH3,
                    AnomalyKind::kS1, AnomalyKind::kS2, AnomalyKind::kS3}) {
    for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
      std::mt19937_64 rng(seed * 7919 + static_cast<std::uint64_t>(kind));
      const auto victim = static_cast<std::uint32_t>(rng() % 16);
      // Slow faults start after the baseline has been learned (two minutes
      // of five-second rounds).
      const std::uint64_t trigger =
          kind <= AnomalyKind::kH3 ? 10 + rng() % 20 : 26 + rng() % 15;
      const Scenario sc = parse_scenario(
          single_fault_script(kind, seed, victim, trigger),
          std::string(to_string(kind)) + "_" + std::to_string(seed));
      runs.push_back({kind, seed, victim, trigger, run_scenario(sc)});
    }
  }
  wall_s = std::chrono::duration<double>(Clock::now() - start).count();
  return runs;
}

Verdict criterion1(const std::vector<FaultRun>& runs, double wall_s) {
  Verdict v;
  std::map<AnomalyKind, int> ok;
  std::string first_bad;
  for (const auto& run : runs) {
    const auto& reports = run.result.summary.reports;
    const bool good =
        reports.size() == 1 && reports[0].kind == run.kind &&
        std::count(reports[0].roots.begin(), reports[0].roots.end(),
                   RankId{run.victim}) == 1;
    if (good) {
      ++ok[run.kind];
    } else if (first_bad.empty()) {
      first_bad = " first miss: " + std::string(to_string(run.kind)) + " seed " +
                  std::to_string(run.seed) + " victim " +
                  std::to_string(run.victim) + " -> " +
                  (reports.empty() ? std::string("no report")
                                   : reports[0].to_line());
    }
  }
  std::ostringstream d;
  for (const auto& [kind, n] : ok) d << to_string(kind) << ' ' << n << '/' << kSeeds << ' ';
  int total = 0;
  for (const auto& [kind, n] : ok) total += n;
  v.pass = total == static_cast<int>(6 * kSeeds) && wall_s < 60.0;
  d << "wall " << fmt(wall_s, 2) << " s (< 60 s)" << first_bad;
  v.detail = d.str();
  return v;
}

Verdict criterion5(const std::vector<FaultRun>& runs, const AnalyzerConfig& cfg) {
  Verdict v;
  std::uint64_t hang_min = UINT64_MAX, hang_max = 0;
  std::uint64_t slow_max = 0, slow_from_injection = 0;
  std::size_t counted = 0;
  const std::uint64_t hang_bound = cfg.hang_threshold_us + cfg.eval_tick_us;
  const std::uint64_t slow_bound =
      cfg.repetition_threshold * cfg.slow_window_us + cfg.eval_tick_us;
  for (const auto& run : runs) {
    const auto& reports = run.result.summary.reports;
    if (reports.size() != 1) continue;
    const AnomalyReport& r = reports[0];
    ++counted;
    if (r.is_hang()) {
      const auto lat = r.detected_us - r.onset_us;
      hang_min = std::min(hang_min, lat);
      hang_max = std::max(hang_max, lat);
      continue;
    }
    // Close of the detection window holding the first slowed round.
    std::uint64_t first_done = 0;
    std::uint64_t injected = UINT64_MAX;
    for (const auto& rec : run.result.snapshots) {
      const auto& s = rec.snapshot;
      if (s.round != run.trigger || !s.complete_time_us) continue;
      first_done = std::max(first_done, *s.complete_time_us);
      injected = std::min(injected, s.enter_time_us);
    }
    const std::uint64_t window_close =
        (first_done / cfg.slow_window_us + 1) * cfg.slow_window_us;
    slow_max = std::max(slow_max, r.detected_us - window_close);
    slow_from_injection = std::max(slow_from_injection, r.detected_us - injected);
  }
  v.pass = counted == runs.size() && hang_min > cfg.hang_threshold_us &&
           hang_max <= hang_bound && slow_max <= slow_bound;
  v.detail = "hang latency " + fmt(hang_min / 1e6, 6) + ".." +
             fmt(hang_max / 1e6, 6) + " s (bound " + fmt(hang_bound / 1e6, 0) +
             " s); slow latency after first slowed window <= " +
             fmt(slow_max / 1e6, 1) + " s (bound " + fmt(slow_bound / 1e6, 0) +
             " s); slow latency from injection <= " +
             fmt(slow_from_injection / 1e6, 1) + " s";
  return v;
}

// --- 2: fault-free mixture ----------------------------------------------------

Verdict criterion2() {
  std::size_t rounds = 0, reports = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::ostringstream s;
    s << "cluster 16 2 " << seed << " bw=3500 jitter=500\n"
      << "comm 1 ring 0-7\ncomm 2 tree 8-15\n"
      << "repeat 100\n"
      << "  round 1 AllReduce Ring Simple 16777216\n"
      << "  round 2 AllReduce Tree Simple 16777216\n"
      << "  advance 1000000\n"
      << "  round 1 AllReduce Ring LL 4\n"
      << "  round 2 AllReduce Tree LL 4\n"
      << "  advance 1000000\n"
      << "  round 1 AllGather Ring LL128 1048576\n"
      << "  round 2 Broadcast Tree LL128 1048576\n"
      << "  advance 1000000\n"
      << "  round 1 ReduceScatter Ring LL 65536\n"
      << "  round 2 AllReduce Tree LL128 4096\n"
      << "  advance 1000000\n"
      << "  round 1 AllReduce Ring LL128 4\n"
      << "  round 2 AllReduce Tree Simple 4\n"
      << "  advance 1000000\n"
      << "end\n";
    const RunResult r = run_scenario(parse_scenario(s.str(), "mixed"));
    rounds += r.summary.rounds;
    reports += r.summary.reports.size();
  }
  Verdict v;
  v.pass = reports == 0 && rounds >= 1000;
  v.detail = std::to_string(rounds) + " fault-free rounds, " +
             std::to_string(reports) + " reports";
  return v;
}

// --- 3: rate arithmetic -------------------------------------------------------

Verdict criterion3() {
  // Two ranks moving the same 14 units over a 7 ms round, sampled every
  // 1 ms: the healthy link lands its units in two bursts, the slow one
  // trickles two units per millisecond.
  ProbeConfig cfg;
  cfg.sample_interval_us = 1'000;
  ProbingFrame normal(1), slow(1);
  Probe pn(RankId{0}, &normal, cfg), ps(RankId{1}, &slow, cfg);
  const CommunicatorId comm{1};
  const OperationDescriptor d{OpName::kAllReduce, Algorithm::kRing,
                              Protocol::kSimple, 1 << 20};
  const auto id = make_trace_id(comm, 0);
  const auto hn = normal.begin_round(id);
  const auto hs = slow.begin_round(id);
  pn.on_post(PostRecord{RankId{0}, comm, 0, id, hn, d, 0});
  ps.on_post(PostRecord{RankId{1}, comm, 0, id, hs, d, 0});
  pn.on_enter(comm, 0, 0);
  ps.on_enter(comm, 0, 0);
  for (std::uint64_t ms = 0; ms < 7; ++ms) {
    if (ms == 0 || ms == 1) normal.record(hn, 0, Direction::kSend, 7);
    slow.record(hs, 0, Direction::kSend, 2);
    pn.sample();
    ps.sample();
  }
  const auto a = pn.emit_snapshot(comm, 0, SnapshotReason::kHeartbeat, 7'000);
  const auto b = ps.emit_snapshot(comm, 0, SnapshotReason::kHeartbeat, 7'000);
  Verdict v;
  v.pass = a.send_rate == Rational(1, 2) && b.send_rate == Rational(1, 7) &&
           a.channels[0].send == b.channels[0].send;
  v.detail = "normal SendRate " + a.send_rate.to_string() + ", slow SendRate " +
             b.send_rate.to_string();
  return v;
}

// --- 4: equations against oracles --------------------------------------------

Verdict criterion4() {
  std::mt19937_64 rng(20260101);
  std::uniform_real_distribution<double> dur(1.0, 1e9);
  double worst = 0;
  std::size_t mismatches = 0;
  constexpr int kInputs = 10'000;
  for (int i = 0; i < kInputs; ++i) {
    // update_baseline over a random prefix.
    const double init = dur(rng);
    const std::size_t m = 1 + rng() % 30;
    BaselineState s = BaselineState::configured(init, 100);
    s.m = m;
    std::vector<double> seen;
    const std::size_t n = 1 + rng() % 40;
    for (std::size_t r = 1; r <= n; ++r) {
      seen.push_back(dur(rng));
      s = update_baseline(s, r, seen.back());
    }
    worst = std::max(worst, oracle::rel_err(s.value_us, oracle::baseline(init, m, seen)));

    // select_extreme_round with ties from coarse values.
    std::vector<RoundExtent> w;
    std::vector<oracle::Extent> o;
    const std::size_t k = 1 + rng() % 16;
    for (std::size_t j = 0; j < k; ++j) {
      const double mx = static_cast<double>(rng() % 50);
      const double mn = mx - static_cast<double>(rng() % 10);
      const std::uint64_t round = rng() % 1000;
      w.push_back({round, mx, mn});
      o.push_back({round, mx, mn});
    }
    const bool by_max = rng() % 4 == 0;
    const auto got = select_extreme_round(w, by_max);
    const auto want = oracle::extreme(o, by_max);
    if (!got || !want || got->round != o[*want].round ||
        got->t_max != o[*want].t_max || got->t_min != o[*want].t_min) {
      ++mismatches;
    }

    // R and P.
    const double base = dur(rng);
    const double mx = base + dur(rng);
    const double mn = std::uniform_real_distribution<double>(base * 0.9, mx)(rng);
    worst = std::max(worst, oracle::rel_err(slow_ratio(mx, base), oracle::slow_ratio(mx, base)));
    worst = std::max(worst, oracle::rel_err(p_ratio(mx, mn, base), oracle::p_ratio(mx, mn, base)));
  }
  Verdict v;
  v.pass = worst <= 1e-12 && mismatches == 0;
  v.detail = std::to_string(kInputs) + " inputs per function, max relative error " +
             [&] {
               std::ostringstream os;
               os << worst;
               return os.str();
             }() +
             ", extreme-round mismatches " + std::to_string(mismatches);
  return v;
}

// --- 6: frame layout ----------------------------------------------------------

std::uint64_t le64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

Verdict criterion6() {
  Verdict v;
  ProbingFrame f(8);
  for (std::uint64_t r = 0; r < 11; ++r) f.begin_round(make_trace_id(CommunicatorId{0xABCD}, r, 5));
  f.record(BlockHandle{2}, 6, Direction::kSend, 41);
  f.record(BlockHandle{2}, 6, Direction::kRecv, 43);
  const auto bytes = encode_frame(f);
  const std::uint8_t* b2 = bytes.data() + 32 + 144 * 2;
  const bool layout = bytes.size() == 1184 && le64(bytes.data()) == 11 &&
                      le64(bytes.data() + 8) == 1 && le64(bytes.data() + 16) == 2 &&
                      le64(bytes.data() + 24) == 8 && le64(b2) == 0xABCD &&
                      (le64(b2 + 8) & 0xFFFFFFFFu) == 10 && (le64(b2 + 8) >> 32) == 5 &&
                      le64(b2 + 16 + 16 * 6) == 41 && le64(b2 + 24 + 16 * 6) == 43;

  std::mt19937_64 rng(6);
  std::size_t bad = 0;
  constexpr int kFrames = 10'000;
  for (int i = 0; i < kFrames; ++i) {
    std::vector<std::uint8_t> raw(kFrameBytes);
    for (auto& x : raw) x = static_cast<std::uint8_t>(rng());
    const std::uint64_t ch = 1 + rng() % 8;
    for (int k = 0; k < 8; ++k) raw[24 + k] = static_cast<std::uint8_t>(ch >> (8 * k));
    const auto back = encode_frame(decode_frame(raw));
    if (!std::equal(back.begin(), back.end(), raw.begin())) ++bad;
  }
  v.pass = layout && bad == 0;
  v.detail = "frame " + std::to_string(bytes.size()) + " bytes, offsets " +
             (layout ? "ok" : "wrong") + ", " + std::to_string(kFrames - bad) + "/" +
             std::to_string(kFrames) + " random frames round-trip";
  return v;
}

// --- 7: location scalability --------------------------------------------------

double seconds_per_call(const std::function<void()>& fn) {
  // Best of five batches, each at least ~20 ms long.
  std::size_t reps = 1;
  for (;;) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < reps; ++i) fn();
    if (std::chrono::duration<double>(Clock::now() - t0).count() > 0.02) break;
    reps *= 2;
  }
  double best = 1e9;
  for (int trial = 0; trial < 5; ++trial) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < reps; ++i) fn();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count() /
                              static_cast<double>(reps));
  }
  return best;
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double icept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = icept + slope * x[i];
    ss_res += (y[i] - f) * (y[i] - f);
    ss_tot += (y[i] - sy / n) * (y[i] - sy / n);
  }
  return 1.0 - ss_res / ss_tot;
}

Verdict criterion7() {
  const OperationDescriptor d{OpName::kAllReduce, Algorithm::kRing,
                              Protocol::kSimple, 1 << 26};
  std::vector<double> xs, hang_t, slow_t;
  double worst_4096 = 0;
  std::mt19937_64 rng(7);
  for (std::uint32_t n : {16u, 256u, 1024u, 4096u}) {
    std::vector<MemberState> members(n);
    std::vector<MetricSnapshot> snaps(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      MetricSnapshot s;
      s.rank = RankId{i};
      s.round = 40;
      s.trace_id = make_trace_id(CommunicatorId{1}, 40);
      s.descriptor = d;
      s.channels = {ChannelCounts{100 + rng() % 50, 100 + rng() % 50}};
      s.send_rate = Rational(1, 2 + rng() % 20);
      s.recv_rate = Rational(1, 2 + rng() % 20);
      s.enter_time_us = 1000 + rng() % 500;
      members[i] = MemberState{RankId{i}, 0, 40, s};
      s.reason = SnapshotReason::kCompletion;
      s.duration_us = 40'000 + rng() % 30'000;
      s.complete_time_us = s.enter_time_us + s.duration_us;
      snaps[i] = s;
    }
    BaselineState base = BaselineState::configured(10'000, 100);
    base.source = BaselineSource::kLearned;
    const AnalyzerConfig cfg;
    const double th = seconds_per_call([&] {
      auto r = locate_hang(CommunicatorId{1}, 40, members, Algorithm::kRing);
      if (r.roots.empty()) std::abort();
    });
    const double ts = seconds_per_call([&] {
      auto r = locate_slow(snaps, base, cfg);
      if (r.roots.empty()) std::abort();
    });
    xs.push_back(n);
    hang_t.push_back(th);
    slow_t.push_back(ts);
    if (n == 4096) worst_4096 = std::max(th, ts);
  }
  const double r2h = r_squared(xs, hang_t);
  const double r2s = r_squared(xs, slow_t);
  Verdict v;
  v.pass = r2h >= 0.95 && r2s >= 0.95 && worst_4096 < 1.0;
  std::ostringstream os;
  os << "locate_hang us/call";
  for (double t : hang_t) os << ' ' << fmt(t * 1e6, 1);
  os << " (R2 " << fmt(r2h, 4) << "); locate_slow us/call";
  for (double t : slow_t) os << ' ' << fmt(t * 1e6, 1);
  os << " (R2 " << fmt(r2s, 4) << "); 4096 ranks " << fmt(worst_4096 * 1e3, 3)
     << " ms";
  v.detail = os.str();
  return v;
}

// --- 8: replay ----------------------------------------------------------------

std::vector<std::string> bundled() {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(COLLDIAG_SCENARIO_DIR)) {
    if (e.path().extension() == ".scn") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Verdict criterion8() {
  std::size_t same = 0, total = 0, reports = 0;
  std::string bad;
  const auto dir = std::filesystem::temp_directory_path();
  for (const auto& path : bundled()) {
    ++total;
    const RunResult live = run_scenario(load_scenario(path));
    const auto file = (dir / ("colldiag_acceptance_" +
                              std::filesystem::path(path).stem().string() + ".trace"))
                          .string();
    {
      std::ofstream out(file);
      write_trace(live.trace, out);
    }
    const TraceLog back = load_trace(file);
    std::filesystem::remove(file);
    const auto stream = back.stream();
    const auto replayed = diagnose(stream, back.end_us, back.analyzer_config());
    if (lines_of(replayed) == lines_of(live.summary.reports) &&
        !(live.summary.reports.empty() && !live.summary.expectations.empty())) {
      ++same;
      reports += replayed.size();
    } else {
      bad += " " + path;
    }
  }
  Verdict v;
  v.pass = same == total && total >= 8;
  v.detail = std::to_string(same) + "/" + std::to_string(total) +
             " scenarios replay to identical report streams (" +
             std::to_string(reports) + " reports)" + bad;
  return v;
}

// --- 9: invariants ------------------------------------------------------------

struct PropertyLog {
  std::vector<std::pair<std::string, bool>> results;
  void check(const std::string& name, bool ok) { results.emplace_back(name, ok); }
};

// Conservation and monotonicity: every unit sent is received, and no counter
// ever decreases while its round is live.
void sim_properties(PropertyLog& log) {
  std::mt19937_64 rng(9);
  bool conserved = true, monotone = true;
  const Protocol protos[] = {Protocol::kSimple, Protocol::kLL, Protocol::kLL128};
  for (int trial = 0; trial < 60; ++trial) {
    ClusterConfig c;
    c.num_ranks = 2 + static_cast<std::uint32_t>(rng() % 15);
    c.channels_per_rank = 1 + static_cast<std::uint32_t>(rng() % 8);
    c.entry_jitter_us = rng() % 200;
    c.seed = rng();
    Cluster cluster(c);
    std::vector<RankId> members;
    for (std::uint32_t r = 0; r < c.num_ranks; ++r) members.push_back(RankId{r});
    const Algorithm algo = rng() % 2 ? Algorithm::kRing : Algorithm::kTree;
    const auto& comm = cluster.create_communicator(members, algo);
    const OperationDescriptor d{OpName::kAllReduce, algo, protos[rng() % 3],
                                1 + rng() % (1 << 22)};
    cluster.post_collective(comm.id(), d, 0);
    std::vector<std::vector<ChannelCounts>> last(c.num_ranks);
    while (auto t = cluster.next_event_time()) {
      cluster.advance(*t);
      for (std::uint32_t r = 0; r < c.num_ranks; ++r) {
        const auto v = cluster.frame(RankId{r}).read_block(0);
        std::vector<ChannelCounts> now(v.channels.begin(),
                                       v.channels.begin() + c.channels_per_rank);
        if (!last[r].empty()) {
          for (std::size_t ch = 0; ch < now.size(); ++ch) {
            monotone = monotone && now[ch].send >= last[r][ch].send &&
                       now[ch].recv >= last[r][ch].recv;
          }
        }
        last[r] = now;
      }
    }
    for (std::uint32_t ch = 0; ch < c.channels_per_rank; ++ch) {
      std::uint64_t sent = 0, received = 0;
      for (std::uint32_t r = 0; r < c.num_ranks; ++r) {
        sent += last[r][ch].send;
        received += last[r][ch].recv;
      }
      conserved = conserved && sent == received && sent > 0;
    }
  }
  log.check("unit conservation", conserved);
  log.check("counter monotonicity", monotone);
}

void pipeline_properties(PropertyLog& log, const std::vector<FaultRun>& runs) {
  // Determinism: same script, same seed, same events and reports.
  const Scenario s = load_scenario(std::string(COLLDIAG_SCENARIO_DIR) + "/s3_mixed.scn");
  RunOptions opt;
  opt.record_events = true;
  const RunResult a = run_scenario(s, opt);
  const RunResult b = run_scenario(s, opt);
  log.check("determinism", a.events == b.events && a.trace == b.trace &&
                               lines_of(a.summary.reports) == lines_of(b.summary.reports));

  // Rates are 0 or 1/k with k bounded by the window; P stays in [0, 1];
  // R and P re-derive from the reported durations.
  bool rates = true, p_bounds = true, rederive = true;
  for (const auto& run : runs) {
    for (const auto& rec : run.result.snapshots) {
      for (const auto& r : {rec.snapshot.send_rate, rec.snapshot.recv_rate}) {
        rates = rates && (r.is_zero() || (r.num() == 1 && r.den() <= 1000));
      }
    }
    for (const auto& r : run.result.summary.reports) {
      if (r.is_hang()) continue;
      p_bounds = p_bounds && r.p >= 0 && r.p <= 1;
      rederive = rederive && slow_ratio(r.t_max, r.t_base) == r.r &&
                 p_ratio(r.t_max, r.t_min, r.t_base) == r.p;
    }
  }
  log.check("rate bounds", rates);
  log.check("P bounds", p_bounds);
  log.check("R/P re-derivation", rederive);

  // Heartbeat liveness: a frozen round keeps reporting from every member.
  bool live = false;
  for (const auto& run : runs) {
    if (run.kind != AnomalyKind::kH3) continue;
    std::map<std::uint32_t, std::size_t> beats;
    for (const auto& rec : run.result.snapshots) {
      if (rec.snapshot.round == run.trigger &&
          rec.snapshot.reason == SnapshotReason::kHeartbeat) {
        ++beats[rec.snapshot.rank.value];
      }
    }
    live = beats.size() == 16;
    for (const auto& [rank, n] : beats) live = live && n >= 300;
    if (!live) break;
  }
  log.check("heartbeat liveness", live);

  // Per (comm, rank) completions arrive in round order.
  bool ordered = true;
  for (const auto& run : runs) {
    std::map<std::uint32_t, std::uint64_t> last;
    for (const auto& rec : run.result.snapshots) {
      if (rec.snapshot.reason != SnapshotReason::kCompletion) continue;
      auto [it, fresh] = last.try_emplace(rec.snapshot.rank.value, rec.snapshot.round);
      if (!fresh) {
        ordered = ordered && rec.snapshot.round > it->second;
        it->second = rec.snapshot.round;
      }
    }
  }
  log.check("completion order", ordered);
}

// A barrier that stalls or drags never raises a report.
void barrier_property(PropertyLog& log) {
  std::size_t reports = 0;
  for (const char* fault : {"HardwareFault 5 10 freeze=0.5", "CompSlow 5 30 delay_us=2000000",
                            "NotEnteredHang 5 10"}) {
    std::ostringstream s;
    s << "cluster 16 1 3 jitter=500\ncomm 1 ring 0-15\nfault " << fault
      << "\nrepeat 60\n  round 1 AllReduce Ring LL 4\n  advance 5000000\nend\n"
      << "advance 400000000\n";
    reports += run_scenario(parse_scenario(s.str(), "barrier")).summary.reports.size();
  }
  log.check("barrier exclusion", reports == 0);
}

// Scaling every time in a trace and every time-valued setting by the same
// factor leaves the verdicts unchanged.
void scale_property(PropertyLog& log) {
  bool same = true;
  for (const char* name : {"s1_comp", "s2_comm", "h3_hardware"}) {
    const RunResult r =
        run_scenario(load_scenario(std::string(COLLDIAG_SCENARIO_DIR) + "/" + name + ".scn"));
    constexpr std::uint64_t k = 4;
    AnalyzerConfig cfg = r.analyzer_config;
    cfg.hang_threshold_us *= k;
    cfg.slow_window_us *= k;
    cfg.initial_baseline_us *= k;
    cfg.m_time_cap_us *= k;
    cfg.eval_tick_us *= k;
    std::vector<StreamEntry> scaled = r.trace.stream();
    for (auto& e : scaled) {
      e.time_us *= k;
      if (auto* s = std::get_if<MetricSnapshot>(&e.item)) {
        s->enter_time_us *= k;
        s->duration_us *= k;
        if (s->complete_time_us) *s->complete_time_us *= k;
      }
    }
    const auto base = r.summary.reports;
    const auto got = diagnose(scaled, r.trace.end_us * k, cfg);
    same = same && base.size() == got.size();
    for (std::size_t i = 0; same && i < base.size(); ++i) {
      same = base[i].kind == got[i].kind && base[i].roots == got[i].roots &&
             base[i].round == got[i].round && base[i].r == got[i].r &&
             base[i].p == got[i].p && base[i].detected_us * k == got[i].detected_us;
    }
  }
  log.check("scale invariance", same);
}

void collector_properties(PropertyLog& log, const std::vector<FaultRun>& runs) {
  // Lossless ingestion and per-rank order under a stream with junk lines.
  Collector c;
  std::size_t emitted = 0, junk = 0;
  std::mt19937_64 rng(10);
  const auto& recs = runs.front().result.snapshots;
  for (const auto& rec : recs) {
    c.ingest_line(rec.to_line());
    ++emitted;
    if (rng() % 50 == 0) {
      c.ingest_line(rec.to_line().substr(0, 10));
      ++junk;
    }
  }
  log.check("lossless ingestion",
            c.ingested() == emitted && c.parse_errors() == junk);
  // Trace ids stay unique within a communicator.
  std::map<std::pair<std::uint64_t, std::uint32_t>, std::uint64_t> ids;
  bool unique = true;
  for (const auto& rec : recs) {
    const auto& t = rec.snapshot.trace_id;
    auto [it, fresh] = ids.try_emplace({t.comm_id.value, t.op_counter}, rec.snapshot.round);
    unique = unique && it->second == rec.snapshot.round;
  }
  log.check("trace id uniqueness", unique);
}

Verdict criterion9(const std::vector<FaultRun>& runs) {
  PropertyLog log;
  sim_properties(log);
  pipeline_properties(log, runs);
  barrier_property(log);
  scale_property(log);
  collector_properties(log, runs);
  Verdict v;
  std::size_t ok = 0;
  std::string failed;
  for (const auto& [name, pass] : log.results) {
    if (pass) {
      ++ok;
    } else {
      failed += " [" + name + " failed]";
    }
  }
  v.pass = ok == log.results.size();
  v.detail = std::to_string(ok) + "/" + std::to_string(log.results.size()) +
             " properties hold" + failed;
  return v;
}

}  // namespace

int main() {
  try {
    double wall_s = 0;
    const auto runs = run_fault_matrix(wall_s);
    print(1, criterion1(runs, wall_s));
    print(2, criterion2());
    print(3, criterion3());
    print(4, criterion4());
    print(5, criterion5(runs, AnalyzerConfig{}));
    print(6, criterion6());
    print(7, criterion7());
    print(8, criterion8());
    print(9, criterion9(runs));
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
