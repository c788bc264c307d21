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

/// @file analyzer.hpp
/// @brief Slow/hang detection and root-cause location over rank snapshots.
///
/// Detection compares ranks that should behave identically: the whole
/// communicator for Ring, one tree layer at a time for Tree. A hang is a
/// round in flight for longer than the hang threshold. A slowdown is a
/// detection window whose most uneven round took much longer than the
/// baseline, repeated over several windows.
///
/// Location follows a fixed decision tree:
///
///   hang: a rank that never reached the round       -> H1 (that rank)
///         else a rank that is not stuck             -> H2 (that rank)
///         else                                      -> H3 (fewest units)
///   slow: P = (T_max - T_min) / (T_max - T_base)
///         P > beta                                  -> S1 (shortest round)
///         P < alpha                                 -> S2 (slowest rate)
///         otherwise                                 -> S3 (both)

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "colldiag/collective_sim.hpp"
#include "colldiag/metric_snapshot.hpp"
#include "colldiag/rational.hpp"
#include "colldiag/trace_model.hpp"

namespace colldiag {

struct AnalyzerConfig {
  std::uint64_t hang_threshold_us = 300'000'000;
  std::uint64_t slow_window_us = 60'000'000;
  double theta_slow = 3.0;
  double alpha = 0.4;
  double beta = 0.6;
  std::uint64_t repetition_threshold = 3;
  std::uint64_t initial_baseline_us = 1'000'000;
  std::uint64_t m_rounds_cap = 100;
  std::uint64_t m_time_cap_us = 120'000'000;
  /// AllReduce rounds of at most this many bytes are barriers.
  std::uint64_t barrier_size_bytes = 4;
  std::uint64_t eval_tick_us = 1'000'000;
  /// Replace theta_slow by estimate_theta() once enough clean windows exist.
  bool auto_theta = false;

  /// Throws kInvalidConfiguration.
  void validate() const;
  /// Sets one field by name; throws kInvalidConfiguration for unknown keys
  /// or unparsable values.
  void set(std::string_view key, std::string_view value);
  /// Every field as (key, value) text, in a fixed order.
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
};

enum class AnomalyKind : std::uint8_t { kH1, kH2, kH3, kS1, kS2, kS3 };

/// "H1", "H2", "H3", "S1_comp", "S2_comm", "S3_mixed".
std::string_view to_string(AnomalyKind kind);
/// Accepts the names above, the bare H1..S3 tags and fault-kind names.
std::optional<AnomalyKind> parse_anomaly_kind(std::string_view text);
AnomalyKind anomaly_for(FaultKind fault);

bool is_barrier(const OperationDescriptor& d, const AnalyzerConfig& config);

/// Ring: all members. Tree: one group per layer, root first.
std::vector<std::vector<RankId>> comparison_groups(const Communicator& comm);

// --- Baseline ---------------------------------------------------------------

enum class BaselineSource : std::uint8_t { kConfigured, kLearned };
std::string_view to_string(BaselineSource source);

struct BaselineState {
  double value_us = 0;
  BaselineSource source = BaselineSource::kConfigured;
  std::vector<double> round_maxima;
  /// Number of learning rounds; 0 while still open (then m_cap applies).
  std::uint64_t m = 0;
  std::uint64_t m_cap = 100;
  std::uint64_t rounds_seen = 0;

  static BaselineState configured(double initial_us, std::uint64_t m_cap);
  friend bool operator==(const BaselineState&, const BaselineState&) =
      default;
};

/// Feeds the r-th round (1-based) with its maximum duration. Rounds up to m
/// are recorded; the first round past m replaces the configured value by the
/// mean of the recorded maxima, after which the state is frozen. Throws
/// kOrdering if r is not the next round.
BaselineState update_baseline(BaselineState state, std::uint64_t r,
                              double t_max);

// --- Slow detection -----------------------------------------------------------

struct RoundExtent {
  std::uint64_t round = 0;
  double t_max = 0;
  double t_min = 0;
  friend bool operator==(const RoundExtent&, const RoundExtent&) = default;
};

/// Round with the largest T_max - T_min; earliest round on ties. With
/// `by_max` (singleton groups, whose range is always 0) the largest T_max
/// wins instead. Empty input yields nothing.
std::optional<RoundExtent> select_extreme_round(
    std::span<const RoundExtent> window, bool by_max = false);

/// (T_max - T_base) / T_base. Throws kInvalidBaseline if T_base <= 0.
double slow_ratio(double t_max, double t_base);

/// (T_max - T_min) / (T_max - T_base), clamped into [0, 1]. Throws
/// kInvalidInvocation unless T_max > T_base.
double p_ratio(double t_max, double t_min, double t_base);

/// max(mean + 3 * stddev, 1) capped at 10, population stddev. Throws
/// kInsufficientData below 30 values.
double estimate_theta(std::span<const double> history);

struct SlowCounter {
  CommunicatorId comm;
  std::uint64_t detections = 0;
  /// Set once an alert fired; cleared by the next clean window.
  bool latched = false;
};

struct SlowDecision {
  std::optional<RoundExtent> extreme;
  double ratio = 0;
  bool flagged = false;
  bool alert = false;
};

/// One window of one comparison group: picks the extreme round, flags it if
/// R > theta and updates the counter. An empty window leaves the counter
/// alone; a clean one resets it.
SlowDecision detect_slow(std::span<const RoundExtent> window,
                         const BaselineState& baseline, SlowCounter& counter,
                         const AnalyzerConfig& config, bool by_max = false);

// --- Hang detection -----------------------------------------------------------

struct InFlightRound {
  RankId rank;
  std::uint64_t round = 0;
  OperationDescriptor descriptor;
  std::uint64_t enter_time_us = 0;
};

struct HangAlert {
  std::uint64_t round = 0;
  TraceId trace_id;
  /// Earliest entry into the alerted round.
  std::uint64_t onset_us = 0;
};

/// Alerts on the lowest non-barrier round some rank has been inside for
/// longer than hang_threshold_us.
std::optional<HangAlert> detect_hang(CommunicatorId comm,
                                     std::span<const InFlightRound> in_flight,
                                     std::uint64_t now_us,
                                     const AnalyzerConfig& config);

// --- Reports ------------------------------------------------------------------

struct RankEvidence {
  RankId rank;
  std::optional<std::uint64_t> last_round;
  std::uint64_t send_total = 0;
  std::uint64_t recv_total = 0;
  Rational send_rate;
  Rational recv_rate;
  std::uint64_t duration_us = 0;
  std::optional<OperationDescriptor> descriptor;
  bool completed = false;
  friend bool operator==(const RankEvidence&, const RankEvidence&) = default;
};

struct AnomalyReport {
  AnomalyKind kind = AnomalyKind::kH1;
  CommunicatorId comm;
  std::uint64_t round = 0;
  std::vector<RankId> roots;
  /// S3 keeps both candidate sets; roots is their union.
  std::vector<RankId> duration_candidates;
  std::vector<RankId> rate_candidates;
  std::vector<RankEvidence> evidence;
  double t_base = 0;
  double t_max = 0;
  double t_min = 0;
  double r = 0;
  double p = 0;
  BaselineSource baseline_source = BaselineSource::kConfigured;
  std::uint64_t onset_us = 0;
  std::uint64_t detected_us = 0;
  std::uint64_t located_us = 0;

  bool is_hang() const noexcept { return kind <= AnomalyKind::kH3; }
  bool slow_at_start() const noexcept {
    return baseline_source == BaselineSource::kConfigured;
  }

  /// "kind=S2_comm comm=1 round=33 roots=5 R=... P=... T_base=... ..."
  /// Hang reports print "-" for the slow-only fields. Doubles use the
  /// shortest text that reads back to the same value.
  std::string to_line() const;
  /// Parses to_line() output; evidence is not carried. Throws
  /// kMalformedRecord.
  static AnomalyReport parse_line(std::string_view line);
};

struct MemberState {
  RankId rank;
  std::uint32_t layer = 0;
  /// Highest round this rank has reported on the communicator.
  std::optional<std::uint64_t> last_round;
  /// Latest snapshot of the alerted round, if any.
  std::optional<MetricSnapshot> current;
};

/// Throws kInsufficientEvidence if no member has a snapshot of the round.
AnomalyReport locate_hang(CommunicatorId comm, std::uint64_t round,
                          std::span<const MemberState> members,
                          Algorithm algorithm);

/// Location over the completion snapshots of one group's extreme round.
/// Throws kInsufficientEvidence if a snapshot is missing or incomplete.
AnomalyReport locate_slow(std::span<const MetricSnapshot> snapshots,
                          const BaselineState& baseline,
                          const AnalyzerConfig& config);

/// 1 / (1/send + 1/recv): the reciprocal of the rank's total changes across
/// both directions. A stalled direction yields 0.
Rational combined_rate(const Rational& send, const Rational& recv);

// --- Streaming analyzer -------------------------------------------------------

struct CommunicatorDecl {
  CommunicatorId id;
  Algorithm algorithm = Algorithm::kRing;
  std::vector<RankId> members;
  friend bool operator==(const CommunicatorDecl&, const CommunicatorDecl&) =
      default;
};

class Analyzer {
 public:
  explicit Analyzer(AnalyzerConfig config = {});

  const AnalyzerConfig& config() const noexcept { return config_; }
  double theta() const noexcept { return theta_; }

  void declare_communicator(const CommunicatorDecl& decl);
  std::vector<std::vector<RankId>> comparison_groups(CommunicatorId id) const;

  /// Snapshots of undeclared communicators or non-members are counted in
  /// skipped() and otherwise ignored.
  void ingest(const MetricSnapshot& snapshot);

  /// Evaluation tick; `now_us` must be a multiple of eval_tick_us. Runs hang
  /// detection every tick and slow detection at window boundaries.
  std::vector<AnomalyReport> tick(std::uint64_t now_us);

  const std::vector<AnomalyReport>& reports() const noexcept {
    return reports_;
  }
  std::uint64_t skipped() const noexcept { return skipped_; }
  const BaselineState* baseline(CommunicatorId id, std::size_t group,
                                const OperationDescriptor& key) const;

 private:
  struct RoundRec {
    std::vector<std::optional<MetricSnapshot>> latest;  // by position
    std::size_t completed = 0;
    std::uint64_t max_completion = 0;
  };
  struct WindowItem {
    std::size_t group = 0;
    OperationDescriptor key;
    RoundExtent extent;
    std::vector<MetricSnapshot> snapshots;  // the group's completions
  };
  struct CommState {
    explicit CommState(Communicator c) : comm(std::move(c)) {}
    Communicator comm;
    std::vector<std::size_t> group_of;  // by position
    std::vector<std::vector<std::size_t>> groups;
    std::vector<std::optional<std::uint64_t>> last_round;
    std::map<std::uint64_t, RoundRec> rounds;
    std::set<std::uint64_t> finished;
    std::optional<std::uint64_t> first_entry;
    std::map<std::pair<std::size_t, OperationDescriptor>, BaselineState>
        baselines;
    std::map<std::uint64_t, std::vector<WindowItem>> windows;
    SlowCounter counter;
    std::uint64_t first_flag_us = 0;
    std::set<std::uint64_t> hang_latched;
  };

  void finish_round(CommState& cs, std::uint64_t round, RoundRec& rec);
  std::optional<AnomalyReport> check_hang(CommState& cs, std::uint64_t now);
  std::optional<AnomalyReport> check_slow(CommState& cs, std::uint64_t now);

  AnalyzerConfig config_;
  double theta_;
  std::vector<double> clean_ratios_;
  std::map<std::uint64_t, CommState> comms_;
  std::vector<AnomalyReport> reports_;
  std::uint64_t skipped_ = 0;
  std::uint64_t last_tick_ = 0;
};

/// One item of an ordered snapshot stream: a communicator declaration or a
/// snapshot emitted at `time_us`.
struct StreamEntry {
  std::uint64_t time_us = 0;
  std::variant<CommunicatorDecl, MetricSnapshot> item;
};

/// Replays a stream through a fresh Analyzer. Before each snapshot emitted at
/// t, every tick T < t runs; after the last entry every tick T <= end_us runs.
std::vector<AnomalyReport> diagnose(std::span<const StreamEntry> stream,
                                    std::uint64_t end_us,
                                    const AnalyzerConfig& config);

}  // namespace colldiag
