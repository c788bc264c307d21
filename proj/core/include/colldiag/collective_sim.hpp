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

/// @file collective_sim.hpp
/// @brief Discrete-event model of ranks running Ring/Tree collectives.
///
/// A collective round is decomposed into per-channel steps of Send/Recv
/// units. Within a channel a rank transmits one unit at a time; the sends of
/// step s wait until every receive of the earlier steps has landed (store and
/// forward), and a unit may only leave once the receiver has entered the same
/// round and finished sending its own earlier steps (one step of buffering).
/// Every unit is recorded into the sender's and receiver's probing frames.
///
/// Time is virtual and only advances by processing events, so minutes of
/// simulated stall cost nothing in wall time.

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "colldiag/trace_model.hpp"

namespace colldiag {

struct ClusterConfig {
  std::uint32_t num_ranks = 2;
  std::uint32_t channels_per_rank = 1;
  /// Applies to every (rank, channel) unless overridden below.
  double link_bandwidth_bytes_per_us = 3500.0;
  /// Optional per (rank, channel) bandwidths, row-major by rank; empty or
  /// num_ranks * channels_per_rank entries.
  std::vector<double> bandwidth_overrides;
  std::uint64_t base_latency_us = 5;
  /// Each rank's kernel entry is delayed by a uniform draw in [0, jitter].
  std::uint64_t entry_jitter_us = 0;
  std::uint64_t seed = 0;
  bool measurement_enabled = true;

  double bandwidth(std::uint32_t rank, std::uint32_t channel) const;
};

class Communicator {
 public:
  Communicator(CommunicatorId id, std::vector<RankId> members,
               Algorithm algorithm);

  CommunicatorId id() const noexcept { return id_; }
  const std::vector<RankId>& members() const noexcept { return members_; }
  Algorithm algorithm() const noexcept { return algorithm_; }
  std::size_t size() const noexcept { return members_.size(); }

  std::optional<std::size_t> position_of(RankId rank) const;
  RankId successor(RankId rank) const;
  RankId predecessor(RankId rank) const;

  /// Tree depth of each member position (root = 0); empty for Ring.
  const std::vector<std::uint32_t>& tree_layers() const noexcept {
    return tree_layers_;
  }
  std::optional<std::uint32_t> layer_of(RankId rank) const;

  /// Heap-ordered binary tree over list positions.
  static std::size_t tree_parent(std::size_t pos) { return (pos - 1) / 2; }
  static std::uint32_t tree_depth(std::size_t pos);

 private:
  CommunicatorId id_;
  std::vector<RankId> members_;
  Algorithm algorithm_;
  std::vector<std::uint32_t> tree_layers_;
  std::map<std::uint32_t, std::size_t> position_;
};

/// Payload carried by one Send/Recv unit, and its size on the wire.
std::uint64_t unit_payload_bytes(Protocol protocol);
std::uint64_t unit_wire_bytes(Protocol protocol);

/// One batch of units between a member and a peer (both list positions).
/// `peer_step` is the step index of the matching transfer in the peer's plan.
struct Transfer {
  std::uint32_t peer = 0;
  std::uint32_t peer_step = 0;
  std::uint64_t units = 0;
};

struct PlanStep {
  std::vector<Transfer> sends;
  std::vector<Transfer> recvs;
};

/// Per-channel schedule of one member; every channel runs the same plan.
struct RankPlan {
  std::vector<PlanStep> steps;
  std::uint64_t send_units() const;
  std::uint64_t recv_units() const;
};

struct OpPlan {
  OperationDescriptor descriptor;
  std::uint32_t channels = 1;
  std::uint64_t units_per_transfer = 0;
  std::vector<RankPlan> ranks;  // indexed by member position
};

/// Splits a collective into per-rank Send/Recv unit schedules. Throws
/// kUnsupportedOperation for pairs this model does not implement (AlltoAll
/// and the gather/scatter family are Ring-only; Send/Recv are primitives,
/// not rounds).
OpPlan decompose_op(const OperationDescriptor& descriptor,
                    const Communicator& communicator, std::uint32_t channels);

enum class FaultKind : std::uint8_t {
  kNotEnteredHang,
  kInconsistentHang,
  kHardwareFault,
  kCompSlow,
  kCommSlow,
  kMixedSlow,
};

std::string_view to_string(FaultKind kind);
/// Accepts the long names above (without the k) and the short H1..S3 tags.
std::optional<FaultKind> parse_fault_kind(std::string_view text);

struct FaultSpec {
  FaultKind kind = FaultKind::kCompSlow;
  RankId victim;
  std::uint64_t trigger_round = 0;
  /// Slow faults stay active for this many rounds; 0 means until the end.
  std::uint64_t duration_rounds = 0;
  std::uint64_t entry_delay_us = 0;
  double bandwidth_factor = 1.0;
  double freeze_after_fraction = 0.5;
  /// InconsistentHang: fields of the round's descriptor the victim replaces.
  /// With none set (or none differing) the victim doubles the data size.
  std::optional<OpName> substitute_op;
  std::optional<Protocol> substitute_protocol;
  std::optional<std::uint64_t> substitute_bytes;
};

struct PostRecord {
  RankId rank;
  CommunicatorId comm;
  std::uint64_t round = 0;
  TraceId trace_id;
  BlockHandle block;
  OperationDescriptor descriptor;
  std::uint64_t posted_at_us = 0;
};

struct CompletionEvent {
  std::uint64_t time_us = 0;
  RankId rank;
  CommunicatorId comm;
  std::uint64_t round = 0;
  friend bool operator==(const CompletionEvent&, const CompletionEvent&) =
      default;
};

enum class TraceEventKind : std::uint8_t {
  kPost,
  kSkip,
  kEnter,
  kSend,
  kRecv,
  kFreeze,
  kComplete,
};

struct TraceEvent {
  std::uint64_t time_us = 0;
  std::uint32_t rank = 0;
  std::int32_t channel = -1;  // -1: not channel-specific
  TraceEventKind kind = TraceEventKind::kPost;
  std::uint64_t comm = 0;
  std::uint64_t round = 0;
  std::uint32_t step = 0;
  std::uint32_t peer = 0;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
  /// "time_us rank channel event detail"
  std::string to_line() const;
};

class SimObserver {
 public:
  virtual ~SimObserver() = default;
  virtual void on_post(const PostRecord&) {}
  virtual void on_enter(RankId, CommunicatorId, std::uint64_t /*round*/,
                        std::uint64_t /*time_us*/) {}
  virtual void on_complete(const CompletionEvent&) {}
};

class Cluster {
 public:
  explicit Cluster(ClusterConfig config);
  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;
  Cluster(Cluster&&) noexcept;
  Cluster& operator=(Cluster&&) noexcept;
  ~Cluster();

  const ClusterConfig& config() const noexcept;
  std::uint64_t now() const noexcept;
  std::size_t num_frames() const noexcept;
  const ProbingFrame& frame(RankId rank) const;

  /// A rank belongs to at most one live communicator, so its single frame
  /// always tracks that communicator's counter.
  const Communicator& create_communicator(const std::vector<RankId>& members,
                                          Algorithm algorithm);
  const Communicator& create_communicator(CommunicatorId id,
                                          const std::vector<RankId>& members,
                                          Algorithm algorithm);
  void destroy_communicator(CommunicatorId id);
  const Communicator& communicator(CommunicatorId id) const;
  std::uint64_t next_round(CommunicatorId id) const;

  void add_fault(const FaultSpec& fault);

  /// Dispatches `round` on every member (minus Not-Entered victims).
  void post_collective(CommunicatorId comm,
                       const OperationDescriptor& descriptor,
                       std::uint64_t round);

  /// Processes every event with time <= until_us and moves the clock there.
  std::vector<CompletionEvent> advance(std::uint64_t until_us);
  std::optional<std::uint64_t> next_event_time() const;

  void set_observer(SimObserver* observer);
  void enable_event_trace(bool enabled);
  const std::vector<TraceEvent>& event_trace() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Convenience wrapper matching the operation name used in the docs.
inline Cluster build_cluster(ClusterConfig config) {
  return Cluster(std::move(config));
}

}  // namespace colldiag
