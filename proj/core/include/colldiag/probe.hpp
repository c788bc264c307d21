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

/// @file probe.hpp
/// @brief Per-rank frame sampler and SendRate/RecvRate estimation.
///
/// A rate is the reciprocal of how many times a counter's value changed
/// across fixed-interval samples. A link that moves its units in quick bursts
/// changes the counter in few samples; a throttled link spreads the same units
/// over many samples and so reports a lower rate.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "colldiag/collective_sim.hpp"
#include "colldiag/metric_snapshot.hpp"
#include "colldiag/rational.hpp"
#include "colldiag/trace_model.hpp"

namespace colldiag {

struct ProbeConfig {
  std::uint64_t sample_interval_us = 1'000;
  std::uint64_t heartbeat_interval_us = 1'000'000;
  std::uint64_t rate_window_samples = 1'000;

  /// Throws kInvalidConfiguration.
  void validate() const;
};

/// Change counter over a tumbling window of samples.
class RateAccumulator {
 public:
  explicit RateAccumulator(std::uint64_t window_samples = 1'000);

  void observe(std::uint64_t value);
  /// Same as calling observe(last_value()) `samples` times.
  void observe_unchanged(std::uint64_t samples);

  /// 1/changes for the open window, 0 if it saw no change. An empty open
  /// window falls back to the last closed one; with neither, throws
  /// kInsufficientData.
  Rational current_rate() const;

  std::uint64_t last_value() const noexcept { return last_value_; }
  std::uint64_t change_count() const noexcept { return change_count_; }
  std::uint64_t window_samples() const noexcept { return samples_; }
  std::uint64_t window_length() const noexcept { return window_; }

  friend bool operator==(const RateAccumulator&, const RateAccumulator&) =
      default;

 private:
  void close_if_full();

  std::uint64_t window_;
  std::uint64_t last_value_ = 0;
  std::uint64_t change_count_ = 0;
  std::uint64_t samples_ = 0;
  std::optional<Rational> closed_rate_;
};

/// Sampler for one rank's frame. Rounds are registered from the simulator's
/// posting records, which stand in for host-side operation interception.
class Probe {
 public:
  Probe(RankId rank, const ProbingFrame* frame, ProbeConfig config = {});

  RankId rank() const noexcept { return rank_; }
  const ProbeConfig& config() const noexcept { return config_; }

  void on_post(const PostRecord& post);
  void on_enter(CommunicatorId comm, std::uint64_t round,
                std::uint64_t time_us);
  /// Takes a final sample and returns the completion snapshot.
  MetricSnapshot on_complete(CommunicatorId comm, std::uint64_t round,
                             std::uint64_t time_us);

  /// One sample of every tracked in-flight round.
  void sample();
  /// `samples` further samples with the frame known to be unchanged since
  /// the previous one.
  void sample_unchanged(std::uint64_t samples);

  /// Snapshots of every entered, in-flight round.
  std::vector<MetricSnapshot> heartbeat(std::uint64_t now_us);

  /// Throws kNoRound if (comm, round) is not tracked.
  MetricSnapshot emit_snapshot(CommunicatorId comm, std::uint64_t round,
                               SnapshotReason reason,
                               std::uint64_t now_us) const;

  /// Drops every round of `comm`. Unknown ids are ignored.
  void release(CommunicatorId comm);

  /// Tracked rounds; used to check that teardown returns memory.
  std::size_t footprint() const noexcept { return rounds_.size(); }

 private:
  struct Tracked {
    TraceId trace_id;
    BlockHandle block;
    OperationDescriptor descriptor;
    std::optional<std::uint64_t> enter_time_us;
    bool evicted = false;  // block reused by a later round
    std::vector<ChannelCounts> counts;
    std::vector<RateAccumulator> send;
    std::vector<RateAccumulator> recv;
  };
  using Key = std::pair<std::uint64_t, std::uint64_t>;  // (comm, round)

  void sample_one(Tracked& t);
  const Tracked& find(CommunicatorId comm, std::uint64_t round) const;

  RankId rank_;
  const ProbingFrame* frame_;
  ProbeConfig config_;
  std::map<Key, Tracked> rounds_;
};

}  // namespace colldiag
