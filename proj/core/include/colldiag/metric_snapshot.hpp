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

/// @file metric_snapshot.hpp
/// @brief One rank's measurement of one round, as handed to the analyzer.

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "colldiag/rational.hpp"
#include "colldiag/trace_model.hpp"

namespace colldiag {

enum class SnapshotReason : std::uint8_t { kCompletion, kHeartbeat };

std::string_view to_string(SnapshotReason reason);
SnapshotReason parse_snapshot_reason(std::string_view text);

struct MetricSnapshot {
  RankId rank;
  /// Full 64-bit round number; trace_id carries its 32-bit truncation.
  std::uint64_t round = 0;
  TraceId trace_id;
  OperationDescriptor descriptor;
  std::vector<ChannelCounts> channels;
  Rational send_rate;  // min over channels, 0 = stalled
  Rational recv_rate;
  std::uint64_t enter_time_us = 0;
  std::optional<std::uint64_t> complete_time_us;
  std::uint64_t duration_us = 0;
  SnapshotReason reason = SnapshotReason::kHeartbeat;

  friend bool operator==(const MetricSnapshot&, const MetricSnapshot&) =
      default;

  CommunicatorId comm() const noexcept { return trace_id.comm_id; }
  std::uint64_t total_send() const noexcept;
  std::uint64_t total_recv() const noexcept;
  std::uint64_t total_count() const noexcept {
    return total_send() + total_recv();
  }
};

}  // namespace colldiag
