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

#include "colldiag/probe.hpp"

#include <algorithm>

#include "colldiag/error.hpp"

namespace colldiag {

std::string_view to_string(SnapshotReason reason) {
  return reason == SnapshotReason::kCompletion ? "completion" : "heartbeat";
}

SnapshotReason parse_snapshot_reason(std::string_view text) {
  if (text == "completion") return SnapshotReason::kCompletion;
  if (text == "heartbeat") return SnapshotReason::kHeartbeat;
  throw Error(ErrorCode::kMalformedRecord,
              "unknown snapshot reason '" + std::string(text) + "'");
}

std::uint64_t MetricSnapshot::total_send() const noexcept {
  std::uint64_t total = 0;
  for (const auto& c : channels) total += c.send;
  return total;
}

std::uint64_t MetricSnapshot::total_recv() const noexcept {
  std::uint64_t total = 0;
  for (const auto& c : channels) total += c.recv;
  return total;
}

void ProbeConfig::validate() const {
  if (sample_interval_us == 0 || heartbeat_interval_us == 0 ||
      rate_window_samples == 0) {
    throw Error(ErrorCode::kInvalidConfiguration,
                "probe intervals and window must be positive");
  }
  if (sample_interval_us > heartbeat_interval_us) {
    throw Error(ErrorCode::kInvalidConfiguration,
                "sample_interval_us must not exceed heartbeat_interval_us");
  }
}

// ---------------------------------------------------------------------------

RateAccumulator::RateAccumulator(std::uint64_t window_samples)
    : window_(window_samples) {
  if (window_ == 0) {
    throw Error(ErrorCode::kInvalidConfiguration, "window must be positive");
  }
}

void RateAccumulator::close_if_full() {
  if (samples_ < window_) return;
  closed_rate_ = change_count_ == 0 ? Rational()
                                    : Rational::reciprocal_of(change_count_);
  samples_ = 0;
  change_count_ = 0;
}

void RateAccumulator::observe(std::uint64_t value) {
  if (value != last_value_) ++change_count_;
  last_value_ = value;
  ++samples_;
  close_if_full();
}

void RateAccumulator::observe_unchanged(std::uint64_t samples) {
  while (samples > 0) {
    const std::uint64_t take = std::min(samples, window_ - samples_);
    samples_ += take;
    samples -= take;
    close_if_full();
  }
}

Rational RateAccumulator::current_rate() const {
  if (samples_ == 0) {
    if (closed_rate_) return *closed_rate_;
    throw Error(ErrorCode::kInsufficientData, "no samples in the window");
  }
  if (change_count_ == 0) return Rational();
  return Rational::reciprocal_of(change_count_);
}

// ---------------------------------------------------------------------------

Probe::Probe(RankId rank, const ProbingFrame* frame, ProbeConfig config)
    : rank_(rank), frame_(frame), config_(config) {
  config_.validate();
}

void Probe::on_post(const PostRecord& post) {
  const auto channels = static_cast<std::size_t>(frame_->num_channels());
  Tracked t;
  t.trace_id = post.trace_id;
  t.block = post.block;
  t.descriptor = post.descriptor;
  t.counts.assign(channels, ChannelCounts{});
  t.send.assign(channels, RateAccumulator(config_.rate_window_samples));
  t.recv.assign(channels, RateAccumulator(config_.rate_window_samples));
  rounds_.insert_or_assign(Key{post.comm.value, post.round}, std::move(t));
}

void Probe::on_enter(CommunicatorId comm, std::uint64_t round,
                     std::uint64_t time_us) {
  auto it = rounds_.find(Key{comm.value, round});
  if (it != rounds_.end()) it->second.enter_time_us = time_us;
}

void Probe::sample_one(Tracked& t) {
  if (t.evicted) return;
  const BlockView view = frame_->read_block(t.block.block);
  if (view.trace_id.comm_id != t.trace_id.comm_id ||
      view.trace_id.op_counter != t.trace_id.op_counter) {
    t.evicted = true;
    return;
  }
  for (std::size_t c = 0; c < t.counts.size(); ++c) {
    t.counts[c] = view.channels[c];
    t.send[c].observe(view.channels[c].send);
    t.recv[c].observe(view.channels[c].recv);
  }
}

void Probe::sample() {
  for (auto& [key, t] : rounds_) sample_one(t);
}

void Probe::sample_unchanged(std::uint64_t samples) {
  if (samples == 0) return;
  for (auto& [key, t] : rounds_) {
    if (t.evicted) continue;
    for (std::size_t c = 0; c < t.counts.size(); ++c) {
      t.send[c].observe_unchanged(samples);
      t.recv[c].observe_unchanged(samples);
    }
  }
}

const Probe::Tracked& Probe::find(CommunicatorId comm,
                                  std::uint64_t round) const {
  auto it = rounds_.find(Key{comm.value, round});
  if (it == rounds_.end()) {
    throw Error(ErrorCode::kNoRound,
                "rank " + std::to_string(rank_.value) + " tracks no round " +
                    std::to_string(round) + " of communicator " +
                    std::to_string(comm.value));
  }
  return it->second;
}

namespace {

Rational rate_or_stalled(const RateAccumulator& acc) {
  if (acc.window_samples() == 0) {
    try {
      return acc.current_rate();
    } catch (const Error&) {
      return Rational();
    }
  }
  return acc.current_rate();
}

Rational min_rate(const std::vector<RateAccumulator>& accs) {
  Rational best = rate_or_stalled(accs.front());
  for (std::size_t i = 1; i < accs.size(); ++i) {
    best = std::min(best, rate_or_stalled(accs[i]));
  }
  return best;
}

}  // namespace

MetricSnapshot Probe::emit_snapshot(CommunicatorId comm, std::uint64_t round,
                                    SnapshotReason reason,
                                    std::uint64_t now_us) const {
  const Tracked& t = find(comm, round);
  MetricSnapshot s;
  s.rank = rank_;
  s.round = round;
  s.trace_id = t.trace_id;
  s.descriptor = t.descriptor;
  s.channels = t.counts;
  s.send_rate = min_rate(t.send);
  s.recv_rate = min_rate(t.recv);
  s.enter_time_us = t.enter_time_us.value_or(now_us);
  s.reason = reason;
  if (reason == SnapshotReason::kCompletion) s.complete_time_us = now_us;
  s.duration_us = now_us - s.enter_time_us;
  return s;
}

MetricSnapshot Probe::on_complete(CommunicatorId comm, std::uint64_t round,
                                  std::uint64_t time_us) {
  auto it = rounds_.find(Key{comm.value, round});
  if (it == rounds_.end()) {
    throw Error(ErrorCode::kNoRound, "completion of an untracked round");
  }
  sample_one(it->second);
  MetricSnapshot s =
      emit_snapshot(comm, round, SnapshotReason::kCompletion, time_us);
  rounds_.erase(it);
  return s;
}

std::vector<MetricSnapshot> Probe::heartbeat(std::uint64_t now_us) {
  std::vector<MetricSnapshot> out;
  for (const auto& [key, t] : rounds_) {
    if (!t.enter_time_us) continue;
    out.push_back(emit_snapshot(CommunicatorId{key.first}, key.second,
                                SnapshotReason::kHeartbeat, now_us));
  }
  return out;
}

void Probe::release(CommunicatorId comm) {
  auto lo = rounds_.lower_bound(Key{comm.value, 0});
  auto hi = rounds_.upper_bound(Key{comm.value, UINT64_MAX});
  rounds_.erase(lo, hi);
}

}  // namespace colldiag
