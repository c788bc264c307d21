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

#include <gtest/gtest.h>

#include <random>

#include "colldiag/error.hpp"
#include "colldiag/probe.hpp"

namespace colldiag {
namespace {

TEST(RateAccumulator, BurstyCounterHasHighRate) {
  RateAccumulator acc;
  for (std::uint64_t v : {0, 4, 4, 8}) acc.observe(v);
  EXPECT_EQ(acc.change_count(), 2u);
  EXPECT_EQ(acc.current_rate(), Rational(1, 2));
}

TEST(RateAccumulator, SteadyCounterHasLowRate) {
  RateAccumulator acc;
  for (std::uint64_t v = 1; v <= 7; ++v) acc.observe(v);
  EXPECT_EQ(acc.change_count(), 7u);
  EXPECT_EQ(acc.current_rate(), Rational(1, 7));
}

TEST(RateAccumulator, NoChangeIsZero) {
  RateAccumulator acc;
  acc.observe(0);
  acc.observe_unchanged(20);
  EXPECT_TRUE(acc.current_rate().is_zero());
}

TEST(RateAccumulator, EmptyWindowThrows) {
  RateAccumulator acc;
  try {
    (void)acc.current_rate();
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientData);
  }
}

TEST(RateAccumulator, ZeroWindowRejected) {
  EXPECT_THROW(RateAccumulator(0), Error);
}

TEST(RateAccumulator, ClosedWindowCarriesOver) {
  RateAccumulator acc(4);
  for (std::uint64_t v : {1, 2, 2, 2}) acc.observe(v);
  EXPECT_EQ(acc.window_samples(), 0u);
  EXPECT_EQ(acc.current_rate(), Rational(1, 2));
  acc.observe(3);
  EXPECT_EQ(acc.current_rate(), Rational(1, 1));
}

TEST(RateAccumulator, UnchangedMatchesRepeatedObserve) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t window = 1 + rng() % 50;
    RateAccumulator a(window), b(window);
    std::uint64_t v = 0;
    for (int i = 0; i < 40; ++i) {
      if (rng() % 2) v += 1 + rng() % 3;
      a.observe(v);
      b.observe(v);
      const std::uint64_t n = rng() % 120;
      a.observe_unchanged(n);
      for (std::uint64_t k = 0; k < n; ++k) b.observe(v);
      ASSERT_EQ(a, b);
    }
  }
}

TEST(RateAccumulator, RateBounds) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    RateAccumulator acc(1 + rng() % 100);
    std::uint64_t v = 0;
    const int n = 1 + static_cast<int>(rng() % 300);
    for (int i = 0; i < n; ++i) {
      if (rng() % 3 == 0) ++v;
      acc.observe(v);
    }
    const Rational r = acc.current_rate();
    EXPECT_LE(r, Rational(1, 1));
    EXPECT_GE(r, Rational());
    if (!r.is_zero()) {
      EXPECT_EQ(r.num(), 1u);
      EXPECT_LE(r.den(), acc.window_length());
    }
  }
}

// Drives a probe over a hand-written frame.
struct Rig {
  ProbingFrame frame{2};
  ProbeConfig config;
  Probe probe{RankId{3}, &frame, config};
  CommunicatorId comm{7};
  std::uint64_t next = 0;

  BlockHandle post(const OperationDescriptor& d, std::uint64_t at = 0) {
    const auto id = make_trace_id(comm, next);
    const BlockHandle h = frame.begin_round(id);
    probe.on_post(PostRecord{RankId{3}, comm, next, id, h, d, at});
    probe.on_enter(comm, next, at);
    ++next;
    return h;
  }
};

const OperationDescriptor kBig{OpName::kAllReduce, Algorithm::kRing,
                               Protocol::kSimple, 1 << 20};

TEST(Probe, CompletionSnapshot) {
  Rig rig;
  const auto h = rig.post(kBig, 100);
  // Channel 0 moves in two bursts, channel 1 steadily.
  for (int i = 0; i < 7; ++i) {
    if (i == 0 || i == 4) {
      rig.frame.record(h, 0, Direction::kSend, 4);
      rig.frame.record(h, 0, Direction::kRecv, 4);
    }
    rig.frame.record(h, 1, Direction::kSend);
    rig.frame.record(h, 1, Direction::kRecv);
    rig.probe.sample();
  }
  const MetricSnapshot s = rig.probe.on_complete(rig.comm, 0, 900);
  EXPECT_EQ(s.rank, RankId{3});
  EXPECT_EQ(s.reason, SnapshotReason::kCompletion);
  EXPECT_EQ(s.enter_time_us, 100u);
  EXPECT_EQ(s.complete_time_us, 900u);
  EXPECT_EQ(s.duration_us, 800u);
  ASSERT_EQ(s.channels.size(), 2u);
  EXPECT_EQ(s.channels[0], (ChannelCounts{8, 8}));
  EXPECT_EQ(s.channels[1], (ChannelCounts{7, 7}));
  // Minimum over channels: the steady one.
  EXPECT_EQ(s.send_rate, Rational(1, 7));
  EXPECT_EQ(s.recv_rate, Rational(1, 7));
  EXPECT_EQ(rig.probe.footprint(), 0u);
}

TEST(Probe, StalledRoundHeartbeatsWithZeroRate) {
  Rig rig;
  const auto h = rig.post(kBig);
  rig.frame.record(h, 0, Direction::kSend, 10);
  rig.frame.record(h, 1, Direction::kSend, 10);
  rig.probe.sample();
  rig.probe.sample_unchanged(rig.config.rate_window_samples * 3);
  const auto beats = rig.probe.heartbeat(400'000'000);
  ASSERT_EQ(beats.size(), 1u);
  EXPECT_EQ(beats[0].reason, SnapshotReason::kHeartbeat);
  EXPECT_FALSE(beats[0].complete_time_us.has_value());
  EXPECT_TRUE(beats[0].send_rate.is_zero());
  EXPECT_TRUE(beats[0].recv_rate.is_zero());
  EXPECT_EQ(beats[0].duration_us, 400'000'000u);
}

TEST(Probe, HeartbeatBeforeAnySampleReportsStall) {
  Rig rig;
  rig.post(kBig);
  const auto beats = rig.probe.heartbeat(5);
  ASSERT_EQ(beats.size(), 1u);
  EXPECT_TRUE(beats[0].send_rate.is_zero());
}

TEST(Probe, BarrierDescriptorKept) {
  Rig rig;
  const OperationDescriptor barrier{OpName::kAllReduce, Algorithm::kRing,
                                    Protocol::kLL, 4};
  rig.post(barrier);
  rig.probe.sample();
  const auto s = rig.probe.on_complete(rig.comm, 0, 10);
  EXPECT_EQ(s.descriptor.data_size_bytes, 4u);
  EXPECT_EQ(s.descriptor, barrier);
}

TEST(Probe, ReleaseDropsRounds) {
  Rig rig;
  rig.post(kBig);
  rig.post(kBig);
  EXPECT_EQ(rig.probe.footprint(), 2u);
  rig.probe.release(rig.comm);
  EXPECT_EQ(rig.probe.footprint(), 0u);
  try {
    (void)rig.probe.emit_snapshot(rig.comm, 0, SnapshotReason::kHeartbeat, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoRound);
  }
  EXPECT_NO_THROW(rig.probe.release(rig.comm));
  EXPECT_NO_THROW(rig.probe.release(CommunicatorId{99}));
}

TEST(Probe, FootprintFlatOverCycles) {
  ProbingFrame frame(1);
  Probe probe(RankId{0}, &frame);
  for (std::uint64_t c = 0; c < 1000; ++c) {
    frame.reset(1);
    const CommunicatorId comm{c + 1};
    const auto id = make_trace_id(comm, 0);
    const auto h = frame.begin_round(id);
    probe.on_post(PostRecord{RankId{0}, comm, 0, id, h, kBig, c});
    probe.on_enter(comm, 0, c);
    probe.sample();
    probe.release(comm);
    ASSERT_EQ(probe.footprint(), 0u);
  }
}

TEST(Probe, EvictedRoundStopsSampling) {
  Rig rig;
  const auto h0 = rig.post(kBig);
  rig.frame.record(h0, 0, Direction::kSend, 3);
  rig.probe.sample();
  // Eight later rounds wrap the block ring and overwrite round 0's block.
  for (std::size_t i = 0; i < kNumBlocks; ++i) rig.post(kBig);
  rig.probe.sample();
  const auto s =
      rig.probe.emit_snapshot(rig.comm, 0, SnapshotReason::kHeartbeat, 50);
  EXPECT_EQ(s.channels[0].send, 3u);
}

TEST(Probe, SlowerLinkGetsLowerRate) {
  // Same volume, one link spreads it over more samples.
  for (std::uint64_t spread = 2; spread <= 50; ++spread) {
    ProbingFrame fast(1), slow(1);
    Probe pf(RankId{0}, &fast), ps(RankId{1}, &slow);
    const CommunicatorId comm{1};
    const auto id = make_trace_id(comm, 0);
    const auto hf = fast.begin_round(id);
    const auto hs = slow.begin_round(id);
    pf.on_post(PostRecord{RankId{0}, comm, 0, id, hf, kBig, 0});
    ps.on_post(PostRecord{RankId{1}, comm, 0, id, hs, kBig, 0});
    const std::uint64_t units = 100;
    for (std::uint64_t i = 0; i < spread; ++i) {
      if (i == 0) fast.record(hf, 0, Direction::kSend, units);
      slow.record(hs, 0, Direction::kSend, units / spread + (i < units % spread));
      pf.sample();
      ps.sample();
    }
    const auto a = pf.on_complete(comm, 0, spread);
    const auto b = ps.on_complete(comm, 0, spread);
    EXPECT_EQ(a.channels[0].send, b.channels[0].send);
    EXPECT_LT(b.send_rate, a.send_rate) << "spread " << spread;
  }
}

TEST(Probe, HeartbeatOnlyForEnteredRounds) {
  Rig rig;
  const auto id = make_trace_id(rig.comm, 0);
  const auto h = rig.frame.begin_round(id);
  rig.probe.on_post(PostRecord{RankId{3}, rig.comm, 0, id, h, kBig, 0});
  EXPECT_TRUE(rig.probe.heartbeat(10).empty());
  rig.probe.on_enter(rig.comm, 0, 4);
  EXPECT_EQ(rig.probe.heartbeat(10).size(), 1u);
}

TEST(ProbeConfig, Validate) {
  ProbeConfig c;
  EXPECT_NO_THROW(c.validate());
  c.sample_interval_us = 0;
  EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace colldiag
