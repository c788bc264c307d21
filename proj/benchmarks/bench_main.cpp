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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "colldiag/analyzer.hpp"
#include "colldiag/collective_sim.hpp"
#include "colldiag/probe.hpp"
#include "colldiag/scenario.hpp"

namespace colldiag {
namespace {

const OperationDescriptor kRound{OpName::kAllReduce, Algorithm::kRing,
                                 Protocol::kSimple, 1 << 24};

// One simulated AllReduce round end to end.
void BM_SimRound(benchmark::State& state) {
  ClusterConfig c;
  c.num_ranks = static_cast<std::uint32_t>(state.range(0));
  c.channels_per_rank = 2;
  Cluster cluster(c);
  std::vector<RankId> members;
  for (std::uint32_t r = 0; r < c.num_ranks; ++r) members.push_back(RankId{r});
  const auto id = cluster.create_communicator(members, Algorithm::kRing).id();
  for (auto _ : state) {
    cluster.post_collective(id, kRound, cluster.next_round(id));
    while (auto t = cluster.next_event_time()) cluster.advance(*t);
  }
}
BENCHMARK(BM_SimRound)->Arg(8)->Arg(64)->Arg(256);

std::vector<MetricSnapshot> completions(std::uint32_t n) {
  std::mt19937_64 rng(1);
  std::vector<MetricSnapshot> out(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    MetricSnapshot& s = out[i];
    s.rank = RankId{i};
    s.round = 3;
    s.trace_id = make_trace_id(CommunicatorId{1}, 3);
    s.descriptor = kRound;
    s.channels = {ChannelCounts{100, 100}};
    s.send_rate = Rational(1, 2 + rng() % 20);
    s.recv_rate = Rational(1, 2 + rng() % 20);
    s.enter_time_us = rng() % 500;
    s.duration_us = 40'000 + rng() % 30'000;
    s.complete_time_us = s.enter_time_us + s.duration_us;
    s.reason = SnapshotReason::kCompletion;
  }
  return out;
}

void BM_LocateSlow(benchmark::State& state) {
  const auto snaps = completions(static_cast<std::uint32_t>(state.range(0)));
  BaselineState base = BaselineState::configured(10'000, 100);
  const AnalyzerConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(locate_slow(snaps, base, cfg));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_LocateSlow)->RangeMultiplier(4)->Range(16, 4096)->Complexity(benchmark::oN);

void BM_LocateHang(benchmark::State& state) {
  const auto snaps = completions(static_cast<std::uint32_t>(state.range(0)));
  std::vector<MemberState> members;
  for (auto s : snaps) {
    s.reason = SnapshotReason::kHeartbeat;
    s.complete_time_us.reset();
    members.push_back(MemberState{s.rank, 0, 3, s});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        locate_hang(CommunicatorId{1}, 3, members, Algorithm::kRing));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_LocateHang)->RangeMultiplier(4)->Range(16, 4096)->Complexity(benchmark::oN);

// Probe sampling cost per tracked round and channel set.
void BM_ProbeSample(benchmark::State& state) {
  ProbingFrame frame(8);
  Probe probe(RankId{0}, &frame);
  const CommunicatorId comm{1};
  for (std::uint64_t r = 0; r < 8; ++r) {
    const auto id = make_trace_id(comm, r);
    const auto h = frame.begin_round(id);
    probe.on_post(PostRecord{RankId{0}, comm, r, id, h, kRound, 0});
  }
  std::uint64_t i = 0;
  for (auto _ : state) {
    frame.record(BlockHandle{i++ % 8}, 0, Direction::kSend);
    probe.sample();
  }
}
BENCHMARK(BM_ProbeSample);

void BM_Scenario(benchmark::State& state) {
  const Scenario s = parse_scenario(R"(cluster 16 1 1 jitter=500
comm 1 ring 0-15
fault CommSlow 5 30 factor=0.2
repeat 80
  round 1 AllReduce Ring Simple 67108864
  advance 5000000
end
)");
  for (auto _ : state) benchmark::DoNotOptimize(run_scenario(s));
}
BENCHMARK(BM_Scenario)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace colldiag

BENCHMARK_MAIN();
