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

#include "colldiag/collective_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "colldiag/error.hpp"

namespace colldiag {

namespace {

constexpr std::uint64_t kNoFreeze = std::numeric_limits<std::uint64_t>::max();

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) {
  return (a + b - 1) / b;
}

}  // namespace

double ClusterConfig::bandwidth(std::uint32_t rank,
                                std::uint32_t channel) const {
  if (bandwidth_overrides.empty()) return link_bandwidth_bytes_per_us;
  return bandwidth_overrides.at(static_cast<std::size_t>(rank) *
                                    channels_per_rank +
                                channel);
}

// ---------------------------------------------------------------------------
// Communicator

Communicator::Communicator(CommunicatorId id, std::vector<RankId> members,
                           Algorithm algorithm)
    : id_(id), members_(std::move(members)), algorithm_(algorithm) {
  if (members_.size() < 2) {
    throw Error(ErrorCode::kInvalidConfiguration,
                "a communicator needs at least 2 members");
  }
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (!position_.emplace(members_[i].value, i).second) {
      throw Error(ErrorCode::kInvalidConfiguration,
                  "duplicate member " + std::to_string(members_[i].value));
    }
  }
  if (algorithm_ == Algorithm::kTree) {
    tree_layers_.resize(members_.size());
    for (std::size_t i = 0; i < members_.size(); ++i) {
      tree_layers_[i] = tree_depth(i);
    }
  }
}

std::uint32_t Communicator::tree_depth(std::size_t pos) {
  std::uint32_t depth = 0;
  for (std::size_t v = pos + 1; v > 1; v >>= 1) ++depth;
  return depth;
}

std::optional<std::size_t> Communicator::position_of(RankId rank) const {
  auto it = position_.find(rank.value);
  if (it == position_.end()) return std::nullopt;
  return it->second;
}

RankId Communicator::successor(RankId rank) const {
  auto pos = position_of(rank);
  if (!pos) {
    throw Error(ErrorCode::kInvalidConfiguration, "rank is not a member");
  }
  return members_[(*pos + 1) % members_.size()];
}

RankId Communicator::predecessor(RankId rank) const {
  auto pos = position_of(rank);
  if (!pos) {
    throw Error(ErrorCode::kInvalidConfiguration, "rank is not a member");
  }
  return members_[(*pos + members_.size() - 1) % members_.size()];
}

std::optional<std::uint32_t> Communicator::layer_of(RankId rank) const {
  if (tree_layers_.empty()) return std::nullopt;
  auto pos = position_of(rank);
  if (!pos) return std::nullopt;
  return tree_layers_[*pos];
}

// ---------------------------------------------------------------------------
// Decomposition

std::uint64_t unit_payload_bytes(Protocol protocol) {
  switch (protocol) {
    case Protocol::kSimple: return 512 * 1024;
    case Protocol::kLL128: return 480;
    case Protocol::kLL: return 128;
  }
  return 1;
}

std::uint64_t unit_wire_bytes(Protocol protocol) {
  switch (protocol) {
    case Protocol::kSimple: return 512 * 1024;
    case Protocol::kLL128: return 512;
    case Protocol::kLL: return 256;
  }
  return 1;
}

std::uint64_t RankPlan::send_units() const {
  std::uint64_t total = 0;
  for (const auto& step : steps) {
    for (const auto& t : step.sends) total += t.units;
  }
  return total;
}

std::uint64_t RankPlan::recv_units() const {
  std::uint64_t total = 0;
  for (const auto& step : steps) {
    for (const auto& t : step.recvs) total += t.units;
  }
  return total;
}

namespace {

[[noreturn]] void unsupported(const OperationDescriptor& d) {
  throw Error(ErrorCode::kUnsupportedOperation,
              "no " + std::string(to_string(d.algorithm)) + " schedule for " +
                  std::string(to_string(d.op)));
}

void plan_ring(OpPlan& plan, std::uint32_t n_ranks, std::uint64_t k) {
  const OperationDescriptor& d = plan.descriptor;
  auto n = n_ranks;
  switch (d.op) {
    case OpName::kAllReduce:
    case OpName::kAllGather:
    case OpName::kReduceScatter: {
      const std::uint32_t steps =
          d.op == OpName::kAllReduce ? 2 * (n - 1) : n - 1;
      for (std::uint32_t p = 0; p < n; ++p) {
        auto& rp = plan.ranks[p];
        rp.steps.resize(steps);
        for (std::uint32_t s = 0; s < steps; ++s) {
          rp.steps[s].sends.push_back({(p + 1) % n, s, k});
          rp.steps[s].recvs.push_back({(p + n - 1) % n, s, k});
        }
      }
      return;
    }
    case OpName::kAlltoAll: {
      for (std::uint32_t p = 0; p < n; ++p) {
        auto& rp = plan.ranks[p];
        rp.steps.resize(n - 1);
        for (std::uint32_t s = 0; s < n - 1; ++s) {
          rp.steps[s].sends.push_back({(p + s + 1) % n, s, k});
          rp.steps[s].recvs.push_back({(p + n - s - 1) % n, s, k});
        }
      }
      return;
    }
    case OpName::kBroadcast: {
      // Chain from position 0.
      for (std::uint32_t p = 0; p < n; ++p) {
        auto& rp = plan.ranks[p];
        if (p == 0) {
          rp.steps.resize(1);
          rp.steps[0].sends.push_back({1, 0, k});
          continue;
        }
        const std::uint32_t pred_send_step = p == 1 ? 0 : 1;
        rp.steps.resize(p + 1 < n ? 2 : 1);
        rp.steps[0].recvs.push_back({p - 1, pred_send_step, k});
        if (p + 1 < n) rp.steps[1].sends.push_back({p + 1, 0, k});
      }
      return;
    }
    default:
      unsupported(d);
  }
}

void plan_tree(OpPlan& plan, std::uint32_t n, std::uint64_t units) {
  const OperationDescriptor& d = plan.descriptor;
  auto is_leaf = [n](std::uint32_t p) { return 2 * p + 1 >= n; };
  auto children = [n](std::uint32_t p) {
    std::vector<std::uint32_t> out;
    for (std::uint32_t c : {2 * p + 1, 2 * p + 2}) {
      if (c < n) out.push_back(c);
    }
    return out;
  };
  if (d.op == OpName::kAllReduce) {
    // Step layout: root {0: recv children, 1: send children};
    // internal {0: recv children, 1: send parent, 2: recv parent,
    //           3: send children}; leaf {0: send parent, 1: recv parent}.
    auto send_up_step = [&](std::uint32_t p) { return is_leaf(p) ? 0u : 1u; };
    auto recv_down_step = [&](std::uint32_t p) { return is_leaf(p) ? 1u : 2u; };
    auto send_down_step = [&](std::uint32_t p) { return p == 0 ? 1u : 3u; };
    for (std::uint32_t p = 0; p < n; ++p) {
      auto& rp = plan.ranks[p];
      const auto kids = children(p);
      const std::uint32_t parent = p == 0 ? 0 : (p - 1) / 2;
      if (p == 0) {
        rp.steps.resize(2);
        for (auto c : kids) {
          rp.steps[0].recvs.push_back({c, send_up_step(c), units});
          rp.steps[1].sends.push_back({c, recv_down_step(c), units});
        }
      } else if (is_leaf(p)) {
        rp.steps.resize(2);
        rp.steps[0].sends.push_back({parent, 0, units});
        rp.steps[1].recvs.push_back({parent, send_down_step(parent), units});
      } else {
        rp.steps.resize(4);
        for (auto c : kids) {
          rp.steps[0].recvs.push_back({c, send_up_step(c), units});
          rp.steps[3].sends.push_back({c, recv_down_step(c), units});
        }
        rp.steps[1].sends.push_back({parent, 0, units});
        rp.steps[2].recvs.push_back({parent, send_down_step(parent), units});
      }
    }
    return;
  }
  if (d.op == OpName::kBroadcast) {
    for (std::uint32_t p = 0; p < n; ++p) {
      auto& rp = plan.ranks[p];
      const auto kids = children(p);
      if (p == 0) {
        rp.steps.resize(1);
        for (auto c : kids) rp.steps[0].sends.push_back({c, 0, units});
        continue;
      }
      const std::uint32_t parent = (p - 1) / 2;
      rp.steps.resize(kids.empty() ? 1 : 2);
      rp.steps[0].recvs.push_back({parent, parent == 0 ? 0u : 1u, units});
      for (auto c : kids) rp.steps[1].sends.push_back({c, 0, units});
    }
    return;
  }
  unsupported(d);
}

}  // namespace

OpPlan decompose_op(const OperationDescriptor& descriptor,
                    const Communicator& communicator, std::uint32_t channels) {
  if (descriptor.data_size_bytes == 0) {
    throw Error(ErrorCode::kInvalidConfiguration, "data_size_bytes must be > 0");
  }
  if (channels < 1 || channels > kMaxChannels) {
    throw Error(ErrorCode::kInvalidConfiguration, "channels must be in [1, 8]");
  }
  if (descriptor.op == OpName::kSend || descriptor.op == OpName::kRecv) {
    unsupported(descriptor);
  }
  if (descriptor.algorithm != communicator.algorithm()) {
    throw Error(ErrorCode::kUnsupportedOperation,
                "descriptor algorithm " +
                    std::string(to_string(descriptor.algorithm)) +
                    " does not match the communicator");
  }
  const auto n = static_cast<std::uint32_t>(communicator.size());
  const std::uint64_t payload = unit_payload_bytes(descriptor.protocol);
  OpPlan plan;
  plan.descriptor = descriptor;
  plan.channels = channels;
  plan.ranks.resize(n);
  if (descriptor.algorithm == Algorithm::kRing) {
    const bool per_peer_chunk = descriptor.op != OpName::kBroadcast;
    const std::uint64_t divisor =
        (per_peer_chunk ? n : 1) * static_cast<std::uint64_t>(channels) *
        payload;
    plan.units_per_transfer =
        std::max<std::uint64_t>(1, ceil_div(descriptor.data_size_bytes, divisor));
    plan_ring(plan, n, plan.units_per_transfer);
  } else {
    plan.units_per_transfer = std::max<std::uint64_t>(
        1, ceil_div(descriptor.data_size_bytes, channels * payload));
    plan_tree(plan, n, plan.units_per_transfer);
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Faults

std::string_view to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::kNotEnteredHang: return "NotEnteredHang";
    case FaultKind::kInconsistentHang: return "InconsistentHang";
    case FaultKind::kHardwareFault: return "HardwareFault";
    case FaultKind::kCompSlow: return "CompSlow";
    case FaultKind::kCommSlow: return "CommSlow";
    case FaultKind::kMixedSlow: return "MixedSlow";
  }
  return "?";
}

std::optional<FaultKind> parse_fault_kind(std::string_view text) {
  static constexpr std::pair<std::string_view, FaultKind> kNames[] = {
      {"NotEnteredHang", FaultKind::kNotEnteredHang},
      {"H1", FaultKind::kNotEnteredHang},
      {"InconsistentHang", FaultKind::kInconsistentHang},
      {"H2", FaultKind::kInconsistentHang},
      {"HardwareFault", FaultKind::kHardwareFault},
      {"H3", FaultKind::kHardwareFault},
      {"CompSlow", FaultKind::kCompSlow},
      {"S1", FaultKind::kCompSlow},
      {"CommSlow", FaultKind::kCommSlow},
      {"S2", FaultKind::kCommSlow},
      {"MixedSlow", FaultKind::kMixedSlow},
      {"S3", FaultKind::kMixedSlow},
  };
  for (const auto& [name, kind] : kNames) {
    if (name == text) return kind;
  }
  return std::nullopt;
}

std::string TraceEvent::to_line() const {
  static constexpr std::string_view kNames[] = {
      "post", "skip", "enter", "send", "recv", "freeze", "complete"};
  std::ostringstream os;
  os << time_us << ' ' << rank << ' ';
  if (channel < 0) {
    os << '-';
  } else {
    os << channel;
  }
  os << ' ' << kNames[static_cast<int>(kind)] << " comm=" << comm
     << " round=" << round;
  if (kind == TraceEventKind::kSend || kind == TraceEventKind::kRecv) {
    os << " step=" << step << " peer=" << peer;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Cluster

struct Cluster::Impl {
  enum class EventKind : std::uint8_t { kEnter, kSendDone, kRecvArrive };

  struct Event {
    std::uint64_t time;
    std::uint32_t rank;
    std::uint32_t channel;
    std::uint64_t seq;
    EventKind kind;
    std::uint32_t comm_slot;
    std::uint64_t round;
    std::uint32_t step;
    std::uint32_t pos;

    bool operator>(const Event& o) const {
      if (time != o.time) return time > o.time;
      if (rank != o.rank) return rank > o.rank;
      if (channel != o.channel) return channel > o.channel;
      return seq > o.seq;
    }
  };

  struct ChannelExec {
    std::uint32_t send_step = 0;
    std::uint64_t send_index = 0;  // unit index within send_step
    bool busy = false;
    std::vector<std::uint64_t> sent;      // per step
    std::vector<std::uint64_t> received;  // per step
    std::uint32_t send_prefix = 0;  // leading steps with all sends done
    std::uint32_t recv_prefix = 0;  // leading steps with all recvs done
    std::uint64_t solo_recv_queued = 0;
  };

  struct Pending {
    std::uint64_t round;
    OperationDescriptor descriptor;
    std::shared_ptr<const OpPlan> plan;
    BlockHandle block;
    std::uint64_t ready_at;
    bool solo;
    double bandwidth_factor;
    std::uint64_t freeze_threshold;
  };

  struct Exec {
    bool active = false;
    bool frozen = false;
    bool solo = false;
    std::uint64_t round = 0;
    OperationDescriptor descriptor;
    std::shared_ptr<const OpPlan> plan;
    BlockHandle block;
    double bandwidth_factor = 1.0;
    std::uint64_t freeze_threshold = kNoFreeze;
    std::uint64_t total_sent = 0;
    std::vector<ChannelExec> channels;
  };

  struct Member {
    RankId rank;
    Exec exec;
    std::deque<Pending> queue;
    bool enter_scheduled = false;
    bool suppressed = false;  // Not-Entered victim: posts nothing from now on
  };

  struct CommState {
    Communicator comm;
    bool live = true;
    std::uint64_t next_round = 0;
    std::vector<Member> members;
    std::vector<std::vector<std::uint32_t>> upstream;  // senders into pos
    std::map<OperationDescriptor, std::shared_ptr<const OpPlan>> plans;
  };

  ClusterConfig config;
  std::uint64_t now = 0;
  std::uint64_t seq = 0;
  std::mt19937_64 rng;
  std::vector<ProbingFrame> frames;
  std::vector<std::optional<std::uint32_t>> rank_comm;  // live comm slot
  std::vector<CommState> comms;
  std::map<std::uint64_t, std::uint32_t> comm_slot_by_id;
  std::uint64_t next_comm_id = 1;
  std::vector<FaultSpec> faults;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  SimObserver* observer = nullptr;
  bool trace_enabled = false;
  std::vector<TraceEvent> trace;
  std::vector<CompletionEvent> completions;

  explicit Impl(ClusterConfig cfg) : config(std::move(cfg)), rng(config.seed) {
    if (config.num_ranks < 1) {
      throw Error(ErrorCode::kInvalidConfiguration, "num_ranks must be >= 1");
    }
    if (config.channels_per_rank < 1 || config.channels_per_rank > kMaxChannels) {
      throw Error(ErrorCode::kInvalidConfiguration,
                  "channels_per_rank must be in [1, 8]");
    }
    if (!(config.link_bandwidth_bytes_per_us > 0)) {
      throw Error(ErrorCode::kInvalidConfiguration, "bandwidth must be > 0");
    }
    if (!config.bandwidth_overrides.empty()) {
      if (config.bandwidth_overrides.size() !=
          static_cast<std::size_t>(config.num_ranks) * config.channels_per_rank) {
        throw Error(ErrorCode::kInvalidConfiguration,
                    "bandwidth_overrides must have num_ranks * channels entries");
      }
      for (double bw : config.bandwidth_overrides) {
        if (!(bw > 0)) {
          throw Error(ErrorCode::kInvalidConfiguration,
                      "bandwidth must be > 0");
        }
      }
    }
    frames.reserve(config.num_ranks);
    for (std::uint32_t r = 0; r < config.num_ranks; ++r) {
      frames.emplace_back(config.channels_per_rank, config.measurement_enabled);
    }
    rank_comm.resize(config.num_ranks);
  }

  void log(TraceEventKind kind, std::uint32_t rank, std::int32_t channel,
           std::uint64_t comm, std::uint64_t round, std::uint32_t step = 0,
           std::uint32_t peer = 0) {
    if (!trace_enabled) return;
    trace.push_back(TraceEvent{now, rank, channel, kind, comm, round, step, peer});
  }

  void push(Event e) {
    e.seq = seq++;
    events.push(e);
  }

  CommState& slot(std::uint32_t s) { return comms[s]; }

  std::uint32_t slot_of(CommunicatorId id) const {
    auto it = comm_slot_by_id.find(id.value);
    if (it == comm_slot_by_id.end() || !comms[it->second].live) {
      throw Error(ErrorCode::kInvalidConfiguration,
                  "unknown communicator " + std::to_string(id.value));
    }
    return it->second;
  }

  const Communicator& create(CommunicatorId id,
                             const std::vector<RankId>& members,
                             Algorithm algorithm) {
    for (RankId r : members) {
      if (r.value >= config.num_ranks) {
        throw Error(ErrorCode::kInvalidConfiguration,
                    "rank " + std::to_string(r.value) + " outside the cluster");
      }
    }
    if (comm_slot_by_id.count(id.value) != 0) {
      throw Error(ErrorCode::kInvalidConfiguration,
                  "communicator id " + std::to_string(id.value) + " reused");
    }
    Communicator comm(id, members, algorithm);  // validates size/duplicates
    for (RankId r : members) {
      if (rank_comm[r.value]) {
        throw Error(ErrorCode::kInvalidConfiguration,
                    "rank " + std::to_string(r.value) +
                        " already belongs to a live communicator");
      }
    }
    const auto s = static_cast<std::uint32_t>(comms.size());
    CommState state{std::move(comm), true, 0, {}, {}, {}};
    state.members.resize(members.size());
    state.upstream.resize(members.size());
    for (std::size_t p = 0; p < members.size(); ++p) {
      state.members[p].rank = members[p];
      rank_comm[members[p].value] = s;
      frames[members[p].value].reset(config.channels_per_rank);
    }
    comms.push_back(std::move(state));
    comm_slot_by_id[id.value] = s;
    next_comm_id = std::max(next_comm_id, id.value + 1);
    return comms.back().comm;
  }

  void destroy(CommunicatorId id) {
    const auto s = slot_of(id);
    CommState& cs = comms[s];
    cs.live = false;
    for (auto& m : cs.members) rank_comm[m.rank.value].reset();
  }

  std::shared_ptr<const OpPlan> plan_for(CommState& cs,
                                         const OperationDescriptor& d) {
    auto it = cs.plans.find(d);
    if (it != cs.plans.end()) return it->second;
    auto plan = std::make_shared<const OpPlan>(
        decompose_op(d, cs.comm, config.channels_per_rank));
    // Upstream sets cover every plan seen on this communicator.
    for (std::uint32_t p = 0; p < plan->ranks.size(); ++p) {
      for (const auto& step : plan->ranks[p].steps) {
        for (const auto& t : step.sends) {
          auto& up = cs.upstream[t.peer];
          if (std::find(up.begin(), up.end(), p) == up.end()) up.push_back(p);
        }
      }
    }
    cs.plans.emplace(d, plan);
    return plan;
  }

  bool fault_active(const FaultSpec& f, std::uint64_t round) const {
    switch (f.kind) {
      case FaultKind::kNotEnteredHang:
        return round >= f.trigger_round;
      case FaultKind::kInconsistentHang:
      case FaultKind::kHardwareFault:
        return round == f.trigger_round;
      default:
        return round >= f.trigger_round &&
               (f.duration_rounds == 0 ||
                round < f.trigger_round + f.duration_rounds);
    }
  }

  void post(CommunicatorId id, const OperationDescriptor& d,
            std::uint64_t round) {
    const auto s = slot_of(id);
    CommState& cs = comms[s];
    if (round != cs.next_round) {
      throw Error(ErrorCode::kTraceDesynchronization,
                  "communicator " + std::to_string(id.value) + " expects round " +
                      std::to_string(cs.next_round) + ", got " +
                      std::to_string(round));
    }
    auto plan = plan_for(cs, d);
    ++cs.next_round;
    for (std::uint32_t p = 0; p < cs.members.size(); ++p) {
      Member& m = cs.members[p];
      const std::uint64_t jitter =
          config.entry_jitter_us == 0 ? 0 : rng() % (config.entry_jitter_us + 1);
      Pending pending{round, d, plan, {}, now + jitter, false, 1.0, kNoFreeze};
      for (const FaultSpec& f : faults) {
        if (f.victim.value != m.rank.value || !fault_active(f, round)) continue;
        switch (f.kind) {
          case FaultKind::kNotEnteredHang:
            m.suppressed = true;
            break;
          case FaultKind::kInconsistentHang: {
            OperationDescriptor sub = d;
            if (f.substitute_op) sub.op = *f.substitute_op;
            if (f.substitute_protocol) sub.protocol = *f.substitute_protocol;
            if (f.substitute_bytes) sub.data_size_bytes = *f.substitute_bytes;
            if (sub == d) sub.data_size_bytes = d.data_size_bytes * 2;
            pending.descriptor = sub;
            pending.plan = plan_for(cs, sub);
            pending.solo = true;
            break;
          }
          case FaultKind::kHardwareFault: {
            const double units = static_cast<double>(
                pending.plan->ranks[p].send_units() * pending.plan->channels);
            pending.freeze_threshold = static_cast<std::uint64_t>(
                std::floor(f.freeze_after_fraction * units));
            break;
          }
          case FaultKind::kCompSlow:
            pending.ready_at += f.entry_delay_us;
            break;
          case FaultKind::kCommSlow:
            pending.bandwidth_factor *= f.bandwidth_factor;
            break;
          case FaultKind::kMixedSlow:
            pending.ready_at += f.entry_delay_us;
            pending.bandwidth_factor *= f.bandwidth_factor;
            break;
        }
      }
      if (m.suppressed) {
        log(TraceEventKind::kSkip, m.rank.value, -1, id.value, round);
        continue;
      }
      const TraceId trace_id = make_trace_id(id, round, 0);
      pending.block = frames[m.rank.value].begin_round(trace_id);
      log(TraceEventKind::kPost, m.rank.value, -1, id.value, round);
      if (observer) {
        observer->on_post(PostRecord{m.rank, id, round, trace_id, pending.block,
                                     pending.descriptor, now});
      }
      m.queue.push_back(std::move(pending));
      schedule_entry(s, p);
    }
  }

  void schedule_entry(std::uint32_t s, std::uint32_t p) {
    Member& m = comms[s].members[p];
    if (m.exec.active || m.enter_scheduled || m.queue.empty()) return;
    m.enter_scheduled = true;
    const Pending& next = m.queue.front();
    push(Event{std::max(now, next.ready_at), m.rank.value, 0, 0,
               EventKind::kEnter, s, next.round, 0, p});
  }

  static void advance_prefix(const RankPlan& rp, ChannelExec& ch) {
    while (ch.send_prefix < rp.steps.size()) {
      std::uint64_t need = 0;
      for (const auto& t : rp.steps[ch.send_prefix].sends) need += t.units;
      if (ch.sent[ch.send_prefix] < need) break;
      ++ch.send_prefix;
    }
    while (ch.recv_prefix < rp.steps.size()) {
      std::uint64_t need = 0;
      for (const auto& t : rp.steps[ch.recv_prefix].recvs) need += t.units;
      if (ch.received[ch.recv_prefix] < need) break;
      ++ch.recv_prefix;
    }
  }

  static std::uint64_t step_send_units(const PlanStep& step) {
    std::uint64_t total = 0;
    for (const auto& t : step.sends) total += t.units;
    return total;
  }

  // Moves the send cursor past steps without sends.
  static void settle_cursor(const RankPlan& rp, ChannelExec& ch) {
    while (ch.send_step < rp.steps.size() &&
           ch.send_index >= step_send_units(rp.steps[ch.send_step])) {
      ++ch.send_step;
      ch.send_index = 0;
    }
  }

  void on_enter(const Event& e) {
    CommState& cs = comms[e.comm_slot];
    Member& m = cs.members[e.pos];
    m.enter_scheduled = false;
    if (!cs.live || m.queue.empty()) return;
    Pending next = std::move(m.queue.front());
    m.queue.pop_front();
    Exec& x = m.exec;
    x = Exec{};
    x.active = true;
    x.solo = next.solo;
    x.round = next.round;
    x.descriptor = next.descriptor;
    x.plan = next.plan;
    x.block = next.block;
    x.bandwidth_factor = next.bandwidth_factor;
    x.freeze_threshold = next.freeze_threshold;
    const RankPlan& rp = x.plan->ranks[e.pos];
    x.channels.resize(x.plan->channels);
    for (auto& ch : x.channels) {
      ch.sent.assign(rp.steps.size(), 0);
      ch.received.assign(rp.steps.size(), 0);
      advance_prefix(rp, ch);
      settle_cursor(rp, ch);
    }
    frames[m.rank.value].mark_status(x.block, kStatusEntered);
    log(TraceEventKind::kEnter, m.rank.value, -1, cs.comm.id().value, x.round);
    if (observer) observer->on_enter(m.rank, cs.comm.id(), x.round, now);
    if (x.freeze_threshold == 0) freeze(e.comm_slot, e.pos);
    for (std::uint32_t c = 0; c < x.channels.size(); ++c) {
      try_start(e.comm_slot, e.pos, c);
      for (auto u : cs.upstream[e.pos]) try_start(e.comm_slot, u, c);
    }
  }

  void freeze(std::uint32_t s, std::uint32_t p) {
    Member& m = comms[s].members[p];
    m.exec.frozen = true;
    log(TraceEventKind::kFreeze, m.rank.value, -1, comms[s].comm.id().value,
        m.exec.round);
  }

  std::uint64_t service_time(std::uint32_t src_rank, const Exec& src,
                             const Member* dst, std::uint32_t channel) const {
    double bw = config.bandwidth(src_rank, channel) * src.bandwidth_factor;
    if (dst != nullptr) {
      bw = std::min(bw, config.bandwidth(dst->rank.value, channel)) *
           dst->exec.bandwidth_factor;
    }
    const double wire = static_cast<double>(unit_wire_bytes(src.descriptor.protocol));
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(wire / bw)));
  }

  // Target of the next unit in the current step; units rotate across the
  // step's transfers.
  static const Transfer& current_transfer(const PlanStep& step,
                                          std::uint64_t index) {
    return step.sends[index % step.sends.size()];
  }

  void try_start(std::uint32_t s, std::uint32_t p, std::uint32_t c) {
    CommState& cs = comms[s];
    Member& m = cs.members[p];
    Exec& x = m.exec;
    if (!x.active || x.frozen) return;
    ChannelExec& ch = x.channels[c];
    const RankPlan& rp = x.plan->ranks[p];
    if (ch.busy || ch.send_step >= rp.steps.size()) return;
    const PlanStep& step = rp.steps[ch.send_step];
    const Transfer& t = current_transfer(step, ch.send_index);
    const Member* dst = nullptr;
    if (!x.solo) {
      if (ch.recv_prefix < ch.send_step) return;
      const Member& d = cs.members[t.peer];
      const Exec& dx = d.exec;
      if (!dx.active || dx.frozen || dx.solo || dx.round != x.round ||
          dx.descriptor != x.descriptor) {
        return;
      }
      if (dx.channels[c].send_prefix < t.peer_step) return;
      dst = &d;
    }
    ch.busy = true;
    push(Event{now + service_time(m.rank.value, x, dst, c), m.rank.value, c, 0,
               EventKind::kSendDone, s, x.round, ch.send_step, p});
  }

  void on_send_done(const Event& e) {
    CommState& cs = comms[e.comm_slot];
    Member& m = cs.members[e.pos];
    Exec& x = m.exec;
    if (!x.active || x.round != e.round || x.frozen) return;
    ChannelExec& ch = x.channels[e.channel];
    const RankPlan& rp = x.plan->ranks[e.pos];
    const PlanStep& step = rp.steps[ch.send_step];
    const Transfer t = current_transfer(step, ch.send_index);
    const std::uint32_t step_index = ch.send_step;
    ch.busy = false;
    ++ch.sent[step_index];
    ++ch.send_index;
    ++x.total_sent;
    frames[m.rank.value].record(x.block, e.channel, Direction::kSend, 1);
    log(TraceEventKind::kSend, m.rank.value, static_cast<std::int32_t>(e.channel),
        cs.comm.id().value, x.round, step_index, cs.members[t.peer].rank.value);
    if (!x.solo) {
      // A degraded receiver also stretches the hop latency.
      const double f = cs.members[t.peer].exec.bandwidth_factor;
      const auto latency = static_cast<std::uint64_t>(
          std::ceil(static_cast<double>(config.base_latency_us) / f));
      push(Event{now + latency, cs.members[t.peer].rank.value, e.channel, 0,
                 EventKind::kRecvArrive, e.comm_slot, x.round, t.peer_step,
                 t.peer});
    }
    const std::uint32_t old_prefix = ch.send_prefix;
    advance_prefix(rp, ch);
    settle_cursor(rp, ch);
    if (x.solo) queue_solo_recvs(e, rp, ch);
    if (x.total_sent >= x.freeze_threshold) {
      freeze(e.comm_slot, e.pos);
      return;
    }
    if (maybe_complete(e.comm_slot, e.pos)) return;
    try_start(e.comm_slot, e.pos, e.channel);
    if (ch.send_prefix != old_prefix) {
      for (auto u : cs.upstream[e.pos]) try_start(e.comm_slot, u, e.channel);
    }
  }

  // An inconsistent rank runs alone: each of its sends is mirrored by one
  // loopback receive, and any receives left after its last send drain at the
  // same unit pace.
  void queue_solo_recvs(const Event& e, const RankPlan& rp, ChannelExec& ch) {
    const std::uint64_t total_recv = rp.recv_units();
    const Exec& x = comms[e.comm_slot].members[e.pos].exec;
    const std::uint64_t latency = config.base_latency_us;
    auto queue_one = [&](std::uint64_t at) {
      push(Event{at, comms[e.comm_slot].members[e.pos].rank.value, e.channel, 0,
                 EventKind::kRecvArrive, e.comm_slot, x.round, 0, e.pos});
      ++ch.solo_recv_queued;
    };
    if (ch.solo_recv_queued < total_recv) queue_one(now + latency);
    if (ch.send_step >= rp.steps.size()) {
      const std::uint64_t gap = service_time(
          comms[e.comm_slot].members[e.pos].rank.value, x, nullptr, e.channel);
      std::uint64_t at = now + latency;
      while (ch.solo_recv_queued < total_recv) {
        at += gap;
        queue_one(at);
      }
    }
  }

  void on_recv(const Event& e) {
    CommState& cs = comms[e.comm_slot];
    Member& m = cs.members[e.pos];
    Exec& x = m.exec;
    if (!x.active || x.round != e.round || x.frozen) return;
    ChannelExec& ch = x.channels[e.channel];
    const RankPlan& rp = x.plan->ranks[e.pos];
    std::uint32_t step = e.step;
    if (x.solo) {
      // Loopback receives fill the earliest incomplete receive step.
      step = ch.recv_prefix;
    }
    if (step >= rp.steps.size()) return;
    ++ch.received[step];
    frames[m.rank.value].record(x.block, e.channel, Direction::kRecv, 1);
    log(TraceEventKind::kRecv, m.rank.value, static_cast<std::int32_t>(e.channel),
        cs.comm.id().value, x.round, step, 0);
    const std::uint32_t old_prefix = ch.recv_prefix;
    advance_prefix(rp, ch);
    if (maybe_complete(e.comm_slot, e.pos)) return;
    if (ch.recv_prefix != old_prefix) try_start(e.comm_slot, e.pos, e.channel);
  }

  bool maybe_complete(std::uint32_t s, std::uint32_t p) {
    CommState& cs = comms[s];
    Member& m = cs.members[p];
    Exec& x = m.exec;
    const auto n_steps = x.plan->ranks[p].steps.size();
    for (const auto& ch : x.channels) {
      if (ch.send_prefix < n_steps || ch.recv_prefix < n_steps) return false;
    }
    x.active = false;
    frames[m.rank.value].mark_status(x.block, kStatusComplete);
    log(TraceEventKind::kComplete, m.rank.value, -1, cs.comm.id().value, x.round);
    CompletionEvent done{now, m.rank, cs.comm.id(), x.round};
    completions.push_back(done);
    if (observer) observer->on_complete(done);
    schedule_entry(s, p);
    // Peers blocked on this rank's old round may now see the next one.
    return true;
  }

  void dispatch(const Event& e) {
    switch (e.kind) {
      case EventKind::kEnter: on_enter(e); break;
      case EventKind::kSendDone: on_send_done(e); break;
      case EventKind::kRecvArrive: on_recv(e); break;
    }
  }
};

Cluster::Cluster(ClusterConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}
Cluster::Cluster(Cluster&&) noexcept = default;
Cluster& Cluster::operator=(Cluster&&) noexcept = default;
Cluster::~Cluster() = default;

const ClusterConfig& Cluster::config() const noexcept { return impl_->config; }
std::uint64_t Cluster::now() const noexcept { return impl_->now; }
std::size_t Cluster::num_frames() const noexcept { return impl_->frames.size(); }

const ProbingFrame& Cluster::frame(RankId rank) const {
  return impl_->frames.at(rank.value);
}

const Communicator& Cluster::create_communicator(
    const std::vector<RankId>& members, Algorithm algorithm) {
  return impl_->create(CommunicatorId{impl_->next_comm_id}, members, algorithm);
}

const Communicator& Cluster::create_communicator(
    CommunicatorId id, const std::vector<RankId>& members, Algorithm algorithm) {
  return impl_->create(id, members, algorithm);
}

void Cluster::destroy_communicator(CommunicatorId id) { impl_->destroy(id); }

const Communicator& Cluster::communicator(CommunicatorId id) const {
  return impl_->comms[impl_->slot_of(id)].comm;
}

std::uint64_t Cluster::next_round(CommunicatorId id) const {
  return impl_->comms[impl_->slot_of(id)].next_round;
}

void Cluster::add_fault(const FaultSpec& fault) {
  if (fault.victim.value >= impl_->config.num_ranks) {
    throw Error(ErrorCode::kInvalidConfiguration,
                "fault victim outside the cluster");
  }
  if ((fault.kind == FaultKind::kCommSlow ||
       fault.kind == FaultKind::kMixedSlow) &&
      !(fault.bandwidth_factor > 0 && fault.bandwidth_factor < 1)) {
    throw Error(ErrorCode::kInvalidConfiguration,
                "bandwidth_factor must be in (0, 1)");
  }
  if (fault.kind == FaultKind::kHardwareFault &&
      !(fault.freeze_after_fraction >= 0 && fault.freeze_after_fraction < 1)) {
    throw Error(ErrorCode::kInvalidConfiguration,
                "freeze_after_fraction must be in [0, 1)");
  }
  impl_->faults.push_back(fault);
}

void Cluster::post_collective(CommunicatorId comm,
                              const OperationDescriptor& descriptor,
                              std::uint64_t round) {
  impl_->post(comm, descriptor, round);
}

std::vector<CompletionEvent> Cluster::advance(std::uint64_t until_us) {
  Impl& s = *impl_;
  if (until_us < s.now) {
    throw Error(ErrorCode::kInvalidInvocation,
                "cannot advance backwards from " + std::to_string(s.now));
  }
  s.completions.clear();
  while (!s.events.empty() && s.events.top().time <= until_us) {
    const Impl::Event e = s.events.top();
    s.events.pop();
    s.now = e.time;
    s.dispatch(e);
  }
  s.now = until_us;
  return std::move(s.completions);
}

std::optional<std::uint64_t> Cluster::next_event_time() const {
  if (impl_->events.empty()) return std::nullopt;
  return impl_->events.top().time;
}

void Cluster::set_observer(SimObserver* observer) { impl_->observer = observer; }
void Cluster::enable_event_trace(bool enabled) { impl_->trace_enabled = enabled; }
const std::vector<TraceEvent>& Cluster::event_trace() const {
  return impl_->trace;
}

}  // namespace colldiag
