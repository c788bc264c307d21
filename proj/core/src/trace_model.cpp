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

#include "colldiag/trace_model.hpp"

#include <sstream>

#include "colldiag/error.hpp"

namespace colldiag {

namespace {

constexpr auto kAcquire = std::memory_order_acquire;
constexpr auto kRelease = std::memory_order_release;
constexpr auto kRelaxed = std::memory_order_relaxed;

void put_u64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void put_u32(std::uint8_t* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64(const std::uint8_t* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(const std::uint8_t* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
  return v;
}

std::uint64_t pack(std::uint32_t counter, std::uint32_t extension) {
  return static_cast<std::uint64_t>(counter) |
         (static_cast<std::uint64_t>(extension) << 32);
}

void check_channels(std::uint64_t num_channels) {
  if (num_channels < 1 || num_channels > kMaxChannels) {
    throw Error(ErrorCode::kInvalidConfiguration,
                "num_channels must be in [1, 8], got " +
                    std::to_string(num_channels));
  }
}

}  // namespace

TraceId make_trace_id(CommunicatorId comm_id, std::uint64_t op_counter,
                      std::uint32_t extension) noexcept {
  return TraceId{comm_id, static_cast<std::uint32_t>(op_counter), extension};
}

std::array<std::uint8_t, kTraceIdBytes> encode_trace_id(const TraceId& t) {
  std::array<std::uint8_t, kTraceIdBytes> out{};
  put_u64(out.data(), t.comm_id.value);
  put_u32(out.data() + 8, t.op_counter);
  put_u32(out.data() + 12, t.extension);
  return out;
}

TraceId decode_trace_id(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kTraceIdBytes) {
    throw Error(ErrorCode::kMalformedRecord,
                "trace id needs 16 bytes, got " + std::to_string(bytes.size()));
  }
  return TraceId{CommunicatorId{get_u64(bytes.data())},
                 get_u32(bytes.data() + 8), get_u32(bytes.data() + 12)};
}

std::uint64_t block_index(std::uint64_t op_counter, std::uint64_t num_blocks) {
  if (num_blocks == 0) {
    throw Error(ErrorCode::kInvalidConfiguration, "num_blocks must be > 0");
  }
  return op_counter % num_blocks;
}

std::string_view to_string(OpName op) {
  switch (op) {
    case OpName::kAllReduce: return "AllReduce";
    case OpName::kAllGather: return "AllGather";
    case OpName::kReduceScatter: return "ReduceScatter";
    case OpName::kAlltoAll: return "AlltoAll";
    case OpName::kBroadcast: return "Broadcast";
    case OpName::kSend: return "Send";
    case OpName::kRecv: return "Recv";
  }
  return "?";
}

std::string_view to_string(Algorithm algo) {
  return algo == Algorithm::kRing ? "Ring" : "Tree";
}

std::string_view to_string(Protocol proto) {
  switch (proto) {
    case Protocol::kSimple: return "Simple";
    case Protocol::kLL: return "LL";
    case Protocol::kLL128: return "LL128";
  }
  return "?";
}

namespace {

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto lower = [](char c) {
      return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    };
    if (lower(a[i]) != lower(b[i])) return false;
  }
  return true;
}

}  // namespace

OpName parse_op_name(std::string_view text) {
  for (auto op : {OpName::kAllReduce, OpName::kAllGather,
                  OpName::kReduceScatter, OpName::kAlltoAll,
                  OpName::kBroadcast, OpName::kSend, OpName::kRecv}) {
    if (iequals(text, to_string(op))) return op;
  }
  throw Error(ErrorCode::kMalformedRecord,
              "unknown operation '" + std::string(text) + "'");
}

Algorithm parse_algorithm(std::string_view text) {
  if (iequals(text, "ring")) return Algorithm::kRing;
  if (iequals(text, "tree")) return Algorithm::kTree;
  throw Error(ErrorCode::kMalformedRecord,
              "unknown algorithm '" + std::string(text) + "'");
}

Protocol parse_protocol(std::string_view text) {
  for (auto p : {Protocol::kSimple, Protocol::kLL, Protocol::kLL128}) {
    if (iequals(text, to_string(p))) return p;
  }
  throw Error(ErrorCode::kMalformedRecord,
              "unknown protocol '" + std::string(text) + "'");
}

std::string OperationDescriptor::to_string() const {
  std::ostringstream os;
  os << colldiag::to_string(op) << ' ' << colldiag::to_string(algorithm) << ' '
     << colldiag::to_string(protocol) << ' ' << data_size_bytes;
  return os.str();
}

ProbingFrame::ProbingFrame(std::uint64_t num_channels,
                           bool measurement_enabled) {
  check_channels(num_channels);
  num_channels_.store(num_channels, kRelaxed);
  mode_flag_.store(measurement_enabled ? 1 : 0, kRelaxed);
}

ProbingFrame::ProbingFrame(const ProbingFrame& other) { copy_from(other); }

ProbingFrame& ProbingFrame::operator=(const ProbingFrame& other) {
  if (this != &other) copy_from(other);
  return *this;
}

void ProbingFrame::copy_from(const ProbingFrame& other) noexcept {
  op_counter_.store(other.op_counter_.load(kAcquire), kRelaxed);
  mode_flag_.store(other.mode_flag_.load(kAcquire), kRelaxed);
  kernel_index_.store(other.kernel_index_.load(kAcquire), kRelaxed);
  num_channels_.store(other.num_channels_.load(kAcquire), kRelaxed);
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    const Block& src = other.blocks_[b];
    Block& dst = blocks_[b];
    dst.comm_id.store(src.comm_id.load(kAcquire), kRelaxed);
    dst.counter_and_extension.store(src.counter_and_extension.load(kAcquire),
                                    kRelaxed);
    for (std::size_t s = 0; s < dst.slots.size(); ++s) {
      dst.slots[s].store(src.slots[s].load(kAcquire), kRelaxed);
    }
  }
}

FrameHeader ProbingFrame::header() const noexcept {
  return FrameHeader{op_counter_.load(kAcquire), mode_flag_.load(kAcquire),
                     kernel_index_.load(kAcquire),
                     num_channels_.load(kAcquire)};
}

BlockHandle ProbingFrame::begin_round(const TraceId& trace_id) {
  const std::uint64_t expected = op_counter_.load(kRelaxed);
  if (trace_id.op_counter != static_cast<std::uint32_t>(expected)) {
    throw Error(ErrorCode::kTraceDesynchronization,
                "frame expects round " + std::to_string(expected) +
                    ", got " + std::to_string(trace_id.op_counter));
  }
  const auto block = static_cast<std::size_t>(block_index(expected, kNumBlocks));
  Block& b = blocks_[block];
  for (auto& slot : b.slots) slot.store(0, kRelease);
  b.comm_id.store(trace_id.comm_id.value, kRelease);
  b.counter_and_extension.store(pack(trace_id.op_counter, trace_id.extension),
                                kRelease);
  kernel_index_.store(block, kRelease);
  op_counter_.store(expected + 1, kRelease);
  return BlockHandle{block};
}

void ProbingFrame::record(BlockHandle handle, std::size_t channel,
                          Direction direction, std::uint64_t delta) {
  if (channel >= num_channels_.load(kRelaxed)) {
    throw Error(ErrorCode::kInvalidChannel,
                "channel " + std::to_string(channel) + " >= num_channels " +
                    std::to_string(num_channels_.load(kRelaxed)));
  }
  auto& slot = blocks_[handle.block]
                   .slots[2 * channel + (direction == Direction::kSend ? 0 : 1)];
  // Single writer: a plain load/store pair is enough and never stalls readers.
  slot.store(slot.load(kRelaxed) + delta, kRelease);
}

void ProbingFrame::mark_status(BlockHandle handle, std::uint32_t flags) {
  auto& word = blocks_[handle.block].counter_and_extension;
  word.store(word.load(kRelaxed) | (static_cast<std::uint64_t>(flags) << 32),
             kRelease);
}

BlockView ProbingFrame::read_block(std::size_t block) const {
  const Block& b = blocks_.at(block);
  BlockView view;
  const std::uint64_t packed = b.counter_and_extension.load(kAcquire);
  view.trace_id = TraceId{CommunicatorId{b.comm_id.load(kAcquire)},
                          static_cast<std::uint32_t>(packed),
                          static_cast<std::uint32_t>(packed >> 32)};
  for (std::size_t c = 0; c < kMaxChannels; ++c) {
    view.channels[c].send = b.slots[2 * c].load(kAcquire);
    view.channels[c].recv = b.slots[2 * c + 1].load(kAcquire);
  }
  return view;
}

void ProbingFrame::reset(std::uint64_t num_channels) {
  check_channels(num_channels);
  for (auto& b : blocks_) {
    b.comm_id.store(0, kRelease);
    b.counter_and_extension.store(0, kRelease);
    for (auto& slot : b.slots) slot.store(0, kRelease);
  }
  kernel_index_.store(0, kRelease);
  op_counter_.store(0, kRelease);
  num_channels_.store(num_channels, kRelease);
}

std::array<std::uint8_t, kFrameBytes> encode_frame(const ProbingFrame& frame) {
  std::array<std::uint8_t, kFrameBytes> out{};
  const FrameHeader h = frame.header();
  put_u64(out.data() + 0, h.op_counter);
  put_u64(out.data() + 8, h.mode_flag);
  put_u64(out.data() + 16, h.kernel_index);
  put_u64(out.data() + 24, h.num_channels);
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    std::uint8_t* base = out.data() + kHeaderBytes + kBlockBytes * b;
    const BlockView view = frame.read_block(b);
    const auto id = encode_trace_id(view.trace_id);
    std::copy(id.begin(), id.end(), base);
    for (std::size_t c = 0; c < kMaxChannels; ++c) {
      put_u64(base + 16 + 16 * c, view.channels[c].send);
      put_u64(base + 24 + 16 * c, view.channels[c].recv);
    }
  }
  return out;
}

ProbingFrame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kFrameBytes) {
    throw Error(ErrorCode::kMalformedRecord,
                "frame needs 1184 bytes, got " + std::to_string(bytes.size()));
  }
  const std::uint64_t channels = get_u64(bytes.data() + 24);
  if (channels < 1 || channels > kMaxChannels) {
    throw Error(ErrorCode::kMalformedRecord,
                "frame header num_channels out of range: " +
                    std::to_string(channels));
  }
  ProbingFrame frame(channels, true);
  frame.op_counter_.store(get_u64(bytes.data() + 0), kRelaxed);
  frame.mode_flag_.store(get_u64(bytes.data() + 8), kRelaxed);
  frame.kernel_index_.store(get_u64(bytes.data() + 16), kRelaxed);
  for (std::size_t b = 0; b < kNumBlocks; ++b) {
    const std::uint8_t* base = bytes.data() + kHeaderBytes + kBlockBytes * b;
    auto& block = frame.blocks_[b];
    block.comm_id.store(get_u64(base), kRelaxed);
    block.counter_and_extension.store(pack(get_u32(base + 8), get_u32(base + 12)),
                                      kRelaxed);
    for (std::size_t c = 0; c < kMaxChannels; ++c) {
      block.slots[2 * c].store(get_u64(base + 16 + 16 * c), kRelaxed);
      block.slots[2 * c + 1].store(get_u64(base + 24 + 16 * c), kRelaxed);
    }
  }
  return frame;
}

}  // namespace colldiag
