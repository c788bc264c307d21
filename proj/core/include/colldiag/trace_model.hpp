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

/// @file trace_model.hpp
/// @brief Round identifiers and the per-rank probing frame.
///
/// A TraceId names one round of one communicator without any central
/// registry: every member derives the same 16 bytes from the communicator id
/// and its local operation counter. The ProbingFrame is the fixed 1,184-byte
/// record a rank's kernel executor writes Send/Recv progress into; a sampler
/// thread reads it concurrently.
///
/// Wire layout (little-endian throughout):
///
///   TraceId   [0,8) comm_id  [8,12) op_counter  [12,16) extension
///   Frame     [0,32) header = op_counter, mode_flag, kernel_index,
///                             num_channels (u64 each)
///             [32 + 144*b, 32 + 144*(b+1)) block b, b in [0,8)
///   Block     [0,16) trace id, then channel c at 16 + 16*c:
///                    send_count (u64), recv_count (u64)

#pragma once

#include <array>
#include <atomic>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace colldiag {

inline constexpr std::size_t kTraceIdBytes = 16;
inline constexpr std::size_t kHeaderBytes = 32;
inline constexpr std::size_t kBlockBytes = 144;
inline constexpr std::size_t kNumBlocks = 8;
inline constexpr std::size_t kMaxChannels = 8;
inline constexpr std::size_t kBodyBytes = kNumBlocks * kBlockBytes;
inline constexpr std::size_t kFrameBytes = kHeaderBytes + kBodyBytes;

static_assert(kBodyBytes == 1152);
static_assert(kFrameBytes == 1184);

/// Extension-field status bits.
inline constexpr std::uint32_t kStatusEntered = 1u << 0;
inline constexpr std::uint32_t kStatusComplete = 1u << 1;

struct RankId {
  std::uint32_t value = 0;
  friend auto operator<=>(const RankId&, const RankId&) = default;
};

struct CommunicatorId {
  std::uint64_t value = 0;
  friend auto operator<=>(const CommunicatorId&, const CommunicatorId&) =
      default;
};

struct TraceId {
  CommunicatorId comm_id;
  std::uint32_t op_counter = 0;
  std::uint32_t extension = 0;
  friend auto operator<=>(const TraceId&, const TraceId&) = default;
};

/// The op counter is truncated modulo 2^32; the frame header keeps the full
/// 64-bit count.
TraceId make_trace_id(CommunicatorId comm_id, std::uint64_t op_counter,
                      std::uint32_t extension = 0) noexcept;

std::array<std::uint8_t, kTraceIdBytes> encode_trace_id(const TraceId& t);
TraceId decode_trace_id(std::span<const std::uint8_t> bytes);

/// op_counter mod num_blocks; throws kInvalidConfiguration for 0 blocks.
std::uint64_t block_index(std::uint64_t op_counter, std::uint64_t num_blocks);

enum class OpName : std::uint8_t {
  kAllReduce,
  kAllGather,
  kReduceScatter,
  kAlltoAll,
  kBroadcast,
  kSend,
  kRecv,
};
enum class Algorithm : std::uint8_t { kRing, kTree };
enum class Protocol : std::uint8_t { kSimple, kLL, kLL128 };

std::string_view to_string(OpName op);
std::string_view to_string(Algorithm algo);
std::string_view to_string(Protocol proto);
OpName parse_op_name(std::string_view text);
Algorithm parse_algorithm(std::string_view text);
Protocol parse_protocol(std::string_view text);

/// Static per-round metadata (the "operation type set").
struct OperationDescriptor {
  OpName op = OpName::kAllReduce;
  Algorithm algorithm = Algorithm::kRing;
  Protocol protocol = Protocol::kSimple;
  std::uint64_t data_size_bytes = 1;

  friend auto operator<=>(const OperationDescriptor&,
                          const OperationDescriptor&) = default;
  std::string to_string() const;
};

enum class Direction : std::uint8_t { kSend, kRecv };

struct ChannelCounts {
  std::uint64_t send = 0;
  std::uint64_t recv = 0;
  friend bool operator==(const ChannelCounts&, const ChannelCounts&) = default;
};

struct FrameHeader {
  std::uint64_t op_counter = 0;
  std::uint64_t mode_flag = 0;
  std::uint64_t kernel_index = 0;
  std::uint64_t num_channels = 0;
  friend bool operator==(const FrameHeader&, const FrameHeader&) = default;
};

/// Point-in-time copy of one block.
struct BlockView {
  TraceId trace_id;
  std::array<ChannelCounts, kMaxChannels> channels{};
  friend bool operator==(const BlockView&, const BlockView&) = default;
};

struct BlockHandle {
  std::size_t block = 0;
};

/// One rank's reusable probing frame.
///
/// Single writer (the rank's kernel executor), any number of readers. Every
/// field is an atomic 64-bit word: readers never block the writer and each
/// individual counter they observe is valid and monotone within a round, but
/// a multi-field read may straddle a concurrent write.
class ProbingFrame {
 public:
  explicit ProbingFrame(std::uint64_t num_channels = kMaxChannels,
                        bool measurement_enabled = true);
  ProbingFrame(const ProbingFrame& other);
  ProbingFrame& operator=(const ProbingFrame& other);

  FrameHeader header() const noexcept;
  std::uint64_t num_channels() const noexcept {
    return num_channels_.load(std::memory_order_acquire);
  }
  bool measurement_enabled() const noexcept {
    return mode_flag_.load(std::memory_order_acquire) != 0;
  }

  /// Claims the block for the round named by `trace_id`, whose counter must
  /// equal the header's expected next counter. Zeroes every channel slot of
  /// the block and advances the header.
  BlockHandle begin_round(const TraceId& trace_id);

  /// Adds `delta` to one counter of the block. Only the writer may call this.
  void record(BlockHandle handle, std::size_t channel, Direction direction,
              std::uint64_t delta = 1);

  /// ORs status bits into the block's trace-id extension field.
  void mark_status(BlockHandle handle, std::uint32_t flags);

  BlockView read_block(std::size_t block) const;

  /// Returns the frame to its freshly-constructed state (new communicator).
  void reset(std::uint64_t num_channels);

 private:
  friend ProbingFrame decode_frame(std::span<const std::uint8_t> bytes);

  struct Block {
    std::atomic<std::uint64_t> comm_id{0};
    std::atomic<std::uint64_t> counter_and_extension{0};
    std::array<std::atomic<std::uint64_t>, 2 * kMaxChannels> slots{};
  };

  void copy_from(const ProbingFrame& other) noexcept;

  std::atomic<std::uint64_t> op_counter_{0};
  std::atomic<std::uint64_t> mode_flag_{0};
  std::atomic<std::uint64_t> kernel_index_{0};
  std::atomic<std::uint64_t> num_channels_{0};
  std::array<Block, kNumBlocks> blocks_{};
};

std::array<std::uint8_t, kFrameBytes> encode_frame(const ProbingFrame& frame);
ProbingFrame decode_frame(std::span<const std::uint8_t> bytes);

}  // namespace colldiag
