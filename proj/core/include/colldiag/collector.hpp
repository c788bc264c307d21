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

/// @file collector.hpp
/// @brief Snapshot transport, per-communicator buffering and trace files.
///
/// Record line (space separated, rates as exact fractions):
///
///   v rank comm round reason enter_us complete_us dur_us srate rrate
///     ch0s ch0r ... opname algo proto bytes emit_us
///
/// complete_us is "-" for heartbeats. The channel count follows from the
/// number of fields. A trace file holds, in ingest order, `config K=V`,
/// `comm ID ring|tree R0,R1,...` and record lines, then `end T`; lines
/// starting with '#' are comments.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <list>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "colldiag/analyzer.hpp"
#include "colldiag/metric_snapshot.hpp"

namespace colldiag {

inline constexpr int kSchemaVersion = 1;

struct SnapshotRecord {
  int schema_version = kSchemaVersion;
  std::uint64_t emitted_at_us = 0;
  MetricSnapshot snapshot;

  friend bool operator==(const SnapshotRecord&, const SnapshotRecord&) =
      default;

  std::string to_line() const;
  /// Throws kSchemaMismatch for a version other than 1 and kMalformedRecord
  /// for anything else that does not parse.
  static SnapshotRecord parse(std::string_view line);
};

std::string format_comm_decl(const CommunicatorDecl& decl);
/// Parses "comm ID ring|tree R0,R1,..."; members may use "a-b" ranges.
CommunicatorDecl parse_comm_decl(std::string_view line);

using TraceEntry = std::variant<CommunicatorDecl, SnapshotRecord>;

struct TraceLog {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<TraceEntry> entries;
  std::uint64_t end_us = 0;

  friend bool operator==(const TraceLog&, const TraceLog&) = default;

  std::size_t record_count() const;
  std::vector<StreamEntry> stream() const;
  /// Analyzer defaults with the stored config applied.
  AnalyzerConfig analyzer_config() const;
};

void write_trace(const TraceLog& log, std::ostream& out);
/// Strict: any bad line raises with its line number.
TraceLog read_trace(std::istream& in);
/// Throws kIo when the file cannot be opened.
TraceLog load_trace(const std::string& path);

class Collector {
 public:
  void set_config(std::vector<std::pair<std::string, std::string>> config);
  void declare_communicator(const CommunicatorDecl& decl);

  /// Appends to the raw log and to the communicator's buffer. A record with
  /// the same (rank, trace id, reason) as a buffered one replaces it and
  /// moves to the back. Returns false (and counts a parse error) for a
  /// record with the wrong schema version.
  bool ingest(const SnapshotRecord& record);
  /// Parses and ingests one wire line; malformed input is counted, never
  /// thrown.
  bool ingest_line(std::string_view line);

  /// Buffered records of `comm` with round in [first, last], in ingest order.
  std::vector<SnapshotRecord> query(CommunicatorId comm, std::uint64_t first,
                                    std::uint64_t last) const;

  void set_end(std::uint64_t end_us) { log_.end_us = end_us; }
  const TraceLog& log() const noexcept { return log_; }
  std::uint64_t parse_errors() const noexcept { return parse_errors_; }
  std::uint64_t ingested() const noexcept { return ingested_; }

  /// Writes the raw log; returns the number of records written. Throws kIo.
  std::size_t persist(const std::string& path) const;

 private:
  using Key = std::tuple<std::uint32_t, std::uint64_t, SnapshotReason>;
  struct Buffer {
    std::list<SnapshotRecord> records;
    std::map<Key, std::list<SnapshotRecord>::iterator> index;
  };

  TraceLog log_;
  std::map<std::uint64_t, Buffer> buffers_;
  std::uint64_t parse_errors_ = 0;
  std::uint64_t ingested_ = 0;
};

}  // namespace colldiag
