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

#include "colldiag/collector.hpp"

#include <fstream>
#include <sstream>

#include "colldiag/error.hpp"
#include "colldiag/text.hpp"

namespace colldiag {

namespace {

constexpr std::size_t kFixedFields = 15;

[[noreturn]] void malformed(const std::string& why) {
  throw Error(ErrorCode::kMalformedRecord, why);
}

std::uint64_t field_u64(std::string_view text, const char* name) {
  auto v = parse_u64(text);
  if (!v) malformed(std::string("bad ") + name + " '" + std::string(text) + "'");
  return *v;
}

}  // namespace

std::string SnapshotRecord::to_line() const {
  const MetricSnapshot& s = snapshot;
  std::ostringstream os;
  os << schema_version << ' ' << s.rank.value << ' ' << s.comm().value << ' '
     << s.round << ' ' << to_string(s.reason) << ' ' << s.enter_time_us << ' ';
  if (s.complete_time_us) {
    os << *s.complete_time_us;
  } else {
    os << '-';
  }
  os << ' ' << s.duration_us << ' ' << s.send_rate.to_string() << ' '
     << s.recv_rate.to_string();
  for (const auto& c : s.channels) os << ' ' << c.send << ' ' << c.recv;
  os << ' ' << to_string(s.descriptor.op) << ' '
     << to_string(s.descriptor.algorithm) << ' '
     << to_string(s.descriptor.protocol) << ' ' << s.descriptor.data_size_bytes
     << ' ' << emitted_at_us;
  return os.str();
}

SnapshotRecord SnapshotRecord::parse(std::string_view line) {
  const auto f = split_ws(line);
  if (f.empty()) malformed("empty record");
  const auto version = parse_u64(f[0]);
  if (!version) malformed("bad schema version '" + std::string(f[0]) + "'");
  if (*version != kSchemaVersion) {
    throw Error(ErrorCode::kSchemaMismatch,
                "schema version " + std::to_string(*version) + ", expected " +
                    std::to_string(kSchemaVersion));
  }
  if (f.size() < kFixedFields + 2 || (f.size() - kFixedFields) % 2 != 0) {
    malformed("record has " + std::to_string(f.size()) + " fields");
  }
  const std::size_t channels = (f.size() - kFixedFields) / 2;
  if (channels > kMaxChannels) malformed("too many channels");

  SnapshotRecord r;
  MetricSnapshot& s = r.snapshot;
  const auto rank = field_u64(f[1], "rank");
  if (rank > UINT32_MAX) malformed("rank out of range");
  s.rank = RankId{static_cast<std::uint32_t>(rank)};
  const CommunicatorId comm{field_u64(f[2], "comm")};
  s.round = field_u64(f[3], "round");
  s.trace_id = make_trace_id(comm, s.round, 0);
  try {
    s.reason = parse_snapshot_reason(f[4]);
  } catch (const Error& e) {
    malformed(e.what());
  }
  s.enter_time_us = field_u64(f[5], "enter_us");
  if (f[6] != "-") {
    s.complete_time_us = field_u64(f[6], "complete_us");
    if (*s.complete_time_us < s.enter_time_us) {
      malformed("completion precedes entry");
    }
  }
  if ((s.reason == SnapshotReason::kCompletion) != s.complete_time_us.has_value()) {
    malformed("completion time must be present exactly for completions");
  }
  s.duration_us = field_u64(f[7], "dur_us");
  s.send_rate = Rational::parse(f[8]);
  s.recv_rate = Rational::parse(f[9]);
  for (std::size_t c = 0; c < channels; ++c) {
    s.channels.push_back(ChannelCounts{field_u64(f[10 + 2 * c], "count"),
                                       field_u64(f[11 + 2 * c], "count")});
  }
  const std::size_t d = 10 + 2 * channels;
  s.descriptor.op = parse_op_name(f[d]);
  s.descriptor.algorithm = parse_algorithm(f[d + 1]);
  s.descriptor.protocol = parse_protocol(f[d + 2]);
  s.descriptor.data_size_bytes = field_u64(f[d + 3], "bytes");
  r.emitted_at_us = field_u64(f[d + 4], "emit_us");
  return r;
}

std::string format_comm_decl(const CommunicatorDecl& decl) {
  std::string out = "comm " + std::to_string(decl.id.value) + ' ' +
                    (decl.algorithm == Algorithm::kRing ? "ring" : "tree") +
                    ' ';
  for (std::size_t i = 0; i < decl.members.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(decl.members[i].value);
  }
  return out;
}

CommunicatorDecl parse_comm_decl(std::string_view line) {
  const auto f = split_ws(line);
  if (f.size() != 4 || f[0] != "comm") {
    malformed("expected 'comm ID ring|tree R0,R1,...'");
  }
  CommunicatorDecl decl;
  decl.id = CommunicatorId{field_u64(f[1], "communicator id")};
  if (f[2] == "ring") {
    decl.algorithm = Algorithm::kRing;
  } else if (f[2] == "tree") {
    decl.algorithm = Algorithm::kTree;
  } else {
    malformed("algorithm must be ring or tree");
  }
  for (auto part : split(f[3], ',')) {
    const auto dash = part.find('-');
    if (dash == std::string_view::npos) {
      const auto v = field_u64(part, "rank");
      if (v > UINT32_MAX) malformed("rank out of range");
      decl.members.push_back(RankId{static_cast<std::uint32_t>(v)});
      continue;
    }
    const auto lo = field_u64(part.substr(0, dash), "rank");
    const auto hi = field_u64(part.substr(dash + 1), "rank");
    if (lo > hi || hi > UINT32_MAX) malformed("bad rank range");
    for (auto v = lo; v <= hi; ++v) {
      decl.members.push_back(RankId{static_cast<std::uint32_t>(v)});
    }
  }
  return decl;
}

// ---------------------------------------------------------------------------

std::size_t TraceLog::record_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += std::holds_alternative<SnapshotRecord>(e);
  return n;
}

std::vector<StreamEntry> TraceLog::stream() const {
  std::vector<StreamEntry> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    if (const auto* decl = std::get_if<CommunicatorDecl>(&e)) {
      out.push_back({0, *decl});
    } else {
      const auto& r = std::get<SnapshotRecord>(e);
      out.push_back({r.emitted_at_us, r.snapshot});
    }
  }
  return out;
}

AnalyzerConfig TraceLog::analyzer_config() const {
  AnalyzerConfig out;
  for (const auto& [k, v] : config) out.set(k, v);
  out.validate();
  return out;
}

void write_trace(const TraceLog& log, std::ostream& out) {
  out << "# colldiag trace v" << kSchemaVersion << '\n';
  for (const auto& [k, v] : log.config) out << "config " << k << '=' << v << '\n';
  for (const auto& e : log.entries) {
    if (const auto* decl = std::get_if<CommunicatorDecl>(&e)) {
      out << format_comm_decl(*decl) << '\n';
    } else {
      out << std::get<SnapshotRecord>(e).to_line() << '\n';
    }
  }
  out << "end " << log.end_us << '\n';
}

TraceLog read_trace(std::istream& in) {
  TraceLog log;
  std::string line;
  std::size_t line_no = 0;
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_ws(line);
    if (fields.empty() || fields[0].front() == '#') continue;
    try {
      if (ended) malformed("content after 'end'");
      if (fields[0] == "config") {
        if (fields.size() != 2) malformed("expected 'config KEY=VALUE'");
        const auto eq = fields[1].find('=');
        if (eq == std::string_view::npos) malformed("expected 'config KEY=VALUE'");
        log.config.emplace_back(std::string(fields[1].substr(0, eq)),
                                std::string(fields[1].substr(eq + 1)));
      } else if (fields[0] == "comm") {
        log.entries.emplace_back(parse_comm_decl(line));
      } else if (fields[0] == "end") {
        if (fields.size() != 2) malformed("expected 'end T'");
        log.end_us = field_u64(fields[1], "end time");
        ended = true;
      } else {
        log.entries.emplace_back(SnapshotRecord::parse(line));
      }
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  try {
    (void)log.analyzer_config();
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformedRecord,
                std::string("bad config in trace: ") + e.what());
  }
  return log;
}

TraceLog load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_trace(in);
}

// ---------------------------------------------------------------------------

void Collector::set_config(
    std::vector<std::pair<std::string, std::string>> config) {
  log_.config = std::move(config);
}

void Collector::declare_communicator(const CommunicatorDecl& decl) {
  log_.entries.emplace_back(decl);
}

bool Collector::ingest(const SnapshotRecord& record) {
  if (record.schema_version != kSchemaVersion) {
    ++parse_errors_;
    return false;
  }
  ++ingested_;
  log_.entries.emplace_back(record);
  const MetricSnapshot& s = record.snapshot;
  Buffer& b = buffers_[s.comm().value];
  const Key key{s.rank.value, s.round, s.reason};
  if (auto it = b.index.find(key); it != b.index.end()) {
    b.records.erase(it->second);
  }
  b.records.push_back(record);
  b.index[key] = std::prev(b.records.end());
  return true;
}

bool Collector::ingest_line(std::string_view line) {
  try {
    return ingest(SnapshotRecord::parse(line));
  } catch (const Error&) {
    ++parse_errors_;
    return false;
  }
}

std::vector<SnapshotRecord> Collector::query(CommunicatorId comm,
                                             std::uint64_t first,
                                             std::uint64_t last) const {
  std::vector<SnapshotRecord> out;
  auto it = buffers_.find(comm.value);
  if (it == buffers_.end()) return out;
  for (const auto& r : it->second.records) {
    if (r.snapshot.round >= first && r.snapshot.round <= last) out.push_back(r);
  }
  return out;
}

std::size_t Collector::persist(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  write_trace(log_, out);
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
  return log_.record_count();
}

}  // namespace colldiag
