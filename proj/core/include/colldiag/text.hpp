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

/// @file text.hpp
/// @brief Small parsing/formatting helpers shared by the text formats.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace colldiag {

/// Whole-string decimal parse; nothing on any stray character.
std::optional<std::uint64_t> parse_u64(std::string_view text);
std::optional<double> parse_double(std::string_view text);

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

std::vector<std::string_view> split(std::string_view text, char sep);
/// Splits on runs of spaces/tabs; no empty tokens.
std::vector<std::string_view> split_ws(std::string_view text);

}  // namespace colldiag
