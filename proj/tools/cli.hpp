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

/// @file cli.hpp
/// @brief Command-line front end: run, replay and report.

#pragma once

#include <iosfwd>

namespace colldiag::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kMismatch = 1;  // expectations not met
inline constexpr int kUsage = 2;     // bad arguments, input or I/O

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace colldiag::cli
