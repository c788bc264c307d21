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

#include "colldiag/rational.hpp"

#include <limits>
#include <numeric>

#include "colldiag/error.hpp"

namespace colldiag {

Rational::Rational(std::uint64_t num, std::uint64_t den) {
  if (den == 0) {
    throw Error(ErrorCode::kInvalidConfiguration, "zero denominator");
  }
  if (num == 0) {
    num_ = 0;
    den_ = 1;
    return;
  }
  const std::uint64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

std::string Rational::to_string() const {
  return std::to_string(num_) + "/" + std::to_string(den_);
}

Rational Rational::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos || slash == 0 ||
      slash + 1 == text.size()) {
    throw Error(ErrorCode::kMalformedRecord,
                "expected num/den, got '" + std::string(text) + "'");
  }
  auto parse_u64 = [&](std::string_view digits) {
    std::uint64_t v = 0;
    for (char c : digits) {
      if (c < '0' || c > '9') {
        throw Error(ErrorCode::kMalformedRecord,
                    "bad digit in '" + std::string(text) + "'");
      }
      const std::uint64_t d = static_cast<std::uint64_t>(c - '0');
      if (v > (std::numeric_limits<std::uint64_t>::max() - d) / 10) {
        throw Error(ErrorCode::kMalformedRecord,
                    "overflow in '" + std::string(text) + "'");
      }
      v = v * 10 + d;
    }
    return v;
  };
  const std::uint64_t num = parse_u64(text.substr(0, slash));
  const std::uint64_t den = parse_u64(text.substr(slash + 1));
  if (den == 0) {
    throw Error(ErrorCode::kMalformedRecord, "zero denominator");
  }
  return Rational(num, den);
}

}  // namespace colldiag
