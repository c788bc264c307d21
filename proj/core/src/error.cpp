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

#include "colldiag/error.hpp"

namespace colldiag {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedRecord: return "malformed-record";
    case ErrorCode::kInvalidConfiguration: return "invalid-configuration";
    case ErrorCode::kTraceDesynchronization: return "trace-desynchronization";
    case ErrorCode::kInvalidChannel: return "invalid-channel";
    case ErrorCode::kUnsupportedOperation: return "unsupported-operation";
    case ErrorCode::kScenarioSyntax: return "scenario-syntax";
    case ErrorCode::kNoRound: return "no-round";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kInvalidBaseline: return "invalid-baseline";
    case ErrorCode::kOrdering: return "ordering";
    case ErrorCode::kUnknownCommunicator: return "unknown-communicator";
    case ErrorCode::kInvalidInvocation: return "invalid-invocation";
    case ErrorCode::kInsufficientEvidence: return "insufficient-evidence";
    case ErrorCode::kSchemaMismatch: return "schema-mismatch";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace colldiag
