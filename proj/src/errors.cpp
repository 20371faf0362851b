// Copyright 2026 The StylePrompt Authors. All Rights Reserved.
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

#include "styleprompt/errors.hpp"

namespace styleprompt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kNumericDomain: return "numeric_domain";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kVocabulary: return "vocabulary";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kCompatibility: return "compatibility";
    case ErrorKind::kTraining: return "training";
    case ErrorKind::kInvariant: return "invariant";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kPrerequisite: return "missing_prerequisite";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace styleprompt
