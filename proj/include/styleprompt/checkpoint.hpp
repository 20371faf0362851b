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

#pragma once

// Versioned checkpoint container:
//   8 bytes  magic "SPCHKPT1"
//   u64 LE   format version
//   u64 LE   header length, then UTF-8 JSON header
//   u64 LE   record count; each record is a u64 name length, the name and
//            a tensor record
//   u64 LE   FNV-1a of every preceding byte

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "styleprompt/tensor.hpp"

namespace styleprompt {

inline constexpr std::uint64_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;
  void put(std::string name, Tensor value);
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint");

/// Writes through a temporary file and rename, so readers never see a
/// partial checkpoint.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a_bytes(std::string_view bytes, std::uint64_t seed = 14695981039346656037ULL);

}  // namespace styleprompt
