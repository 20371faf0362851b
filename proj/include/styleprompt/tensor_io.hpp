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

// Tensor binary record:
//   8 bytes  magic "SPTENSOR"
//   u64 LE   rank
//   u64 LE   dims[rank]
//   f64 LE   values, row-major

#include <filesystem>
#include <iosfwd>

#include "styleprompt/tensor.hpp"

namespace styleprompt {

inline constexpr char kTensorMagic[8] = {'S', 'P', 'T', 'E', 'N', 'S', 'O', 'R'};

void write_tensor(std::ostream& out, const Tensor& t);
/// Throws Error(kIntegrity) on bad magic, truncated data or absurd sizes.
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Little-endian scalar helpers shared by the container formats.
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

}  // namespace styleprompt
