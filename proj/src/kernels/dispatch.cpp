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

#include <atomic>
#include <cstdlib>
#include <string>

#include "styleprompt/kernels.hpp"

namespace styleprompt::kernels {
namespace {

const KernelTable* select_default() {
  if (const char* env = std::getenv("STYLEPROMPT_KERNELS"); env && std::string(env) == "scalar")
    return &scalar_table();
  if (const auto* t = avx2_table()) return t;
  if (const auto* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

ScopedIsa::ScopedIsa(const KernelTable& table) : previous_(current().exchange(&table)) {}

ScopedIsa::~ScopedIsa() { current().store(previous_); }

}  // namespace styleprompt::kernels
