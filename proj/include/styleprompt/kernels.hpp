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

// Dense inner loops behind the tensor library. Every kernel has a portable
// scalar reference; vector variants are selected once at startup from CPU
// features and must agree with the reference to rounding (see
// tests/unit/kernels_test.cpp).
//
// Row independence: for gemm_nn and gemm_nt, output row i depends only on row i
// of the left operand, never on the number or position of other rows. The
// masked-prompt equivalence checks rely on this.

#include <cstddef>
#include <string_view>

namespace styleprompt::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view to_string(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // c[m×n] (+)= a[m×k] · b[k×n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate);
  // c[m×n] (+)= a[m×k] · b[n×k]ᵀ
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate);
  // c[m×n] (+)= a[k×m]ᵀ · b[k×n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate);
};

const KernelTable& scalar_table();
/// nullptr when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// The table used by the tensor library. Chosen on first use: the best
/// supported variant, unless STYLEPROMPT_KERNELS=scalar is set.
const KernelTable& active();

/// Overrides the active table for the lifetime of the object (tests, verify).
class ScopedIsa {
 public:
  explicit ScopedIsa(const KernelTable& table);
  ~ScopedIsa();
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  const KernelTable* previous_;
};

}  // namespace styleprompt::kernels
