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

#include "styleprompt/kernels.hpp"

#if defined(__aarch64__)
#define STYLEPROMPT_NEON 1
#include <arm_neon.h>
#else
#define STYLEPROMPT_NEON 0
#endif

#include <cmath>

namespace styleprompt::kernels {

#if STYLEPROMPT_NEON
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0);
  float64x2_t s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(a + i), vld1q_f64(b + i));
    s1 = vfmaq_f64(s1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void gemm_nn_neon(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    std::size_t j = 0;
    for (; j + 2 <= n; j += 2) {
      float64x2_t acc = accumulate ? vld1q_f64(ci + j) : vdupq_n_f64(0.0);
      for (std::size_t p = 0; p < k; ++p) acc = vfmaq_f64(acc, vdupq_n_f64(ai[p]), vld1q_f64(b + p * n + j));
      vst1q_f64(ci + j, acc);
    }
    for (; j < n; ++j) {
      double s = accumulate ? ci[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s = std::fma(ai[p], b[p * n + j], s);
      ci[j] = s;
    }
  }
}

void gemm_nt_neon(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dot_neon(a + i * k, b + j * k, k);
      c[i * n + j] = accumulate ? c[i * n + j] + v : v;
    }
}

void gemm_tn_neon(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                  bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) axpy_neon(a[p * m + i], b + p * n, c + i * n, n);
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable table{Isa::kNeon, dot_neon, axpy_neon, gemm_nn_neon, gemm_nt_neon, gemm_tn_neon};
  return &table;
}

#else

const KernelTable* neon_table() { return nullptr; }

#endif

}  // namespace styleprompt::kernels
