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

#if defined(__x86_64__) || defined(_M_X64)
#define STYLEPROMPT_X86 1
#include <immintrin.h>
#else
#define STYLEPROMPT_X86 0
#endif

#include <cmath>

namespace styleprompt::kernels {

#if STYLEPROMPT_X86
namespace {

#define SP_AVX2 __attribute__((target("avx2,fma")))

SP_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

SP_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

SP_AVX2 void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

// One output row: c_row (+)= Σ_p a_row[p] · b[p, :]. Columns in blocks of 16.
SP_AVX2 inline void row_times_matrix(std::size_t n, std::size_t k, const double* a_row, const double* b,
                                     double* c_row, bool accumulate) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256d c0, c1, c2, c3;
    if (accumulate) {
      c0 = _mm256_loadu_pd(c_row + j);
      c1 = _mm256_loadu_pd(c_row + j + 4);
      c2 = _mm256_loadu_pd(c_row + j + 8);
      c3 = _mm256_loadu_pd(c_row + j + 12);
    } else {
      c0 = c1 = c2 = c3 = _mm256_setzero_pd();
    }
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d s = _mm256_broadcast_sd(a_row + p);
      const double* bp = b + p * n + j;
      c0 = _mm256_fmadd_pd(s, _mm256_loadu_pd(bp), c0);
      c1 = _mm256_fmadd_pd(s, _mm256_loadu_pd(bp + 4), c1);
      c2 = _mm256_fmadd_pd(s, _mm256_loadu_pd(bp + 8), c2);
      c3 = _mm256_fmadd_pd(s, _mm256_loadu_pd(bp + 12), c3);
    }
    _mm256_storeu_pd(c_row + j, c0);
    _mm256_storeu_pd(c_row + j + 4, c1);
    _mm256_storeu_pd(c_row + j + 8, c2);
    _mm256_storeu_pd(c_row + j + 12, c3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = accumulate ? _mm256_loadu_pd(c_row + j) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p)
      c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a_row + p), _mm256_loadu_pd(b + p * n + j), c0);
    _mm256_storeu_pd(c_row + j, c0);
  }
  for (; j < n; ++j) {
    double s = accumulate ? c_row[j] : 0.0;
    for (std::size_t p = 0; p < k; ++p) s = std::fma(a_row[p], b[p * n + j], s);
    c_row[j] = s;
  }
}

SP_AVX2 void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) row_times_matrix(n, k, a + i * k, b, c + i * n, accumulate);
}

SP_AVX2 void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dot_avx2(ai, b + j * k, k);
      c[i * n + j] = accumulate ? c[i * n + j] + v : v;
    }
  }
}

SP_AVX2 void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                          bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) axpy_avx2(ap[i], bp, c + i * n, n);
  }
}

#undef SP_AVX2

}  // namespace

const KernelTable* avx2_table() {
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  static const KernelTable table{Isa::kAvx2, dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2};
  return supported ? &table : nullptr;
}

#else

const KernelTable* avx2_table() { return nullptr; }

#endif

}  // namespace styleprompt::kernels
