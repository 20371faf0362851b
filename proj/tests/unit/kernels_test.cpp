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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace styleprompt::kernels {
namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<const KernelTable*> tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (auto* t = avx2_table()) out.push_back(t);
  if (auto* t = neon_table()) out.push_back(t);
  return out;
}

// Naive oracles, independent of every kernel table.
std::vector<double> naive_nn(std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a,
                             const std::vector<double>& b) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<double>(s);
    }
  return c;
}

void expect_close(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "at " << i;
}

TEST(Kernels, ActiveTableIsOneOfTheCompiledVariants) {
  const auto& t = active();
  bool found = false;
  for (auto* c : tables()) found = found || c == &t;
  EXPECT_TRUE(found) << to_string(t.isa);
}

TEST(Kernels, DotMatchesOracleForAllLengths) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 31u, 32u, 33u, 128u}) {
    auto a = random_vec(rng, n), b = random_vec(rng, n);
    long double ref = 0;
    for (std::size_t i = 0; i < n; ++i) ref += static_cast<long double>(a[i]) * b[i];
    for (auto* t : tables()) EXPECT_NEAR(t->dot(a.data(), b.data(), n), static_cast<double>(ref), 1e-13) << n;
  }
}

TEST(Kernels, AxpyMatchesOracle) {
  std::mt19937_64 rng(2);
  for (std::size_t n : {1u, 5u, 16u, 37u}) {
    auto x = random_vec(rng, n), y = random_vec(rng, n);
    std::vector<double> want(n);
    for (std::size_t i = 0; i < n; ++i) want[i] = y[i] + 0.75 * x[i];
    for (auto* t : tables()) {
      auto got = y;
      t->axpy(0.75, x.data(), got.data(), n);
      expect_close(got, want, 1e-15);
    }
  }
}

TEST(Kernels, GemmVariantsMatchNaiveProduct) {
  std::mt19937_64 rng(3);
  const std::size_t dims[][3] = {{1, 1, 1}, {3, 2, 4}, {17, 32, 32}, {5, 96, 32}, {21, 21, 8}, {4, 19, 13}};
  for (const auto& d : dims) {
    const std::size_t m = d[0], n = d[1], k = d[2];
    auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
    const auto want = naive_nn(m, n, k, a, b);
    // bᵀ stored n×k, aᵀ stored k×m
    std::vector<double> bt(n * k), at(k * m);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];

    for (auto* t : tables()) {
      std::vector<double> c(m * n, 0.0);
      t->gemm_nn(m, n, k, a.data(), b.data(), c.data(), false);
      expect_close(c, want, 1e-12);
      t->gemm_nt(m, n, k, a.data(), bt.data(), c.data(), false);
      expect_close(c, want, 1e-12);
      t->gemm_tn(m, n, k, at.data(), b.data(), c.data(), false);
      expect_close(c, want, 1e-12);
      // accumulate doubles the product
      t->gemm_nn(m, n, k, a.data(), b.data(), c.data(), true);
      std::vector<double> twice(want);
      for (auto& v : twice) v *= 2.0;
      expect_close(c, twice, 1e-12);
    }
  }
}

TEST(Kernels, GemmRowsAreIndependentOfOtherRows) {
  std::mt19937_64 rng(4);
  const std::size_t n = 24, k = 11;
  auto a = random_vec(rng, 6 * k), b = random_vec(rng, k * n);
  for (auto* t : tables()) {
    std::vector<double> full(6 * n), single(n);
    t->gemm_nn(6, n, k, a.data(), b.data(), full.data(), false);
    for (std::size_t i = 0; i < 6; ++i) {
      t->gemm_nn(1, n, k, a.data() + i * k, b.data(), single.data(), false);
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(single[j], full[i * n + j]);
    }
  }
}

TEST(Kernels, ZeroCoefficientsLeaveAccumulatorBitIdentical) {
  // p·v with p = 0 must not perturb the sum; masked attention depends on it.
  std::mt19937_64 rng(5);
  const std::size_t n = 20, k = 5;
  auto a = random_vec(rng, k), b = random_vec(rng, k * n);
  std::vector<double> a_pad(k + 3, 0.0), b_pad((k + 3) * n);
  for (std::size_t p = 0; p < k; ++p) a_pad[3 + p] = a[p];
  auto junk = random_vec(rng, 3 * n);
  std::copy(junk.begin(), junk.end(), b_pad.begin());
  std::copy(b.begin(), b.end(), b_pad.begin() + 3 * n);
  for (auto* t : tables()) {
    std::vector<double> c1(n), c2(n);
    t->gemm_nn(1, n, k, a.data(), b.data(), c1.data(), false);
    t->gemm_nn(1, n, k + 3, a_pad.data(), b_pad.data(), c2.data(), false);
    for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(c1[j], c2[j]);
  }
}

TEST(Kernels, ScopedIsaRestoresPreviousTable) {
  const auto* before = &active();
  {
    ScopedIsa s(scalar_table());
    EXPECT_EQ(&active(), &scalar_table());
  }
  EXPECT_EQ(&active(), before);
}

}  // namespace
}  // namespace styleprompt::kernels
