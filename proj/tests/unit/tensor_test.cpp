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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "styleprompt/autograd.hpp"
#include "styleprompt/errors.hpp"
#include "styleprompt/gradcheck.hpp"
#include "styleprompt/kernels.hpp"
#include "styleprompt/tensor_io.hpp"
#include "test_util.hpp"

namespace styleprompt {
namespace {

using testing::random_tensor;

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), Error);
  EXPECT_THROW(Tensor({0, 3}), Error);
}

TEST(Matmul, IdentityAndSelection) {
  Var eye = constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var m = constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_TRUE(matmul(eye, m).value().bit_equal(m.value()));

  Var sel = constant(Tensor::matrix({{1, 0}, {0, 0}}));
  Var col = constant(Tensor::matrix({{5}, {7}}));
  auto out = matmul(sel, col).value();
  EXPECT_EQ(out.at(0, 0), 5.0);
  EXPECT_EQ(out.at(1, 0), 0.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(11);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {4, 2});
  auto c = matmul(constant(a), constant(b)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < 4; ++p) s += a.at(i, p) * b.at(p, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-12);
    }
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(constant(Tensor({2, 3})), constant(Tensor({2, 3})));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
    EXPECT_NE(std::string(e.what()).find("[2x3] x [2x3]"), std::string::npos) << e.what();
  }
}

TEST(Softmax, Examples) {
  auto s = softmax(constant(Tensor::row({0, 0})), 1).value();
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  s = softmax(constant(Tensor::row({1000, 1000})), 1).value();
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  s = softmax(constant(Tensor::row({1, 0.5})), 1).value();
  // exp(1)/(exp(1)+exp(0.5)) = 1/(1+exp(-0.5))
  EXPECT_NEAR(s[0], 0.6225, 1e-4);
  EXPECT_NEAR(s[1], 0.3775, 1e-4);
}

TEST(Softmax, RejectsNonFinite) {
  EXPECT_THROW(softmax(constant(Tensor::row({1, NAN})), 1), Error);
  EXPECT_THROW(softmax(constant(Tensor::row({1, INFINITY})), 1), Error);
}

TEST(Softmax, SumsToOneAlongEitherAxis) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    auto x = random_tensor(rng, {5, 7}, -50, 50);
    auto r = softmax(constant(x), 1).value();
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 7; ++j) s += r.at(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    auto c = softmax(constant(x), 0).value();
    for (std::size_t j = 0; j < 7; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < 5; ++i) s += c.at(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Moments, Examples) {
  const double eps = 1e-5;
  auto m = moments(constant(Tensor({1, 6}, 3.25)), 1, eps);
  EXPECT_DOUBLE_EQ(m.mean.item(), 3.25);
  EXPECT_NEAR(m.std.item(), std::sqrt(eps), 1e-15);

  m = moments(constant(Tensor::row({0, 2})), 1, 0.0);
  EXPECT_DOUBLE_EQ(m.mean.item(), 1.0);
  EXPECT_DOUBLE_EQ(m.std.item(), 1.0);
}

TEST(Moments, MatchesTwoPassOracle) {
  std::mt19937_64 rng(13);
  auto x = random_tensor(rng, {1, 16}, -3, 5);
  long double mu = 0;
  for (double v : x.data()) mu += v;
  mu /= 16;
  long double var = 0;
  for (double v : x.data()) var += (v - mu) * (v - mu);
  var /= 16;
  auto m = moments(constant(x), 1, 1e-5);
  EXPECT_NEAR(m.mean.item(), static_cast<double>(mu), 1e-12);
  EXPECT_NEAR(m.std.item(), std::sqrt(static_cast<double>(var) + 1e-5), 1e-12);
}

TEST(Moments, StdNeverBelowSqrtEpsilon) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 100; ++t) {
    auto x = random_tensor(rng, {6, 4}, -1e-4, 1e-4);
    auto m = moments(constant(x), 0, 1e-5);
    for (double s : m.std.value().data()) EXPECT_GE(s, std::sqrt(1e-5));
  }
}

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine_similarity(constant(Tensor::row({2, -1, 3})), constant(Tensor::row({2, -1, 3}))).item(), 1.0,
              1e-15);
  EXPECT_EQ(cosine_similarity(constant(Tensor::row({1, 0})), constant(Tensor::row({0, 1}))).item(), 0.0);
  EXPECT_NEAR(cosine_similarity(constant(Tensor::row({1, 1})), constant(Tensor::row({1, 0}))).item(), 0.7071, 1e-4);
  EXPECT_THROW(cosine_similarity(constant(Tensor::row({0, 0})), constant(Tensor::row({1, 0}))), Error);
}

TEST(Backward, LinearAndQuadratic) {
  Var x = parameter(Tensor({2, 3}, 0.3));
  backward(sum(x));
  for (double g : x.grad().data()) EXPECT_EQ(g, 1.0);

  Var y = parameter(Tensor::row({3}));
  backward(sum(mul(y, y)));
  EXPECT_EQ(y.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Var x = parameter(Tensor({2, 2}, 1.0));
  try {
    backward(x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(Backward, FreshGraphsGiveIdenticalGradients) {
  std::mt19937_64 rng(15);
  Var w = parameter(random_tensor(rng, {4, 3}));
  Var x = constant(random_tensor(rng, {5, 4}));
  auto run = [&] {
    w.zero_grad();
    backward(sum(tanh(matmul(x, w))));
    return w.grad();
  };
  EXPECT_TRUE(run().bit_equal(run()));
}

TEST(Backward, FrozenInputsReceiveNoGradient) {
  Var w = constant(Tensor({3, 3}, 0.5));
  Var p = parameter(Tensor({1, 3}, 0.1));
  backward(sum(matmul(p, w)));
  EXPECT_TRUE(w.grad().empty());
  EXPECT_FALSE(p.grad().empty());
}

TEST(GradCheck, ExactForLinearAndTightForQuadratic) {
  std::mt19937_64 rng(16);
  auto x = random_tensor(rng, {3, 4});
  EXPECT_LT(finite_difference_check([](const Var& v) { return sum(v); }, x), 1e-10);
  EXPECT_LT(finite_difference_check([](const Var& v) { return sum(mul(v, v)); }, x), 1e-7);
}

TEST(GradCheck, NonFiniteFunctionIsNumericDomainError) {
  try {
    finite_difference_check([](const Var& v) { return scale(sum(v), INFINITY); }, Tensor::row({1.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumericDomain);
  }
}

// Every differentiable op, composed, against central differences.
TEST(GradCheck, EveryOperationMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  Var a = parameter(random_tensor(rng, {3, 4}));
  Var b = parameter(random_tensor(rng, {4, 5}));
  Var c = parameter(random_tensor(rng, {3, 5}, 0.5, 1.5));
  Var r = parameter(random_tensor(rng, {1, 5}, 0.5, 1.5));
  Var col = parameter(random_tensor(rng, {3, 1}, 0.5, 1.5));
  Var g = parameter(random_tensor(rng, {1, 5}));
  Var be = parameter(random_tensor(rng, {1, 5}));
  Var s = parameter(Tensor::scalar(0.7));
  std::vector<std::uint8_t> mask(3 * 5, 1);
  mask[1] = 0;
  mask[7] = 0;

  const std::vector<std::pair<const char*, std::function<Var()>>> cases = {
      {"matmul", [&] { return sum(tanh(matmul(a, b))); }},
      {"matmul_nt", [&] { return sum(square(matmul_nt(a, transpose(b)))); }},
      {"add_sub_mul_div", [&] { return sum((matmul(a, b) + c) * c - c / (c + c)); }},
      {"row_ops", [&] { return sum(div_row(mul_row(sub_row(add_row(c, r), r), r), add_scalar(r, 1.0))); }},
      {"col_ops", [&] { return sum(square(div_col(mul_col(sub_col(c, col), col), col))); }},
      {"unary", [&] { return sum(log(add_scalar(exp(scale(c, 0.3)), 0.1)) + sqrt(c) + reciprocal(c)); }},
      {"gelu_softplus_abs", [&] { return sum(gelu(matmul(a, b)) + softplus(matmul(a, b)) + abs(matmul(a, b))); }},
      {"softmax_rows", [&] { return sum(square(softmax(matmul(a, b), 1))); }},
      {"softmax_cols", [&] { return sum(square(softmax(matmul(a, b), 0))); }},
      {"log_softmax", [&] { return pick(log_softmax(matmul(a, b), 1), 1, 2) + pick(log_softmax(c, 0), 2, 0); }},
      {"masked_softmax", [&] { return sum(square(masked_softmax_rows(matmul(a, b), mask))); }},
      {"layer_norm", [&] { return sum(square(layer_norm_rows(matmul(a, b), g, be, 1e-5)) * c); }},
      {"structure",
       [&] {
         Var x = concat_rows({slice_rows(c, 0, 2), slice_rows(matmul(a, b), 1, 3)});
         Var y = concat_cols({slice_cols(x, 0, 2), slice_cols(concat_rows({c + c, slice_rows(c, 0, 1)}), 2, 5)});
         return sum(square(reshape(y, {5, 4}))) + pick(y, 3, 1);
       }},
      {"reductions", [&] { return sum(square(sum_rows(c))) + sum(square(mean_cols(c))) + mean(square(c)); }},
      {"mul_scalar", [&] { return sum(square(mul_scalar(c, s))); }},
      {"moments",
       [&] {
         auto m0 = moments(c, 0, 1e-5);
         auto m1 = moments(c, 1, 1e-5);
         return sum(m0.mean * m0.std) + sum(square(m1.std));
       }},
      {"normalize_cosine", [&] { return sum(l2_normalize_rows(c) * c) + cosine_similarity(r, g); }},
  };
  for (const auto& [name, f] : cases) {
    auto report = gradient_check(f, {a, b, c, r, col, g, be, s});
    EXPECT_LT(report.max_relative_error, 1e-6) << name << " worst param " << report.worst_param << " index "
                                               << report.worst_index;
  }
}

TEST(Determinism, RepeatedEvaluationIsBitIdentical) {
  std::mt19937_64 rng(18);
  auto a = random_tensor(rng, {7, 9});
  auto b = random_tensor(rng, {9, 6});
  auto f = [&] { return layer_norm_rows(softmax(matmul(constant(a), constant(b)), 1), constant(Tensor({1, 6}, 1.0)),
                                        constant(Tensor({1, 6}, 0.0)), 1e-5).value(); };
  EXPECT_TRUE(f().bit_equal(f()));
}

TEST(Determinism, ScalarAndVectorKernelsAgreeThroughTheGraph) {
  std::mt19937_64 rng(19);
  Var a = parameter(random_tensor(rng, {6, 32}));
  Var b = parameter(random_tensor(rng, {32, 40}));
  auto run = [&] {
    a.zero_grad();
    b.zero_grad();
    Var loss = sum(gelu(matmul_nt(matmul(a, b), matmul(a, b))));
    backward(loss);
    return std::make_tuple(loss.item(), a.grad(), b.grad());
  };
  auto [l1, ga1, gb1] = run();
  kernels::ScopedIsa scoped(kernels::scalar_table());
  auto [l2, ga2, gb2] = run();
  EXPECT_NEAR(l1, l2, 1e-9 * std::abs(l1));
  EXPECT_LT(max_abs_diff(ga1, ga2), 1e-9);
  EXPECT_LT(max_abs_diff(gb1, gb2), 1e-9);
}

TEST(TensorIo, RoundTripPreservesBits) {
  std::mt19937_64 rng(20);
  for (const Shape& shape : {Shape{7}, Shape{3, 5}, Shape{2, 3, 4}}) {
    auto t = random_tensor(rng, shape, -1e6, 1e6);
    std::stringstream buf;
    write_tensor(buf, t);
    EXPECT_TRUE(read_tensor(buf).bit_equal(t));
  }
}

TEST(TensorIo, LayoutIsMagicRankDimsValues) {
  std::stringstream buf;
  write_tensor(buf, Tensor::matrix({{1.5, -2.0}}));
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 8u + 8u + 16u + 16u);
  EXPECT_EQ(bytes.substr(0, 8), "SPTENSOR");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[24]), 2);
}

TEST(TensorIo, TruncatedOrCorruptDataIsIntegrityError) {
  std::stringstream buf;
  write_tensor(buf, Tensor({4, 4}, 1.0));
  std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  try {
    read_tensor(truncated);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIntegrity);
  }
  bytes[0] = 'X';
  std::stringstream bad(bytes);
  EXPECT_THROW(read_tensor(bad), Error);
}

}  // namespace
}  // namespace styleprompt
