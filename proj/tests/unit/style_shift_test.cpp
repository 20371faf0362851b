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

#include "styleprompt/style_shift.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "styleprompt/errors.hpp"
#include "styleprompt/gradcheck.hpp"
#include "test_util.hpp"

namespace styleprompt {
namespace {

using testing::random_tensor;

// Two-pass long-double per-column statistics: the oracle for extract_style.
std::pair<std::vector<double>, std::vector<double>> two_pass(const Tensor& f, double eps) {
  const std::size_t m = f.rows(), n = f.cols();
  std::vector<double> mu(n), sd(n);
  for (std::size_t j = 0; j < n; ++j) {
    long double s = 0;
    for (std::size_t i = 0; i < m; ++i) s += f.at(i, j);
    const long double mean = s / m;
    long double v = 0;
    for (std::size_t i = 0; i < m; ++i) v += (f.at(i, j) - mean) * (f.at(i, j) - mean);
    mu[j] = static_cast<double>(mean);
    sd[j] = std::sqrt(static_cast<double>(v / m) + eps);
  }
  return {mu, sd};
}

StyleStats stats(const Tensor& mu, const Tensor& sigma) { return {constant(mu), constant(sigma)}; }

TEST(ExtractStyle, ConstantMapHasZeroSpread) {
  auto s = extract_style(constant(Tensor({16, 4}, 2.5)), 1e-5);
  for (double v : s.mu.value().data()) EXPECT_DOUBLE_EQ(v, 2.5);
  for (double v : s.sigma.value().data()) EXPECT_NEAR(v, std::sqrt(1e-5), 1e-15);
}

TEST(ExtractStyle, TwoPatchExample) {
  auto s = extract_style(constant(Tensor::matrix({{0, 4}, {2, 0}})), 0.0);
  EXPECT_DOUBLE_EQ(s.mu.value()[0], 1.0);
  EXPECT_DOUBLE_EQ(s.mu.value()[1], 2.0);
  EXPECT_DOUBLE_EQ(s.sigma.value()[0], 1.0);
  EXPECT_DOUBLE_EQ(s.sigma.value()[1], 2.0);
}

TEST(ExtractStyle, MatchesTwoPassOracle) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 50; ++t) {
    auto f = random_tensor(rng, {16, 8}, -3, 3);
    auto s = extract_style(constant(f), 1e-5);
    auto [mu, sd] = two_pass(f, 1e-5);
    for (std::size_t j = 0; j < 8; ++j) {
      EXPECT_NEAR(s.mu.value()[j], mu[j], 1e-12);
      EXPECT_NEAR(s.sigma.value()[j], sd[j], 1e-12);
    }
  }
}

TEST(ExtractStyle, SinglePatchIsDimensionError) {
  try {
    extract_style(constant(Tensor({1, 4}, 1.0)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(Wasserstein, Examples) {
  auto a = stats(Tensor::row({1, 0}), Tensor::row({0.5, 2}));
  EXPECT_EQ(wasserstein_distance(a, a).item(), 0.0);
  auto b = stats(Tensor::row({0, 0}), Tensor::row({0.5, 2}));
  EXPECT_NEAR(wasserstein_distance(a, b).item(), 1.0, 1e-15);
  EXPECT_THROW(wasserstein_distance(a, stats(Tensor::row({0, 0, 0}), Tensor::row({1, 1, 1}))), Error);
}

TEST(Wasserstein, EqualsSquaredDifferenceIdentityAndIsSymmetric) {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 200; ++t) {
    auto mu_a = random_tensor(rng, {1, 6}, -2, 2), mu_b = random_tensor(rng, {1, 6}, -2, 2);
    auto sd_a = random_tensor(rng, {1, 6}, 0.1, 3), sd_b = random_tensor(rng, {1, 6}, 0.1, 3);
    double oracle = 0;
    for (std::size_t d = 0; d < 6; ++d)
      oracle += (mu_a[d] - mu_b[d]) * (mu_a[d] - mu_b[d]) + (sd_a[d] - sd_b[d]) * (sd_a[d] - sd_b[d]);
    const double ab = wasserstein_distance(stats(mu_a, sd_a), stats(mu_b, sd_b)).item();
    const double ba = wasserstein_distance(stats(mu_b, sd_b), stats(mu_a, sd_a)).item();
    EXPECT_NEAR(ab, oracle, 1e-12);
    EXPECT_NEAR(ab, ba, 1e-14);
    EXPECT_GE(ab, -1e-14);
  }
}

TEST(SimilarityWeights, UniformWhenDistancesEqual) {
  // Two bases mirrored around the current mean are equidistant.
  auto cur = stats(Tensor::row({0, 0}), Tensor::row({1, 1}));
  auto bank = StyleBank::from_stats(Tensor::matrix({{1, 0}, {-1, 0}, {0, 1}}), Tensor({3, 2}, 1.0));
  auto w = similarity_weights(cur, bank).value();
  for (double v : w.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
}

TEST(SimilarityWeights, TwoBasisExample) {
  auto cur = stats(Tensor::row({0, 0}), Tensor::row({1, 1}));
  // d = [0, 1] → scores [1, 0.5] → softmax.
  auto bank = StyleBank::from_stats(Tensor::matrix({{0, 0}, {1, 0}}), Tensor({2, 2}, 1.0));
  auto d = basis_distances(cur, bank).value();
  EXPECT_NEAR(d[0], 0.0, 1e-12);
  EXPECT_NEAR(d[1], 1.0, 1e-12);
  auto w = similarity_weights(cur, bank).value();
  EXPECT_NEAR(w[0], 0.6225, 1e-4);
  EXPECT_NEAR(w[1], 0.3775, 1e-4);
}

TEST(SimilarityWeights, SumToOnePositiveAndPermutationEquivariant) {
  std::mt19937_64 rng(33);
  for (int t = 0; t < 100; ++t) {
    StyleBank bank(5, 4, 100 + t);
    auto cur = stats(random_tensor(rng, {1, 4}), random_tensor(rng, {1, 4}, 0.2, 2));
    auto w = similarity_weights(cur, bank).value();
    EXPECT_NEAR(std::accumulate(w.data().begin(), w.data().end(), 0.0), 1.0, 1e-12);
    for (double v : w.data()) EXPECT_GT(v, 0.0);

    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Tensor mu_p({5, 4}), raw_p({5, 4});
    for (std::size_t n = 0; n < 5; ++n)
      for (std::size_t d = 0; d < 4; ++d) {
        mu_p.at(n, d) = bank.mu().value().at(perm[n], d);
        raw_p.at(n, d) = bank.sigma_raw().value().at(perm[n], d);
      }
    auto wp = similarity_weights(cur, StyleBank::from_raw(mu_p, raw_p)).value();
    for (std::size_t n = 0; n < 5; ++n) EXPECT_NEAR(wp[n], w[perm[n]], 1e-15);
  }
}

TEST(SimilarityWeights, NearestBasisDominates) {
  std::mt19937_64 rng(34);
  for (int t = 0; t < 200; ++t) {
    StyleBank bank(6, 5, 500 + t);
    auto cur = stats(random_tensor(rng, {1, 5}), random_tensor(rng, {1, 5}, 0.3, 2));
    auto d = basis_distances(cur, bank).value();
    auto w = similarity_weights(cur, bank).value();
    auto nearest = std::min_element(d.data().begin(), d.data().end()) - d.data().begin();
    auto heaviest = std::max_element(w.data().begin(), w.data().end()) - w.data().begin();
    EXPECT_EQ(nearest, heaviest);
  }
}

TEST(MapStyle, SingleBasisUniformAndOracle) {
  std::mt19937_64 rng(35);
  auto single = StyleBank::from_stats(Tensor::matrix({{0.5, -1}}), Tensor::matrix({{2, 0.25}}));
  auto m = map_style(constant(Tensor::row({1.0})), single);
  EXPECT_NEAR(m.mu.value()[0], 0.5, 1e-15);
  EXPECT_NEAR(m.sigma.value()[1], 0.25, 1e-12);

  StyleBank bank(4, 3, 7);
  auto sigma = bank.sigma().value();
  auto u = map_style(constant(Tensor({1, 4}, 0.25)), bank);
  for (std::size_t d = 0; d < 3; ++d) {
    double mu_mean = 0, sd_mean = 0;
    for (std::size_t n = 0; n < 4; ++n) {
      mu_mean += bank.mu().value().at(n, d) / 4;
      sd_mean += sigma.at(n, d) / 4;
    }
    EXPECT_NEAR(u.mu.value()[d], mu_mean, 1e-12);
    EXPECT_NEAR(u.sigma.value()[d], sd_mean, 1e-12);
  }

  for (int t = 0; t < 100; ++t) {
    auto raw = random_tensor(rng, {1, 4}, 0.01, 1);
    double total = 0;
    for (double v : raw.data()) total += v;
    for (auto& v : raw.data()) v /= total;
    auto mapped = map_style(constant(raw), bank);
    for (std::size_t d = 0; d < 3; ++d) {
      double mu_acc = 0, sd_acc = 0;
      for (std::size_t n = 0; n < 4; ++n) {
        mu_acc += raw[n] * bank.mu().value().at(n, d);
        sd_acc += raw[n] * sigma.at(n, d);
      }
      EXPECT_NEAR(mapped.mu.value()[d], mu_acc, 1e-12);
      EXPECT_NEAR(mapped.sigma.value()[d], sd_acc, 1e-12);
      EXPECT_GT(mapped.sigma.value()[d], 0.0);
    }
  }
  EXPECT_THROW(map_style(constant(Tensor::row({0.5, 0.5})), bank), Error);
}

TEST(ApplyStyle, IdentityTargetStandardizes) {
  std::mt19937_64 rng(36);
  auto f = random_tensor(rng, {16, 4}, -2, 5);
  auto out = apply_style(constant(f), stats(Tensor({1, 4}, 0.0), Tensor({1, 4}, 1.0))).value();
  auto [mu, sd] = two_pass(f, kStyleEpsilon);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.at(i, j), (f.at(i, j) - mu[j]) / sd[j], 1e-12);
}

TEST(ApplyStyle, OwnStyleReconstructsInput) {
  std::mt19937_64 rng(37);
  for (int t = 0; t < 20; ++t) {
    auto f = random_tensor(rng, {16, 8}, -4, 4);
    Var fv = constant(f);
    auto out = apply_style(fv, extract_style(fv)).value();
    double linf = 0;
    for (double v : f.data()) linf = std::max(linf, std::abs(v));
    EXPECT_LE(max_abs_diff(out, f), 10 * std::sqrt(kStyleEpsilon) * linf);
  }
}

TEST(ApplyStyle, RoundTripRecoversTargetStyle) {
  std::mt19937_64 rng(38);
  for (int t = 0; t < 50; ++t) {
    auto f = random_tensor(rng, {16, 6}, -2, 2);
    auto target = stats(random_tensor(rng, {1, 6}, -1, 1), random_tensor(rng, {1, 6}, 0.2, 2));
    auto exact = extract_style(apply_style(constant(f), target, 0.0), 0.0);
    EXPECT_LT(max_abs_diff(exact.mu.value(), target.mu.value()), 1e-12);
    EXPECT_LT(max_abs_diff(exact.sigma.value(), target.sigma.value()), 1e-12);
    auto approx = extract_style(apply_style(constant(f), target));
    EXPECT_LE(max_abs_diff(approx.mu.value(), target.mu.value()), 1e-3);
    EXPECT_LE(max_abs_diff(approx.sigma.value(), target.sigma.value()), 1e-3);
  }
}

TEST(ApplyStyle, PreservesStandardizedContent) {
  std::mt19937_64 rng(39);
  auto f = random_tensor(rng, {16, 5}, -3, 3);
  auto target = stats(random_tensor(rng, {1, 5}), random_tensor(rng, {1, 5}, 0.5, 2));
  auto out = apply_style(constant(f), target, 0.0).value();
  auto [mf, sf] = two_pass(f, 0.0);
  auto [mo, so] = two_pass(out, 0.0);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      EXPECT_NEAR((out.at(i, j) - mo[j]) / so[j], (f.at(i, j) - mf[j]) / sf[j], 1e-10);
}

TEST(ApplyStyle, NonPositiveTargetSigmaIsRejected) {
  EXPECT_THROW(apply_style(constant(Tensor({4, 2}, 1.0)), stats(Tensor({1, 2}), Tensor::row({1.0, 0.0}))), Error);
}

TEST(StyleShiftLayer, OwnStyleBankIsIdentity) {
  std::mt19937_64 rng(40);
  auto f = random_tensor(rng, {16, 8}, -2, 2);
  auto own = extract_style(constant(f));
  auto bank = StyleBank::from_stats(own.mu.value(), own.sigma.value());
  EXPECT_LT(max_abs_diff(style_shift_layer(constant(f), bank).value(), f), 1e-6);
}

TEST(StyleShiftLayer, OutputCarriesMappedStyle) {
  std::mt19937_64 rng(41);
  auto f = random_tensor(rng, {16, 8}, -2, 2);
  StyleBank bank(4, 8, 3);
  Var fv = constant(f);
  auto mapped = map_style(similarity_weights(extract_style(fv), bank), bank);
  auto out_style = extract_style(style_shift_layer(fv, bank));
  EXPECT_LT(max_abs_diff(out_style.mu.value(), mapped.mu.value()), 1e-3);
  EXPECT_LT(max_abs_diff(out_style.sigma.value(), mapped.sigma.value()), 1e-3);
}

TEST(StyleShiftLayer, GradientsReachBankAndMatchFiniteDifferences) {
  std::mt19937_64 rng(42);
  StyleBank bank(3, 4, 9);
  Var f = parameter(random_tensor(rng, {9, 4}, -2, 2));
  auto weights = constant(random_tensor(rng, {9, 4}));
  auto loss = [&] { return sum(mul(style_shift_layer(f, bank), weights)); };
  Var l = loss();
  backward(l);
  double norm_mu = 0, norm_sigma = 0;
  for (double g : bank.mu().grad().data()) norm_mu += std::abs(g);
  for (double g : bank.sigma_raw().grad().data()) norm_sigma += std::abs(g);
  EXPECT_GT(norm_mu, 0.0);
  EXPECT_GT(norm_sigma, 0.0);
  auto report = gradient_check(loss, {f, bank.mu(), bank.sigma_raw()});
  EXPECT_LT(report.max_relative_error, 1e-4);
}

TEST(StyleBank, SigmaStaysPositiveUnderAggressiveDescent) {
  StyleBank bank(3, 4, 5);
  Var raw = bank.sigma_raw();
  for (int step = 0; step < 500; ++step) {
    raw.zero_grad();
    backward(sum(bank.sigma()));  // pushes every sigma toward zero
    Tensor next = raw.value();
    for (std::size_t i = 0; i < next.numel(); ++i) next[i] -= 50.0 * raw.grad()[i] + 1.0;
    raw.assign(next);
  }
  const Tensor sigma = bank.sigma().value();
  for (double s : sigma.data()) EXPECT_GT(s, 0.0);
}

TEST(StyleBank, InitializationStartsAtUnitSigma) {
  StyleBank bank(12, 32, 1);
  const Tensor sigma = bank.sigma().value();
  for (double s : sigma.data()) EXPECT_NEAR(s, 1.0, 1e-12);
  auto clone = bank.clone();
  EXPECT_TRUE(clone.mu().value().bit_equal(bank.mu().value()));
  EXPECT_NE(clone.mu().node(), bank.mu().node());
}

TEST(FeatureStatsBank, ZeroSpreadGivesMeanStyle) {
  std::vector<StyleStats> styles = {{constant(Tensor::row({1.0, -2.0})), constant(Tensor::row({0.5, 2.0}))},
                                    {constant(Tensor::row({3.0, 0.0})), constant(Tensor::row({1.5, 4.0}))}};
  const auto bank = feature_stats_bank(styles, 3, 0.0, 1);
  ASSERT_EQ(bank.size(), 3u);
  for (std::size_t n = 0; n < 3; ++n) {
    EXPECT_NEAR(bank.mu().value().at(n, 0), 2.0, 1e-12);
    EXPECT_NEAR(bank.mu().value().at(n, 1), -1.0, 1e-12);
    EXPECT_NEAR(bank.sigma().value().at(n, 0), 1.0, 1e-12);
    EXPECT_NEAR(bank.sigma().value().at(n, 1), 3.0, 1e-12);
  }
}

TEST(FeatureStatsBank, SpreadScattersBasesAroundObservedStyles) {
  std::mt19937_64 rng(4);
  std::vector<StyleStats> styles;
  for (int i = 0; i < 200; ++i)
    styles.push_back({constant(random_tensor(rng, {1, 4}, -1.0, 1.0)), constant(random_tensor(rng, {1, 4}, 0.5, 1.5))});
  const auto bank = feature_stats_bank(styles, 400, 1.0, 2);
  const Tensor mu = bank.mu().value(), sigma = bank.sigma().value();
  for (std::size_t d = 0; d < 4; ++d) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 400; ++n) m += mu.at(n, d) / 400.0;
    for (std::size_t n = 0; n < 400; ++n) v += std::pow(mu.at(n, d) - m, 2) / 400.0;
    EXPECT_NEAR(m, 0.0, 0.12);
    EXPECT_NEAR(std::sqrt(v), 1.0 / std::sqrt(3.0), 0.1);
  }
  for (double s : sigma.data()) EXPECT_GT(s, 0.0);
  EXPECT_TRUE(feature_stats_bank(styles, 5, 1.0, 9).mu().value().bit_equal(
      feature_stats_bank(styles, 5, 1.0, 9).mu().value()));
  EXPECT_THROW(feature_stats_bank({}, 2, 1.0, 1), Error);
}

}  // namespace
}  // namespace styleprompt
