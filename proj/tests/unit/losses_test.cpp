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

#include "styleprompt/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "styleprompt/errors.hpp"
#include "styleprompt/gradcheck.hpp"
#include "test_util.hpp"

namespace styleprompt {
namespace {

using testing::random_tensor;

// --- brute-force oracles --------------------------------------------------

double ce_oracle(const Tensor& img, const Tensor& cls, const std::vector<std::size_t>& y, double tau) {
  const std::size_t B = img.rows(), C = cls.rows(), d = img.cols();
  double total = 0;
  for (std::size_t i = 0; i < B; ++i) {
    std::vector<double> z(C);
    double ni = 0;
    for (std::size_t k = 0; k < d; ++k) ni += img.at(i, k) * img.at(i, k);
    for (std::size_t c = 0; c < C; ++c) {
      double dot = 0, nc = 0;
      for (std::size_t k = 0; k < d; ++k) {
        dot += img.at(i, k) * cls.at(c, k);
        nc += cls.at(c, k) * cls.at(c, k);
      }
      z[c] = dot / std::sqrt(ni * nc) / tau;
    }
    double mx = *std::max_element(z.begin(), z.end()), s = 0;
    for (double v : z) s += std::exp(v - mx);
    total += -(z[y[i]] - mx - std::log(s));
  }
  return total / static_cast<double>(B);
}

double cos_oracle(const Tensor& m, std::size_t a, std::size_t b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < m.cols(); ++k) {
    dot += m.at(a, k) * m.at(b, k);
    na += m.at(a, k) * m.at(a, k);
    nb += m.at(b, k) * m.at(b, k);
  }
  return dot / std::sqrt(na * nb);
}

double diversity_oracle(const Tensor& mu, const Tensor& sigma) {
  double s = 0;
  for (std::size_t n = 0; n < mu.rows(); ++n)
    for (std::size_t k = 0; k < mu.rows(); ++k)
      if (n != k) s += std::abs(cos_oracle(mu, n, k)) + std::abs(cos_oracle(sigma, n, k));
  return s;
}

// Per-dimension Pearson correlation, then the L2 distance of the vector of
// correlations from all-ones.
double content_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t P = a.rows(), D = a.cols();
  double s = 0;
  for (std::size_t j = 0; j < D; ++j) {
    double ma = 0, mb = 0;
    for (std::size_t p = 0; p < P; ++p) ma += a.at(p, j), mb += b.at(p, j);
    ma /= P;
    mb /= P;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t p = 0; p < P; ++p) {
      cov += (a.at(p, j) - ma) * (b.at(p, j) - mb);
      va += (a.at(p, j) - ma) * (a.at(p, j) - ma);
      vb += (b.at(p, j) - mb) * (b.at(p, j) - mb);
    }
    const double r = cov / std::sqrt(va * vb);
    s += (r - 1) * (r - 1);
  }
  return std::sqrt(s);
}

double kl_oracle(const Tensor& p, const Tensor& q) {
  double s = 0;
  for (std::size_t r = 0; r < p.rows(); ++r)
    for (std::size_t c = 0; c < p.cols(); ++c)
      if (p.at(r, c) > 0) s += p.at(r, c) * std::log(p.at(r, c) / std::max(q.at(r, c), kProbabilityFloor));
  return s / static_cast<double>(p.rows());
}

Tensor random_simplex(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  Tensor t = random_tensor(rng, {rows, cols}, 0.01, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += t.at(r, c);
    for (std::size_t c = 0; c < cols; ++c) t.at(r, c) /= s;
  }
  return t;
}

// --- cross-entropy ----------------------------------------------------------

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  Tensor cls({5, 3}, 1.0);
  std::vector<std::size_t> y{2};
  EXPECT_NEAR(cross_entropy_loss(constant(Tensor::row({1, 2, 3})), constant(cls), y, 0.07).item(), std::log(5.0),
              1e-12);
}

TEST(CrossEntropy, ConfidentCorrectApproachesZero) {
  Tensor cls = Tensor::matrix({{1, 0}, {0, 1}, {-1, 0}});
  std::vector<std::size_t> y{0};
  EXPECT_LT(cross_entropy_loss(constant(Tensor::row({1, 0})), constant(cls), y, 1e-3).item(), 1e-12);
}

TEST(CrossEntropy, MatchesOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    Tensor img = random_tensor(rng, {4, 6}), cls = random_tensor(rng, {3, 6});
    std::vector<std::size_t> y{0, 2, 1, 2};
    EXPECT_NEAR(cross_entropy_loss(constant(img), constant(cls), y, 0.3).item(), ce_oracle(img, cls, y, 0.3), 1e-10);
  }
}

TEST(CrossEntropy, LabelOutOfRangeIsContractError) {
  std::vector<std::size_t> y{3};
  try {
    cross_entropy_loss(constant(Tensor::row({1, 0})), constant(Tensor({3, 2}, 1.0)), y, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

// --- diversity ----------------------------------------------------------------

TEST(Diversity, OrthogonalBasesGiveZero) {
  Tensor mu = Tensor::matrix({{1, 0, 0}, {0, 2, 0}, {0, 0, -3}});
  Tensor sigma = Tensor::matrix({{0, 0, 1}, {1, 0, 0}, {0, 1, 0}});
  EXPECT_EQ(diversity_loss(constant(mu), constant(sigma)).item(), 0.0);
}

TEST(Diversity, DuplicatePairGivesFour) {
  Tensor mu = Tensor::matrix({{0.3, -1.2, 2.0}, {0.3, -1.2, 2.0}});
  Tensor sigma = Tensor::matrix({{1.0, 0.5, 0.2}, {1.0, 0.5, 0.2}});
  EXPECT_NEAR(diversity_loss(constant(mu), constant(sigma)).item(), 4.0, 1e-12);
}

TEST(Diversity, SingleBasisIsZero) {
  StyleBank bank(1, 4, 3);
  EXPECT_EQ(diversity_loss(bank).item(), 0.0);
}

TEST(Diversity, MatchesOracleAndIsScaleInvariant) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    Tensor mu = random_tensor(rng, {4, 5}), sigma = random_tensor(rng, {4, 5}, 0.1, 2.0);
    const double v = diversity_loss(constant(mu), constant(sigma)).item();
    EXPECT_NEAR(v, diversity_oracle(mu, sigma), 1e-10);
    for (std::size_t k = 0; k < 5; ++k) mu.at(1, k) *= 3.7;
    EXPECT_NEAR(diversity_loss(constant(mu), constant(sigma)).item(), v, 1e-12);
  }
}

TEST(Diversity, ZeroNormBasisIsNumericDomainError) {
  try {
    diversity_loss(constant(Tensor::matrix({{0, 0}, {1, 0}})), constant(Tensor::matrix({{1, 1}, {1, 0}})));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumericDomain);
  }
}

// --- content -------------------------------------------------------------------

TEST(Content, IdenticalMapsGiveZero) {
  std::mt19937_64 rng(3);
  Tensor f = random_tensor(rng, {16, 8});
  EXPECT_NEAR(content_loss(constant(f), constant(f)).item(), 0.0, 1e-9);
}

TEST(Content, NegatedMapGivesTwoRootD) {
  std::mt19937_64 rng(4);
  Tensor f = random_tensor(rng, {16, 8});
  Tensor g = f;
  for (auto& v : g.data()) v = -v;
  EXPECT_NEAR(content_loss(constant(g), constant(f)).item(), 2.0 * std::sqrt(8.0), 1e-10);
}

TEST(Content, MatchesPearsonOracleAndAffineInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.2, 5.0);
  for (int t = 0; t < 100; ++t) {
    Tensor a = random_tensor(rng, {9, 4}), b = random_tensor(rng, {9, 4});
    const double v = content_loss(constant(a), constant(b)).item();
    EXPECT_NEAR(v, content_oracle(a, b), 1e-10);
    for (std::size_t j = 0; j < 4; ++j) {
      const double s = u(rng), shift = u(rng) - 2.0;
      for (std::size_t p = 0; p < 9; ++p) a.at(p, j) = s * a.at(p, j) + shift;
    }
    EXPECT_NEAR(content_loss(constant(a), constant(b)).item(), v, 1e-10);
  }
}

TEST(Content, ErrorsOnShapeAndZeroVariance) {
  try {
    content_loss(constant(Tensor({4, 3}, 1.0)), constant(Tensor({4, 2}, 1.0)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
  Tensor a = Tensor::matrix({{1, 2}, {1, 3}, {1, 5}});
  try {
    content_loss(constant(a), constant(Tensor::matrix({{0, 1}, {2, 3}, {4, 4}})));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumericDomain);
  }
}

// --- feature alignment ------------------------------------------------------------

TEST(FeatureAlignment, Examples) {
  Var f = constant(Tensor::row({1, 0})), fp = constant(Tensor::row({0, 0}));
  Var g = constant(Tensor::row({0.3, 0.4}));
  EXPECT_DOUBLE_EQ(feature_alignment_loss(f, fp, g, g, 15, 25).item(), 7.5);
  EXPECT_EQ(feature_alignment_loss(f, f, g, g, 15, 25).item(), 0.0);
}

TEST(FeatureAlignment, MatchesElementwiseOracle) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    Tensor f = random_tensor(rng, {3, 5}), fp = random_tensor(rng, {3, 5});
    Tensor g = random_tensor(rng, {3, 5}), gp = random_tensor(rng, {3, 5});
    double oracle = 0;
    for (std::size_t i = 0; i < 15; ++i)
      oracle += (15 * (f[i] - fp[i]) * (f[i] - fp[i]) + 25 * (g[i] - gp[i]) * (g[i] - gp[i])) / 5.0;
    oracle /= 3.0;
    EXPECT_NEAR(feature_alignment_loss(constant(f), constant(fp), constant(g), constant(gp), 15, 25).item(), oracle,
                1e-10);
  }
}

TEST(FeatureAlignment, GradientOnlyReachesPromptedSide) {
  Var f = parameter(Tensor::row({1, 2})), fp = parameter(Tensor::row({0, 0}));
  Var g = parameter(Tensor::row({1, 1})), gp = parameter(Tensor::row({0, 1}));
  backward(feature_alignment_loss(f, fp, g, gp, 15, 25));
  EXPECT_TRUE(f.grad().empty());
  EXPECT_TRUE(g.grad().empty());
  EXPECT_FALSE(fp.grad().empty());
  EXPECT_DOUBLE_EQ(fp.grad()[0], -15.0);
}

// --- cross-modal ------------------------------------------------------------------

TEST(CrossModal, Examples) {
  EXPECT_NEAR(cross_modal_loss(constant(Tensor::row({1, 0})), constant(Tensor::row({0.5, 0.5}))).item(),
              std::log(2.0), 1e-12);
  Tensor p = Tensor::row({0.2, 0.3, 0.5});
  EXPECT_NEAR(cross_modal_loss(constant(p), constant(p)).item(), 0.0, 1e-15);
  // A zero prompted probability is floored rather than producing infinity.
  EXPECT_NEAR(cross_modal_loss(constant(Tensor::row({0.5, 0.5})), constant(Tensor::row({1.0, 0.0}))).item(),
              0.5 * std::log(0.5 / kProbabilityFloor) + 0.5 * std::log(0.5), 1e-10);
}

TEST(CrossModal, MatchesOracleAndGibbs) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    Tensor p = random_simplex(rng, 2, 6), q = random_simplex(rng, 2, 6);
    const double v = cross_modal_loss(constant(p), constant(q)).item();
    EXPECT_NEAR(v, kl_oracle(p, q), 1e-10);
    EXPECT_GE(v, 0.0);
  }
}

// --- gradients ----------------------------------------------------------------------

TEST(LossGradients, EachTermMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    Var img = parameter(random_tensor(rng, {3, 5})), cls = parameter(random_tensor(rng, {4, 5}));
    std::vector<std::size_t> y{1, 3, 0};
    EXPECT_LT(gradient_check([&] { return cross_entropy_loss(img, cls, y, 0.5); }, {img, cls}).max_relative_error,
              1e-6);

    Var mu = parameter(random_tensor(rng, {3, 4})), raw = parameter(random_tensor(rng, {3, 4}));
    EXPECT_LT(gradient_check([&] { return diversity_loss(mu, softplus(raw)); }, {mu, raw}).max_relative_error, 1e-6);

    Var a = parameter(random_tensor(rng, {6, 4}));
    Var b = constant(random_tensor(rng, {6, 4}));
    EXPECT_LT(gradient_check([&] { return content_loss(a, b); }, {a}).max_relative_error, 1e-6);

    Var fp = parameter(random_tensor(rng, {3, 5})), gp = parameter(random_tensor(rng, {3, 5}));
    Var f = constant(random_tensor(rng, {3, 5})), g = constant(random_tensor(rng, {3, 5}));
    EXPECT_LT(gradient_check([&] { return feature_alignment_loss(f, fp, g, gp, 15, 25); }, {fp, gp})
                  .max_relative_error,
              1e-6);

    Var logits = parameter(random_tensor(rng, {2, 4}, -2, 2));
    Var target = constant(random_simplex(rng, 2, 4));
    EXPECT_LT(gradient_check([&] { return cross_modal_loss(target, softmax(logits, 1)); }, {logits})
                  .max_relative_error,
              1e-6);
  }
}

// --- total loss ------------------------------------------------------------------------

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.image_size = 8;
  c.patch_grid = 2;
  c.token_dim = 8;
  c.embed_dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.class_vocab = 4;
  c.prompt_depth = 2;
  c.vision_prompts = 2;
  c.text_prompts = 2;
  return c;
}

struct TinyModel {
  Backbone bb;
  PromptSet prompts;
  StyleBank bank;
  LossBatch batch;
  PromptedOptions options;
};

TinyModel tiny_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto c = tiny_config();
  TinyModel m{Backbone::initialize(c, seed), {}, StyleBank(3, c.token_dim, seed + 7), {}, {}};
  m.bb.set_trainable(false);
  m.prompts = PromptSet::initialize(m.bb, seed + 3);
  for (int i = 0; i < 2; ++i) m.batch.images.push_back(random_tensor(rng, {8, 8, 3}));
  m.batch.labels = {1, 0};
  m.batch.class_ids = {0, 2, 3};
  m.options.style = StyleMode::kShift;
  m.options.style_layer = 1;
  return m;
}

TEST(TotalLoss, BreakdownInvariantAndTermOracle) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto m = tiny_model(seed);
    LossWeights w;
    auto out = total_loss(m.bb, m.prompts, m.bank, m.batch, w, m.options);
    EXPECT_NEAR(out.total, out.ce + out.cm + out.feat + w.lambda1 * out.diversity + w.lambda2 * out.content, 1e-12);
    EXPECT_DOUBLE_EQ(out.total, out.objective.item());

    // Independent recomputation from the encoders.
    PromptedOptions opt = m.options;
    opt.bank = &m.bank;
    Tensor img_p({2, 8}), img_f({2, 8});
    double content = 0;
    for (std::size_t i = 0; i < 2; ++i) {
      auto ep = encode_image_prompted(m.bb, m.prompts, m.batch.images[i], opt);
      auto ef = encode_image_frozen(m.bb, m.batch.images[i]);
      for (std::size_t k = 0; k < 8; ++k) {
        img_p.at(i, k) = ep.embedding.value()[k];
        img_f.at(i, k) = ef.embedding.value()[k];
      }
      content += content_oracle(ep.patch_features.back().value(), ef.patch_features.back().value()) / 2.0;
    }
    const Tensor cls_p = encode_classes_prompted(m.bb, m.prompts, m.batch.class_ids).value();
    const Tensor cls_f = encode_classes_frozen(m.bb, m.batch.class_ids).value();
    EXPECT_NEAR(out.ce, ce_oracle(img_p, cls_p, m.batch.labels, w.temperature), 1e-10);
    EXPECT_NEAR(out.content, content, 1e-10);
    EXPECT_NEAR(out.diversity, diversity_oracle(m.bank.mu().value(), m.bank.sigma().value()), 1e-10);
    double feat = 0;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < 8; ++k) {
        const std::size_t y = m.batch.labels[i];
        feat += (15 * std::pow(img_f.at(i, k) - img_p.at(i, k), 2) + 25 * std::pow(cls_f.at(y, k) - cls_p.at(y, k), 2)) /
                8.0 / 2.0;
      }
    EXPECT_NEAR(out.feat, feat, 1e-10);
  }
}

TEST(TotalLoss, CeOnlyWeightsGiveCe) {
  auto m = tiny_model(4);
  auto out = total_loss(m.bb, m.prompts, m.bank, m.batch, LossWeights::ce_only(), m.options);
  EXPECT_EQ(out.total, out.ce);
}

TEST(TotalLoss, AlignmentFixedPoint) {
  // Prompts masked out of attention, no shift, orthogonal bank: the
  // prompted view equals the frozen one.
  auto m = tiny_model(5);
  m.options = {};
  m.options.mask_prompts = true;
  Tensor mu({3, 8}), sig({3, 8});
  for (std::size_t n = 0; n < 3; ++n) {
    mu.at(n, n) = 1.0;
    sig.at(n, n + 3) = 1.0;
  }
  // Softplus cannot reach zero, so build the σ bases directly from tiny raws.
  Tensor raw({3, 8}, -800.0);
  for (std::size_t n = 0; n < 3; ++n) raw.at(n, n + 3) = softplus_inverse(1.0);
  StyleBank bank = StyleBank::from_raw(mu, raw);
  auto out = total_loss(m.bb, m.prompts, bank, m.batch, LossWeights{}, m.options);
  EXPECT_EQ(out.cm, 0.0);
  EXPECT_EQ(out.feat, 0.0);
  EXPECT_NEAR(out.content, 0.0, 1e-7);
  EXPECT_EQ(out.diversity, 0.0);
  EXPECT_NEAR(out.total, out.ce, 1e-7);
}

TEST(TotalLoss, GradientReachesOnlyPromptsAndBank) {
  auto m = tiny_model(6);
  auto out = total_loss(m.bb, m.prompts, m.bank, m.batch, LossWeights{}, m.options);
  backward(out.objective);
  for (const auto& p : m.prompts.parameters()) EXPECT_FALSE(p.grad().empty());
  for (const auto& p : m.bank.parameters()) EXPECT_FALSE(p.grad().empty());
  for (const auto& [name, p] : m.bb.named_parameters()) EXPECT_TRUE(p.grad().empty()) << name;
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    auto m = tiny_model(seed + 20);
    auto params = m.prompts.parameters();
    for (const auto& p : m.bank.parameters()) params.push_back(p);
    auto report = gradient_check(
        [&] { return total_loss(m.bb, m.prompts, m.bank, m.batch, LossWeights{}, m.options).objective; }, params);
    EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_param << "[" << report.worst_index << "]";
  }
}

}  // namespace
}  // namespace styleprompt
