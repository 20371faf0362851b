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

#include <cmath>
#include <random>

#include "styleprompt/errors.hpp"

namespace styleprompt {

double softplus_inverse(double y) {
  require(y > 0.0, ErrorKind::kNumericDomain, "softplus_inverse of non-positive value");
  // log(exp(y) - 1), stable for large y
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

StyleBank::StyleBank(std::size_t n_bases, std::size_t dim, std::uint64_t seed) {
  require(n_bases >= 1 && dim >= 1, ErrorKind::kConfiguration, "style bank needs at least one basis and dimension");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  Tensor mu({n_bases, dim});
  for (auto& v : mu.data()) v = normal(rng);
  mu_ = parameter(std::move(mu));
  sigma_raw_ = parameter(Tensor({n_bases, dim}, softplus_inverse(1.0)));
}

StyleBank StyleBank::from_raw(Tensor mu, Tensor sigma_raw) {
  require(mu.rank() == 2 && mu.shape() == sigma_raw.shape(), ErrorKind::kDimension,
          "style bank mu " + shape_string(mu.shape()) + " and sigma " + shape_string(sigma_raw.shape()) +
              " must be matching N×D matrices");
  StyleBank bank;
  bank.mu_ = parameter(std::move(mu));
  bank.sigma_raw_ = parameter(std::move(sigma_raw));
  return bank;
}

StyleBank StyleBank::from_stats(const Tensor& mu, const Tensor& sigma) {
  Tensor raw(sigma.shape());
  for (std::size_t i = 0; i < raw.numel(); ++i) raw[i] = softplus_inverse(sigma[i]);
  return from_raw(mu, std::move(raw));
}

StyleBank feature_stats_bank(std::span<const StyleStats> styles, std::size_t n_bases, double spread,
                             std::uint64_t seed) {
  require(!styles.empty(), ErrorKind::kContract, "feature_stats bank needs at least one observed style");
  require(n_bases >= 1, ErrorKind::kConfiguration, "style bank needs at least one basis");
  const std::size_t dim = styles.front().mu.cols();
  const double count = static_cast<double>(styles.size());
  std::vector<double> mu_mean(dim, 0.0), mu_var(dim, 0.0), sg_mean(dim, 0.0), sg_var(dim, 0.0);
  for (const auto& s : styles) {
    require(s.mu.cols() == dim && s.sigma.cols() == dim, ErrorKind::kDimension, "observed styles differ in width");
    for (std::size_t d = 0; d < dim; ++d) {
      mu_mean[d] += s.mu.value()[d] / count;
      sg_mean[d] += s.sigma.value()[d] / count;
    }
  }
  for (const auto& s : styles)
    for (std::size_t d = 0; d < dim; ++d) {
      mu_var[d] += std::pow(s.mu.value()[d] - mu_mean[d], 2) / count;
      sg_var[d] += std::pow(s.sigma.value()[d] - sg_mean[d], 2) / count;
    }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor mu({n_bases, dim}), sigma({n_bases, dim});
  for (std::size_t n = 0; n < n_bases; ++n)
    for (std::size_t d = 0; d < dim; ++d) {
      mu.at(n, d) = mu_mean[d] + spread * std::sqrt(mu_var[d]) * normal(rng);
      sigma.at(n, d) = sg_mean[d] * std::exp(spread * std::sqrt(sg_var[d]) / sg_mean[d] * normal(rng));
    }
  return StyleBank::from_stats(mu, sigma);
}

Var StyleBank::sigma() const { return softplus(sigma_raw_); }

StyleStats StyleBank::basis(std::size_t n) const {
  require(n < size(), ErrorKind::kDimension, "basis index out of range");
  return {slice_rows(mu_, n, n + 1), slice_rows(sigma(), n, n + 1)};
}

StyleBank StyleBank::clone() const {
  if (empty()) return {};
  return from_raw(mu_.value(), sigma_raw_.value());
}

StyleStats extract_style(const Var& patch_features, double epsilon) {
  require(patch_features.rows() >= 2, ErrorKind::kDimension,
          "extract_style needs at least 2 patch rows, got " + shape_string(patch_features.shape()));
  auto m = moments(patch_features, 0, epsilon);
  return {m.mean, m.std};
}

namespace {

void same_dim(const StyleStats& a, const StyleStats& b) {
  require(a.mu.numel() == b.mu.numel() && a.sigma.numel() == b.sigma.numel() && a.mu.numel() == a.sigma.numel(),
          ErrorKind::kDimension,
          "style dimension mismatch: " + shape_string(a.mu.shape()) + " vs " + shape_string(b.mu.shape()));
}

}  // namespace

Var wasserstein_distance(const StyleStats& a, const StyleStats& b) {
  same_dim(a, b);
  Var mean_term = sum(square(sub(a.mu, b.mu)));
  Var spread_term = sum(sub(add(square(a.sigma), square(b.sigma)), scale(mul(a.sigma, b.sigma), 2.0)));
  return add(mean_term, spread_term);
}

Var basis_distances(const StyleStats& cur, const StyleBank& bank) {
  require(!bank.empty(), ErrorKind::kContract, "style bank is empty");
  require(cur.mu.numel() == bank.dim() && cur.sigma.numel() == bank.dim(), ErrorKind::kDimension,
          "current style dimension " + std::to_string(cur.mu.numel()) + " vs bank dimension " +
              std::to_string(bank.dim()));
  Var sigma = bank.sigma();
  Var mean_term = sum_cols(square(sub_row(bank.mu(), cur.mu)));
  Var spread = sub(add_row(square(sigma), square(cur.sigma)), scale(mul_row(sigma, cur.sigma), 2.0));
  Var d = add(mean_term, sum_cols(spread));
  require(d.value().all_finite(), ErrorKind::kNumericDomain, "non-finite style distance");
  return d;
}

Var similarity_weights(const StyleStats& cur, const StyleBank& bank) {
  Var scores = reciprocal(add_scalar(basis_distances(cur, bank), 1.0));
  return softmax(transpose(scores), 1);
}

StyleStats map_style(const Var& weights, const StyleBank& bank) {
  require(weights.numel() == bank.size(), ErrorKind::kDimension,
          "map_style: " + std::to_string(weights.numel()) + " weights for " + std::to_string(bank.size()) + " bases");
  Var w = reshape(weights, {1, bank.size()});
  return {matmul(w, bank.mu()), matmul(w, bank.sigma())};
}

Var apply_style(const Var& patch_features, const StyleStats& target, double epsilon) {
  const std::size_t dim = patch_features.cols();
  require(target.mu.numel() == dim && target.sigma.numel() == dim, ErrorKind::kDimension,
          "apply_style: target dimension does not match features " + shape_string(patch_features.shape()));
  for (double s : target.sigma.value().data())
    require(s > 0.0, ErrorKind::kNumericDomain, "apply_style: target sigma must be positive");
  auto m = moments(patch_features, 0, epsilon);
  Var normalized = div_row(sub_row(patch_features, m.mean), m.std);
  return add_row(mul_row(normalized, target.sigma), target.mu);
}

Var style_shift_layer(const Var& patch_features, const StyleBank& bank, double epsilon) {
  StyleStats cur = extract_style(patch_features, epsilon);
  Var w = similarity_weights(cur, bank);
  return apply_style(patch_features, map_style(w, bank), epsilon);
}

}  // namespace styleprompt
