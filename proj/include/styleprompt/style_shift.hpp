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

// Learnable style bases and the extract → weigh → map → apply style shift
// applied to patch-token features inside the prompted vision encoder.
//
// Style statistics are per-dimension over patch rows: for a P²×D feature
// map, mu and sigma are 1×D. Bases are stored as N×D matrices; sigma is
// realized as softplus(sigma_raw) so it stays strictly positive under any
// gradient step.

#include <cstdint>
#include <span>
#include <vector>

#include "styleprompt/autograd.hpp"

namespace styleprompt {

inline constexpr double kStyleEpsilon = 1e-5;

struct StyleStats {
  Var mu;     // 1×D
  Var sigma;  // 1×D, strictly positive
};

class StyleBank {
 public:
  StyleBank() = default;
  /// mu_raw ~ N(0, 0.5²); sigma_raw set so that every realized sigma is 1.
  StyleBank(std::size_t n_bases, std::size_t dim, std::uint64_t seed);

  static StyleBank from_raw(Tensor mu, Tensor sigma_raw);
  /// Builds a bank whose realized (mu, sigma) equal the given rows exactly
  /// up to the softplus round trip. sigma entries must be positive.
  static StyleBank from_stats(const Tensor& mu, const Tensor& sigma);

  std::size_t size() const { return mu_.defined() ? mu_.rows() : 0; }
  std::size_t dim() const { return mu_.defined() ? mu_.cols() : 0; }
  bool empty() const { return size() == 0; }

  const Var& mu() const { return mu_; }
  const Var& sigma_raw() const { return sigma_raw_; }
  /// softplus(sigma_raw), N×D, differentiable into sigma_raw.
  Var sigma() const;

  StyleStats basis(std::size_t n) const;
  std::vector<Var> parameters() const { return {mu_, sigma_raw_}; }

  /// Deep copy with fresh leaves.
  StyleBank clone() const;

 private:
  Var mu_;
  Var sigma_raw_;
};

double softplus_inverse(double y);

/// Bank of n bases scattered around observed styles: per dimension,
/// mu = mean(mu) + spread·std(mu)·z and sigma = mean(sigma)·exp(spread·cv(sigma)·z'),
/// with z, z' standard normal and cv the coefficient of variation.
StyleBank feature_stats_bank(std::span<const StyleStats> styles, std::size_t n_bases, double spread,
                             std::uint64_t seed);

/// Per-dimension mean and sqrt(population variance + epsilon) over the rows
/// of a P²×D patch map. Needs at least two rows.
StyleStats extract_style(const Var& patch_features, double epsilon = kStyleEpsilon);

/// Σ_d (μa−μb)² + Σ_d (σa² + σb² − 2σaσb), evaluated in exactly that form.
/// Non-negative up to rounding.
Var wasserstein_distance(const StyleStats& a, const StyleStats& b);

/// Distances from cur to every basis, N×1.
Var basis_distances(const StyleStats& cur, const StyleBank& bank);

/// ω = softmax_n(1 / (1 + d_n)), returned as a 1×N row.
Var similarity_weights(const StyleStats& cur, const StyleBank& bank);

/// (Σ ω_n μ_n, Σ ω_n σ_n).
StyleStats map_style(const Var& weights, const StyleBank& bank);

/// AdaIN: target.sigma ⊙ (F − μ(F)) / σ(F) + target.mu, per dimension.
Var apply_style(const Var& patch_features, const StyleStats& target, double epsilon = kStyleEpsilon);

/// extract → weights → map → apply. Callers pass patch rows only.
Var style_shift_layer(const Var& patch_features, const StyleBank& bank, double epsilon = kStyleEpsilon);

}  // namespace styleprompt
