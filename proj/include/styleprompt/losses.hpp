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

// Prompt-tuning objectives: cross-entropy on the prompted view plus the
// style, content and alignment regularisers that tie it to the frozen view.

#include <cstddef>
#include <span>
#include <vector>

#include "styleprompt/autograd.hpp"
#include "styleprompt/encoders.hpp"
#include "styleprompt/style_shift.hpp"

namespace styleprompt {

struct LossWeights {
  double lambda_f = 15.0;
  double lambda_g = 25.0;
  double lambda1 = 0.005;  // diversity
  double lambda2 = 0.2;    // content
  double lambda_cm = 1.0;  // cross-modal KL
  double temperature = 0.07;

  void validate() const;
  /// Every regulariser off: the objective is cross-entropy alone.
  static LossWeights ce_only(double temperature = 0.07);
};

struct LossBreakdown {
  double ce = 0.0;
  double cm = 0.0;
  double feat = 0.0;
  double diversity = 0.0;
  double content = 0.0;
  double total = 0.0;
  Var objective;  // differentiable total
};

inline constexpr double kProbabilityFloor = 1e-12;

/// B×C logits: cosine(image_i, class_c) / temperature.
Var batch_logits(const Var& image_embeddings, const Var& class_embeddings, double temperature);

/// Mean negative log-likelihood of labels under softmax(batch_logits).
Var cross_entropy_loss(const Var& image_embeddings, const Var& class_embeddings, std::span<const std::size_t> labels,
                       double temperature);

/// Sum over ordered basis pairs of |cos| between means plus |cos| between
/// spreads. Zero for a single basis.
Var diversity_loss(const Var& mu, const Var& sigma);
Var diversity_loss(const StyleBank& bank);

/// ‖diag(Σ) − 1‖₂ with Σ the cross-covariance of the two standardised maps.
Var content_loss(const Var& prompted, const Var& frozen);

/// (1/d)(λf‖f − f_p‖² + λg‖g − g_p‖²), averaged over batch rows. The frozen
/// operands are detached.
Var feature_alignment_loss(const Var& frozen_image, const Var& prompted_image, const Var& frozen_text,
                           const Var& prompted_text, double lambda_f, double lambda_g);

/// KL(frozen ‖ prompted) per row, averaged over rows. The frozen
/// distribution is detached and prompted probabilities are floored.
Var cross_modal_loss(const Var& frozen_probs, const Var& prompted_probs);

struct LossBatch {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;     // indices into class_ids
  std::vector<std::size_t> class_ids;  // vocabulary class ids, the label space
};

/// Frozen-view quantities the regularisers compare against. They depend
/// only on the backbone, so the trainer computes them once per sample.
struct FrozenTargets {
  Tensor image_embeddings;                  // B×d
  std::vector<Tensor> final_patch_features;  // B entries, P²×D
  Tensor class_embeddings;                  // C×d
};

FrozenTargets compute_frozen_targets(const Backbone& backbone, const LossBatch& batch);

/// Frozen and prompted passes plus all five terms. Terms with zero weight
/// are reported but left out of the differentiable objective.
LossBreakdown total_loss(const Backbone& backbone, const PromptSet& prompts, const StyleBank& bank,
                         const LossBatch& batch, const LossWeights& weights, const PromptedOptions& options,
                         const FrozenTargets* frozen = nullptr);

}  // namespace styleprompt
