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

#include <cmath>
#include <string>

#include "styleprompt/errors.hpp"

namespace styleprompt {

void LossWeights::validate() const {
  require(lambda_f >= 0 && lambda_g >= 0 && lambda1 >= 0 && lambda2 >= 0 && lambda_cm >= 0,
          ErrorKind::kConfiguration, "loss weights must be non-negative");
  require(temperature > 0, ErrorKind::kConfiguration, "temperature must be positive");
}

LossWeights LossWeights::ce_only(double temperature) {
  return {0.0, 0.0, 0.0, 0.0, 0.0, temperature};
}

Var batch_logits(const Var& image_embeddings, const Var& class_embeddings, double temperature) {
  require(temperature > 0.0, ErrorKind::kContract, "temperature must be positive");
  require(image_embeddings.cols() == class_embeddings.cols(), ErrorKind::kDimension,
          "embedding dimension mismatch: " + shape_string(image_embeddings.shape()) + " vs " +
              shape_string(class_embeddings.shape()));
  return scale(matmul_nt(l2_normalize_rows(image_embeddings), l2_normalize_rows(class_embeddings)),
               1.0 / temperature);
}

Var cross_entropy_loss(const Var& image_embeddings, const Var& class_embeddings, std::span<const std::size_t> labels,
                       double temperature) {
  const std::size_t B = image_embeddings.rows(), C = class_embeddings.rows();
  require(B > 0 && labels.size() == B, ErrorKind::kContract,
          "cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(B) + " embeddings");
  for (auto y : labels)
    require(y < C, ErrorKind::kContract,
            "cross_entropy_loss: label " + std::to_string(y) + " outside [0, " + std::to_string(C) + ")");
  Var logp = log_softmax(batch_logits(image_embeddings, class_embeddings, temperature), 1);
  Tensor onehot({B, C});
  for (std::size_t i = 0; i < B; ++i) onehot.at(i, labels[i]) = 1.0;
  return scale(sum(mul(logp, constant(onehot))), -1.0 / static_cast<double>(B));
}

Var diversity_loss(const Var& mu, const Var& sigma) {
  require(mu.shape() == sigma.shape(), ErrorKind::kDimension,
          "diversity_loss: mean bases " + shape_string(mu.shape()) + " vs spread bases " + shape_string(sigma.shape()));
  const std::size_t n = mu.rows();
  if (n < 2) return constant(Tensor::scalar(0.0));
  Tensor off_diagonal({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i) off_diagonal.at(i, i) = 0.0;
  const Var mask = constant(off_diagonal);
  auto pairwise = [&](const Var& x) {
    Var u = l2_normalize_rows(x);
    return sum(mul(abs(matmul_nt(u, u)), mask));
  };
  return add(pairwise(mu), pairwise(sigma));
}

Var diversity_loss(const StyleBank& bank) {
  if (bank.size() < 2) return constant(Tensor::scalar(0.0));
  return diversity_loss(bank.mu(), bank.sigma());
}

namespace {

constexpr double kMinVariance = 1e-24;

Var standardize(const Var& x, const char* which) {
  auto m = moments(x, 0, 0.0);
  const Tensor sd = m.std.value();
  for (std::size_t j = 0; j < sd.numel(); ++j)
    require(sd[j] * sd[j] > kMinVariance, ErrorKind::kNumericDomain,
            std::string("content_loss: ") + which + " dimension " + std::to_string(j) + " has zero variance");
  return div_row(sub_row(x, m.mean), m.std);
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
  std::vector<Var> parts;
  parts.reserve(rows.size());
  for (auto r : rows) parts.push_back(slice_rows(x, r, r + 1));
  return concat_rows(parts);
}

}  // namespace

Var content_loss(const Var& prompted, const Var& frozen) {
  require(prompted.shape() == frozen.shape(), ErrorKind::kDimension,
          "content_loss: prompted " + shape_string(prompted.shape()) + " vs frozen " + shape_string(frozen.shape()));
  require(prompted.rows() >= 2, ErrorKind::kDimension, "content_loss: need at least two patches");
  Var a = standardize(prompted, "prompted");
  Var b = standardize(detach(frozen), "frozen");
  // diag of (1/P²)·AᵀB is the column mean of A⊙B.
  Var diag = mean_rows(mul(a, b));
  return sqrt(sum(square(add_scalar(diag, -1.0))));
}

Var feature_alignment_loss(const Var& frozen_image, const Var& prompted_image, const Var& frozen_text,
                           const Var& prompted_text, double lambda_f, double lambda_g) {
  require(frozen_image.shape() == prompted_image.shape() && frozen_text.shape() == prompted_text.shape(),
          ErrorKind::kDimension, "feature_alignment_loss: frozen/prompted shape mismatch");
  require(frozen_image.shape() == frozen_text.shape(), ErrorKind::kDimension,
          "feature_alignment_loss: image " + shape_string(frozen_image.shape()) + " vs text " +
              shape_string(frozen_text.shape()));
  const double d = static_cast<double>(frozen_image.cols());
  const double rows = static_cast<double>(frozen_image.rows());
  Var img = sum(square(sub(detach(frozen_image), prompted_image)));
  Var txt = sum(square(sub(detach(frozen_text), prompted_text)));
  return add(scale(img, lambda_f / (d * rows)), scale(txt, lambda_g / (d * rows)));
}

Var cross_modal_loss(const Var& frozen_probs, const Var& prompted_probs) {
  require(frozen_probs.shape() == prompted_probs.shape(), ErrorKind::kDimension,
          "cross_modal_loss: " + shape_string(frozen_probs.shape()) + " vs " + shape_string(prompted_probs.shape()));
  const Tensor& p = frozen_probs.value();
  double entropy_term = 0.0;
  for (double v : p.data()) {
    require(v >= 0.0 && std::isfinite(v), ErrorKind::kNumericDomain, "cross_modal_loss: invalid probability");
    if (v > 0.0) entropy_term += v * std::log(v);
  }
  Var cross = sum(mul(detach(frozen_probs), log(clamp_min(prompted_probs, kProbabilityFloor))));
  const double rows = static_cast<double>(p.rows());
  return scale(add_scalar(neg(cross), entropy_term), 1.0 / rows);
}

FrozenTargets compute_frozen_targets(const Backbone& backbone, const LossBatch& batch) {
  require(!batch.images.empty(), ErrorKind::kContract, "empty batch");
  FrozenTargets t;
  std::vector<Var> rows;
  for (const auto& img : batch.images) {
    auto enc = encode_image_frozen(backbone, img);
    rows.push_back(enc.embedding);
    t.final_patch_features.push_back(enc.patch_features.back().value());
  }
  t.image_embeddings = concat_rows(rows).value();
  t.class_embeddings = encode_classes_frozen(backbone, batch.class_ids).value();
  return t;
}

LossBreakdown total_loss(const Backbone& backbone, const PromptSet& prompts, const StyleBank& bank,
                         const LossBatch& batch, const LossWeights& weights, const PromptedOptions& options,
                         const FrozenTargets* frozen) {
  weights.validate();
  const std::size_t B = batch.images.size();
  require(B > 0 && batch.labels.size() == B, ErrorKind::kContract, "batch images and labels disagree");
  FrozenTargets local;
  if (frozen == nullptr) {
    local = compute_frozen_targets(backbone, batch);
    frozen = &local;
  }
  require(frozen->final_patch_features.size() == B && frozen->image_embeddings.rows() == B, ErrorKind::kContract,
          "frozen targets do not match the batch");

  PromptedOptions opt = options;
  opt.bank = &bank;
  std::vector<Var> emb_rows;
  std::vector<Var> contents;
  emb_rows.reserve(B);
  for (std::size_t i = 0; i < B; ++i) {
    auto enc = encode_image_prompted(backbone, prompts, batch.images[i], opt);
    emb_rows.push_back(enc.embedding);
    contents.push_back(content_loss(enc.patch_features.back(), constant(frozen->final_patch_features[i])));
  }
  Var image_p = concat_rows(emb_rows);
  Var class_p = encode_classes_prompted(backbone, prompts, batch.class_ids, options.mask_prompts);
  const Var image_f = constant(frozen->image_embeddings);
  const Var class_f = constant(frozen->class_embeddings);
  const double tau = weights.temperature;

  Var ce = cross_entropy_loss(image_p, class_p, batch.labels, tau);
  Var cm = cross_modal_loss(softmax(batch_logits(image_f, class_f, tau), 1),
                            softmax(batch_logits(image_p, class_p, tau), 1));
  Var feat = feature_alignment_loss(image_f, image_p, gather_rows(class_f, batch.labels),
                                    gather_rows(class_p, batch.labels), weights.lambda_f, weights.lambda_g);
  Var div = diversity_loss(bank);
  Var content = scale(sum(concat_rows(contents)), 1.0 / static_cast<double>(B));

  Var objective = ce;
  if (weights.lambda_cm > 0) objective = add(objective, scale(cm, weights.lambda_cm));
  if (weights.lambda_f > 0 || weights.lambda_g > 0) objective = add(objective, feat);
  if (weights.lambda1 > 0) objective = add(objective, scale(div, weights.lambda1));
  if (weights.lambda2 > 0) objective = add(objective, scale(content, weights.lambda2));

  LossBreakdown out;
  out.ce = ce.item();
  out.cm = cm.item();
  out.feat = feat.item();
  out.diversity = div.item();
  out.content = content.item();
  out.total = objective.item();
  out.objective = objective;
  return out;
}

}  // namespace styleprompt
