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

// Two stages: contrastive pre-training of the backbone, then prompt tuning
// with the backbone frozen.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "json.hpp"
#include "styleprompt/checkpoint.hpp"
#include "styleprompt/config.hpp"
#include "styleprompt/data_synth.hpp"
#include "styleprompt/encoders.hpp"
#include "styleprompt/losses.hpp"

namespace styleprompt {

// --- optimisers -------------------------------------------------------------

/// v ← momentum·v + g; p ← p − lr·v.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum);
/// Applies sgd_step to every leaf; a leaf without gradient sees g = 0.
void sgd_step(std::span<const Var> params, std::vector<Tensor>& velocity, double lr, double momentum);

struct AdamState {
  std::vector<Tensor> m, v;
  std::uint64_t t = 0;
};
void adam_step(std::span<const Var> params, AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// --- pre-training -----------------------------------------------------------

/// Symmetric InfoNCE between a batch of image embeddings and the text
/// embeddings of their classes, one image per class.
Var symmetric_contrastive_loss(const Var& image_embeddings, const Var& text_embeddings, const Var& log_temperature);

struct PretrainResult {
  Backbone backbone;
  std::vector<double> epoch_losses;
  double first_step_loss = 0.0;
};

using JsonSink = std::function<void(const nlohmann::json&)>;

/// Every step takes one image of each class present in `indices`.
PretrainResult pretrain(const EncoderConfig& encoder, const PretrainConfig& options, const Dataset& dataset,
                        const std::vector<std::size_t>& indices, std::uint64_t seed, const JsonSink& on_step = {});

Checkpoint backbone_checkpoint(const Backbone& backbone, const nlohmann::json& provenance);
/// Restores a frozen backbone and checks its recorded checksum.
Backbone backbone_from_checkpoint(const Checkpoint& checkpoint);

// --- prompt tuning ------------------------------------------------------------

struct StepRecord {
  std::size_t step = 0;  // 1-based global step
  std::size_t epoch = 0;  // 1-based
  std::uint64_t seed = 0;
  double ce = 0, cm = 0, feat = 0, diversity = 0, content = 0, total = 0;

  nlohmann::json to_json() const;
};

/// SGD with momentum on the prompted objective. Resumable at any step
/// boundary: the batch order and augmentation depend only on
/// (seed, epoch, step), never on how the run was split.
class PromptTuner {
 public:
  PromptTuner(std::shared_ptr<const Backbone> backbone, const Dataset& dataset, std::vector<std::size_t> train,
              std::vector<std::size_t> class_ids, const TuneConfig& config, std::uint64_t seed);

  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t total_steps() const { return steps_per_epoch_ * config_.epochs; }
  std::size_t completed_steps() const { return completed_; }
  bool finished() const { return completed_ >= total_steps(); }

  StepRecord step();
  /// Runs until finished or until `max_steps` more steps have been taken.
  void run(std::size_t max_steps, const std::function<void(const StepRecord&)>& sink = {});

  const PromptSet& prompts() const { return prompts_; }
  const StyleBank& bank() const { return bank_; }
  const std::vector<std::size_t>& class_ids() const { return class_ids_; }
  const TuneConfig& config() const { return config_; }

  Checkpoint checkpoint(const nlohmann::json& provenance = {}) const;
  /// Restores prompts, bank, optimiser state and progress. The checkpoint
  /// must come from the same backbone, classes and tuning settings.
  void restore(const Checkpoint& checkpoint);

  /// Throws kInvariant if the backbone weights changed since construction.
  void verify_backbone() const;

 private:
  LossBatch make_batch(std::size_t epoch, std::size_t within, FrozenTargets& frozen) const;
  std::vector<Var> parameters() const;

  std::shared_ptr<const Backbone> backbone_;
  const Dataset& dataset_;
  std::vector<std::size_t> train_;
  std::vector<std::size_t> class_ids_;
  TuneConfig config_;
  std::uint64_t seed_;
  std::uint64_t backbone_checksum_;
  std::size_t steps_per_epoch_;
  std::size_t completed_ = 0;

  PromptSet prompts_;
  StyleBank bank_;
  std::vector<Tensor> velocity_;

  // Frozen view of every training sample, computed once.
  std::vector<Tensor> frozen_embeddings_;
  std::vector<Tensor> frozen_patches_;
  Tensor frozen_classes_;
};

/// Random crop with edge padding, shifting by up to `max_shift` pixels.
Tensor random_shift_crop(const Tensor& image, std::uint64_t seed, std::size_t max_shift = 2);

/// Loads the prompts and bank of a tuned checkpoint (no optimiser state).
struct TunedModel {
  PromptSet prompts;
  StyleBank bank;
  std::vector<std::size_t> class_ids;
  nlohmann::json header;
};
TunedModel tuned_model_from_checkpoint(const Checkpoint& checkpoint, const Backbone& backbone);

}  // namespace styleprompt
