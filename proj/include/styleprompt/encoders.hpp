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

// Miniature dual encoder: a patch-based vision transformer and a causal
// text transformer with a shared embedding space.
//
// Each encoder has two views over the same Backbone weights:
//   frozen   - the plain backbone forward pass;
//   prompted - deep prompting: fresh learnable prompt tokens replace the
//              previous prompt outputs at each of the first J layers, and
//              layers J+1..L carry the layer-J prompt outputs forward.
// The prompted vision view can also route its patch tokens through the
// style shift after a chosen layer.
//
// Token layout:
//   vision frozen    [CLS, patch_1..patch_P²]
//   vision prompted  [prompt_1..prompt_V, CLS, patch_1..patch_P²]
//   text frozen      [SOS, template..., class, EOS]
//   text prompted    [SOS, prompt_1..prompt_T, template..., class, EOS]
// Positional embeddings are added to the non-prompt tokens only, so prompt
// insertion never shifts the positions seen by image or word tokens.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "styleprompt/autograd.hpp"
#include "styleprompt/style_shift.hpp"

namespace styleprompt {

// Token ids of the synthetic vocabulary.
inline constexpr int kSosToken = 0;
inline constexpr int kEosToken = 1;
inline constexpr int kFirstTemplateToken = 2;
inline constexpr std::size_t kTemplateLength = 4;  // stands in for "a photo of a"
inline constexpr int kFirstClassToken = kFirstTemplateToken + static_cast<int>(kTemplateLength);

struct EncoderConfig {
  std::size_t image_size = 24;
  std::size_t channels = 3;
  std::size_t patch_grid = 4;  // P: the image is cut into P×P patches
  std::size_t token_dim = 32;  // D
  std::size_t layers = 4;      // L
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t embed_dim = 32;  // d, shared image/text space
  std::size_t class_vocab = 16;
  std::size_t max_text_length = 16;
  double temperature = 0.07;   // τ
  std::size_t prompt_depth = 3;    // J
  std::size_t vision_prompts = 4;  // V
  std::size_t text_prompts = 4;    // T

  void validate() const;
  std::size_t num_patches() const { return patch_grid * patch_grid; }
  std::size_t patch_size() const { return image_size / patch_grid; }
  std::size_t patch_dim() const { return patch_size() * patch_size() * channels; }
  std::size_t vocab_size() const { return static_cast<std::size_t>(kFirstClassToken) + class_vocab; }
  std::size_t head_dim() const { return token_dim / heads; }
};

/// [SOS, template..., class token, EOS]
std::vector<int> class_token_sequence(std::size_t class_id);

struct Linear {
  Var weight;  // in×out
  Var bias;    // 1×out
};

struct LayerNormParams {
  Var gamma;
  Var beta;
};

struct TransformerBlock {
  LayerNormParams ln1;
  Linear qkv;
  Linear out;
  LayerNormParams ln2;
  Linear fc1;
  Linear fc2;
};

/// The shared encoder weights (the "frozen" model once pre-trained).
class Backbone {
 public:
  Backbone() = default;
  static Backbone initialize(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  EncoderConfig& mutable_config() { return config_; }

  /// Stable ordered (name, parameter) list; names key the checkpoint.
  std::vector<std::pair<std::string, Var>> named_parameters() const;
  void set_trainable(bool trainable);

  /// FNV-1a over every weight, in named_parameters() order.
  std::uint64_t checksum() const;

  /// τ = exp(log_temperature). Learned during pre-training.
  const Var& log_temperature() const { return log_temperature_; }
  double temperature() const;

  Backbone clone() const;

  // Vision
  Linear patch_embed;
  Var cls_token;   // 1×D
  Var vision_pos;  // (1+P²)×D
  std::vector<TransformerBlock> vision_blocks;
  LayerNormParams vision_ln_post;
  Var vision_proj;  // D×d

  // Text
  Var token_embed;  // vocab×D
  Var text_pos;     // max_len×D
  std::vector<TransformerBlock> text_blocks;
  LayerNormParams text_ln_final;
  Var text_proj;  // D×d

 private:
  EncoderConfig config_;
  Var log_temperature_;
};

/// Learnable deep prompts: one V×D vision matrix and one T×D text matrix
/// for each of the first J layers.
struct PromptSet {
  std::vector<Var> vision;
  std::vector<Var> text;

  /// First-layer text prompts copy the template embeddings; all other
  /// prompts are N(0, 0.02²).
  static PromptSet initialize(const Backbone& backbone, std::uint64_t seed);
  static PromptSet zeros(const EncoderConfig& config);

  std::vector<Var> parameters() const;
  std::vector<std::pair<std::string, Var>> named_parameters() const;
  PromptSet clone() const;
  std::size_t depth() const { return vision.size(); }
};

/// Backbone plus the learnable additions of the prompted view.
struct DualEncoderState {
  std::shared_ptr<Backbone> backbone;
  PromptSet prompts;
  StyleBank bank;
};

enum class StyleMode { kOff, kShift };

struct PromptedOptions {
  StyleMode style = StyleMode::kOff;
  /// 1-based: the shift is applied to the patch tokens leaving this layer.
  std::size_t style_layer = 2;
  const StyleBank* bank = nullptr;
  /// Test harness: no token may attend to a prompt token.
  bool mask_prompts = false;
};

struct ImageEncoding {
  Var embedding;                    // 1×d, unit norm
  std::vector<Var> patch_features;  // L entries, each P²×D (CLS/prompts excluded)
};

/// P²×patch_dim matrix of flattened patches from an H×W×C image.
Tensor patchify(const EncoderConfig& config, const Tensor& image);

ImageEncoding encode_image_frozen(const Backbone& backbone, const Tensor& image);
ImageEncoding encode_image_prompted(const Backbone& backbone, const PromptSet& prompts, const Tensor& image,
                                    const PromptedOptions& options = {});

/// 1×d unit-norm embedding at the EOS position.
Var encode_text_frozen(const Backbone& backbone, std::span<const int> tokens);
Var encode_text_prompted(const Backbone& backbone, const PromptSet& prompts, std::span<const int> tokens,
                         bool mask_prompts = false);

/// Class embeddings stacked as rows, C×d.
Var encode_classes_frozen(const Backbone& backbone, std::span<const std::size_t> class_ids);
Var encode_classes_prompted(const Backbone& backbone, const PromptSet& prompts,
                            std::span<const std::size_t> class_ids, bool mask_prompts = false);

/// Cosine similarities between one image embedding (1×d) and C class
/// embeddings (C×d), divided by τ: the 1×C logit row.
Var similarity_logits(const Var& image_embedding, const Var& class_embeddings, double temperature);

/// softmax(similarity_logits): the zero-shot class distribution.
Var zero_shot_logits(const Var& image_embedding, const Var& class_embeddings, double temperature);

}  // namespace styleprompt
