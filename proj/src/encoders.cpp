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

#include "styleprompt/encoders.hpp"

#include <cmath>
#include <random>

#include "styleprompt/errors.hpp"

namespace styleprompt {

void EncoderConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorKind::kConfiguration, what); };
  check(patch_grid >= 2, "patch_grid must be at least 2 (style statistics need two patches)");
  check(image_size % patch_grid == 0, "image_size must be divisible by patch_grid");
  check(channels >= 1 && token_dim >= 1 && embed_dim >= 1, "dimensions must be positive");
  check(layers >= 1, "layers must be at least 1");
  check(heads >= 1 && token_dim % heads == 0, "token_dim must be divisible by heads");
  check(mlp_ratio >= 1, "mlp_ratio must be at least 1");
  check(prompt_depth >= 1 && prompt_depth <= layers, "prompt_depth must satisfy 1 <= J <= L");
  check(vision_prompts >= 1 && text_prompts >= 1, "prompt counts must be positive");
  check(temperature > 0.0, "temperature must be positive");
  check(class_vocab >= 1, "class_vocab must be positive");
  check(max_text_length >= kTemplateLength + 3, "max_text_length too short for the class template");
}

std::vector<int> class_token_sequence(std::size_t class_id) {
  std::vector<int> seq{kSosToken};
  for (std::size_t i = 0; i < kTemplateLength; ++i) seq.push_back(kFirstTemplateToken + static_cast<int>(i));
  seq.push_back(kFirstClassToken + static_cast<int>(class_id));
  seq.push_back(kEosToken);
  return seq;
}

// --- initialization -------------------------------------------------------

namespace {

Tensor normal_tensor(std::mt19937_64& rng, Shape shape, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

Linear make_linear(std::mt19937_64& rng, std::size_t in, std::size_t out) {
  return {parameter(normal_tensor(rng, {in, out}, 1.0 / std::sqrt(static_cast<double>(in)))),
          parameter(Tensor({1, out}, 0.0))};
}

LayerNormParams make_ln(std::size_t dim) { return {parameter(Tensor({1, dim}, 1.0)), parameter(Tensor({1, dim}, 0.0))}; }

TransformerBlock make_block(std::mt19937_64& rng, const EncoderConfig& c) {
  const std::size_t D = c.token_dim, H = c.token_dim * c.mlp_ratio;
  TransformerBlock b{make_ln(D), make_linear(rng, D, 3 * D), make_linear(rng, D, D),
                     make_ln(D), make_linear(rng, D, H),     make_linear(rng, H, D)};
  // Residual branches start small so the initial stack is near identity.
  Tensor w = b.out.weight.value();
  for (auto& v : w.data()) v *= 0.5;
  b.out.weight.assign(w);
  w = b.fc2.weight.value();
  for (auto& v : w.data()) v *= 0.5;
  b.fc2.weight.assign(w);
  return b;
}

void push_block(std::vector<std::pair<std::string, Var>>& out, const std::string& prefix, const TransformerBlock& b) {
  out.emplace_back(prefix + ".ln1.gamma", b.ln1.gamma);
  out.emplace_back(prefix + ".ln1.beta", b.ln1.beta);
  out.emplace_back(prefix + ".qkv.weight", b.qkv.weight);
  out.emplace_back(prefix + ".qkv.bias", b.qkv.bias);
  out.emplace_back(prefix + ".out.weight", b.out.weight);
  out.emplace_back(prefix + ".out.bias", b.out.bias);
  out.emplace_back(prefix + ".ln2.gamma", b.ln2.gamma);
  out.emplace_back(prefix + ".ln2.beta", b.ln2.beta);
  out.emplace_back(prefix + ".fc1.weight", b.fc1.weight);
  out.emplace_back(prefix + ".fc1.bias", b.fc1.bias);
  out.emplace_back(prefix + ".fc2.weight", b.fc2.weight);
  out.emplace_back(prefix + ".fc2.bias", b.fc2.bias);
}

}  // namespace

Backbone Backbone::initialize(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Backbone b;
  b.config_ = config;
  const std::size_t D = config.token_dim;
  b.patch_embed = make_linear(rng, config.patch_dim(), D);
  b.cls_token = parameter(normal_tensor(rng, {1, D}, 0.1));
  b.vision_pos = parameter(normal_tensor(rng, {1 + config.num_patches(), D}, 0.1));
  for (std::size_t l = 0; l < config.layers; ++l) b.vision_blocks.push_back(make_block(rng, config));
  b.vision_ln_post = make_ln(D);
  b.vision_proj = parameter(normal_tensor(rng, {D, config.embed_dim}, 1.0 / std::sqrt(static_cast<double>(D))));

  b.token_embed = parameter(normal_tensor(rng, {config.vocab_size(), D}, 0.5));
  b.text_pos = parameter(normal_tensor(rng, {config.max_text_length, D}, 0.1));
  for (std::size_t l = 0; l < config.layers; ++l) b.text_blocks.push_back(make_block(rng, config));
  b.text_ln_final = make_ln(D);
  b.text_proj = parameter(normal_tensor(rng, {D, config.embed_dim}, 1.0 / std::sqrt(static_cast<double>(D))));

  b.log_temperature_ = parameter(Tensor::scalar(std::log(config.temperature)));
  return b;
}

std::vector<std::pair<std::string, Var>> Backbone::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out;
  out.emplace_back("vision.patch.weight", patch_embed.weight);
  out.emplace_back("vision.patch.bias", patch_embed.bias);
  out.emplace_back("vision.cls", cls_token);
  out.emplace_back("vision.pos", vision_pos);
  for (std::size_t l = 0; l < vision_blocks.size(); ++l)
    push_block(out, "vision.block" + std::to_string(l), vision_blocks[l]);
  out.emplace_back("vision.ln_post.gamma", vision_ln_post.gamma);
  out.emplace_back("vision.ln_post.beta", vision_ln_post.beta);
  out.emplace_back("vision.proj", vision_proj);
  out.emplace_back("text.token_embed", token_embed);
  out.emplace_back("text.pos", text_pos);
  for (std::size_t l = 0; l < text_blocks.size(); ++l) push_block(out, "text.block" + std::to_string(l), text_blocks[l]);
  out.emplace_back("text.ln_final.gamma", text_ln_final.gamma);
  out.emplace_back("text.ln_final.beta", text_ln_final.beta);
  out.emplace_back("text.proj", text_proj);
  out.emplace_back("log_temperature", log_temperature_);
  return out;
}

void Backbone::set_trainable(bool trainable) {
  for (auto& [name, v] : named_parameters()) {
    Var p = v;
    p.set_requires_grad(trainable);
    if (!trainable) p.zero_grad();
  }
}

std::uint64_t Backbone::checksum() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& [name, v] : named_parameters()) h = fnv1a(v.value().data(), h);
  return h;
}

double Backbone::temperature() const { return std::exp(log_temperature_.item()); }

Backbone Backbone::clone() const {
  Backbone copy = *this;
  auto src = named_parameters();
  // Rebuild every leaf so the copy shares no state with this backbone.
  auto fresh = [](const Var& v) { return Var(v.value(), v.requires_grad()); };
  copy.patch_embed = {fresh(patch_embed.weight), fresh(patch_embed.bias)};
  copy.cls_token = fresh(cls_token);
  copy.vision_pos = fresh(vision_pos);
  auto fresh_block = [&](const TransformerBlock& b) {
    return TransformerBlock{{fresh(b.ln1.gamma), fresh(b.ln1.beta)}, {fresh(b.qkv.weight), fresh(b.qkv.bias)},
                            {fresh(b.out.weight), fresh(b.out.bias)}, {fresh(b.ln2.gamma), fresh(b.ln2.beta)},
                            {fresh(b.fc1.weight), fresh(b.fc1.bias)}, {fresh(b.fc2.weight), fresh(b.fc2.bias)}};
  };
  for (std::size_t l = 0; l < vision_blocks.size(); ++l) copy.vision_blocks[l] = fresh_block(vision_blocks[l]);
  copy.vision_ln_post = {fresh(vision_ln_post.gamma), fresh(vision_ln_post.beta)};
  copy.vision_proj = fresh(vision_proj);
  copy.token_embed = fresh(token_embed);
  copy.text_pos = fresh(text_pos);
  for (std::size_t l = 0; l < text_blocks.size(); ++l) copy.text_blocks[l] = fresh_block(text_blocks[l]);
  copy.text_ln_final = {fresh(text_ln_final.gamma), fresh(text_ln_final.beta)};
  copy.text_proj = fresh(text_proj);
  copy.log_temperature_ = fresh(log_temperature_);
  return copy;
}

// --- prompts --------------------------------------------------------------

PromptSet PromptSet::initialize(const Backbone& backbone, std::uint64_t seed) {
  const auto& c = backbone.config();
  std::mt19937_64 rng(seed);
  PromptSet p;
  for (std::size_t l = 0; l < c.prompt_depth; ++l) p.vision.push_back(parameter(normal_tensor(rng, {c.vision_prompts, c.token_dim}, 0.02)));
  for (std::size_t l = 0; l < c.prompt_depth; ++l) p.text.push_back(parameter(normal_tensor(rng, {c.text_prompts, c.token_dim}, 0.02)));
  // First-layer text prompts start from the template word embeddings,
  // cycling if there are more prompts than template words.
  Tensor first({c.text_prompts, c.token_dim});
  const auto& embed = backbone.token_embed.value();
  for (std::size_t t = 0; t < c.text_prompts; ++t) {
    const std::size_t row = static_cast<std::size_t>(kFirstTemplateToken) + t % kTemplateLength;
    for (std::size_t d = 0; d < c.token_dim; ++d) first.at(t, d) = embed.at(row, d);
  }
  p.text[0].assign(first);
  return p;
}

PromptSet PromptSet::zeros(const EncoderConfig& c) {
  PromptSet p;
  for (std::size_t l = 0; l < c.prompt_depth; ++l) {
    p.vision.push_back(parameter(Tensor({c.vision_prompts, c.token_dim}, 0.0)));
    p.text.push_back(parameter(Tensor({c.text_prompts, c.token_dim}, 0.0)));
  }
  return p;
}

std::vector<Var> PromptSet::parameters() const {
  std::vector<Var> out(vision.begin(), vision.end());
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

std::vector<std::pair<std::string, Var>> PromptSet::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out;
  for (std::size_t l = 0; l < vision.size(); ++l) out.emplace_back("prompts.vision" + std::to_string(l), vision[l]);
  for (std::size_t l = 0; l < text.size(); ++l) out.emplace_back("prompts.text" + std::to_string(l), text[l]);
  return out;
}

PromptSet PromptSet::clone() const {
  PromptSet p;
  for (const auto& v : vision) p.vision.push_back(Var(v.value(), v.requires_grad()));
  for (const auto& t : text) p.text.push_back(Var(t.value(), t.requires_grad()));
  return p;
}

// --- forward passes -------------------------------------------------------

namespace {

Var linear(const Var& x, const Linear& l) { return add_row(matmul(x, l.weight), l.bias); }

Var layer_norm(const Var& x, const LayerNormParams& p) { return layer_norm_rows(x, p.gamma, p.beta, 1e-5); }

// mask: n×n allowed flags, empty for full attention.
Var attention(const Var& x, const TransformerBlock& b, std::size_t heads, const std::vector<std::uint8_t>& mask) {
  const std::size_t D = x.cols();
  const std::size_t dh = D / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  Var qkv = linear(layer_norm(x, b.ln1), b.qkv);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var q = slice_cols(qkv, h * dh, (h + 1) * dh);
    Var k = slice_cols(qkv, D + h * dh, D + (h + 1) * dh);
    Var v = slice_cols(qkv, 2 * D + h * dh, 2 * D + (h + 1) * dh);
    Var scores = scale(matmul_nt(q, k), scale_factor);
    Var probs = mask.empty() ? softmax(scores, 1) : masked_softmax_rows(scores, mask);
    outs.push_back(matmul(probs, v));
  }
  return linear(heads == 1 ? outs.front() : concat_cols(outs), b.out);
}

Var block_forward(const Var& x, const TransformerBlock& b, std::size_t heads, const std::vector<std::uint8_t>& mask) {
  Var h = add(x, attention(x, b, heads, mask));
  Var m = linear(gelu(linear(layer_norm(h, b.ln2), b.fc1)), b.fc2);
  return add(h, m);
}

// Keys in [begin, end) hidden from every query; optionally causal.
std::vector<std::uint8_t> build_mask(std::size_t n, bool causal, std::size_t hidden_begin, std::size_t hidden_end) {
  std::vector<std::uint8_t> mask(n * n, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (causal && j > i) mask[i * n + j] = 0;
      if (j >= hidden_begin && j < hidden_end) mask[i * n + j] = 0;
    }
  // A prompt query whose only visible keys are hidden still needs one key.
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) any = any || mask[i * n + j];
    if (!any) mask[i * n + i] = 1;
  }
  return mask;
}

Var image_tokens(const Backbone& bb, const Tensor& image) {
  Var patches = linear(constant(patchify(bb.config(), image)), bb.patch_embed);
  return add(concat_rows({bb.cls_token, patches}), bb.vision_pos);
}

Var project_embedding(const Var& row, const LayerNormParams& ln, const Var& proj) {
  return l2_normalize_rows(matmul(layer_norm(row, ln), proj));
}

Var text_tokens(const Backbone& bb, std::span<const int> tokens) {
  const auto& c = bb.config();
  require(tokens.size() >= 2 && tokens.size() <= c.max_text_length, ErrorKind::kContract,
          "text sequence length " + std::to_string(tokens.size()) + " outside [2, " +
              std::to_string(c.max_text_length) + "]");
  require(tokens.front() == kSosToken && tokens.back() == kEosToken, ErrorKind::kContract,
          "text sequence must start with SOS and end with EOS");
  std::vector<Var> rows;
  rows.reserve(tokens.size());
  for (int id : tokens) {
    require(id >= 0 && static_cast<std::size_t>(id) < c.vocab_size(), ErrorKind::kVocabulary,
            "unknown token id " + std::to_string(id));
    rows.push_back(slice_rows(bb.token_embed, static_cast<std::size_t>(id), static_cast<std::size_t>(id) + 1));
  }
  return add(concat_rows(rows), slice_rows(bb.text_pos, 0, tokens.size()));
}

}  // namespace

Tensor patchify(const EncoderConfig& c, const Tensor& image) {
  require(image.rank() == 3 && image.shape()[0] == c.image_size && image.shape()[1] == c.image_size &&
              image.shape()[2] == c.channels,
          ErrorKind::kDimension,
          "image shape " + shape_string(image.shape()) + " does not match configured resolution " +
              shape_string({c.image_size, c.image_size, c.channels}));
  const std::size_t P = c.patch_grid, S = c.patch_size(), C = c.channels, W = c.image_size;
  Tensor out({P * P, c.patch_dim()});
  for (std::size_t py = 0; py < P; ++py)
    for (std::size_t px = 0; px < P; ++px) {
      const std::size_t row = py * P + px;
      std::size_t col = 0;
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x)
          for (std::size_t ch = 0; ch < C; ++ch)
            out.at(row, col++) = image[((py * S + y) * W + (px * S + x)) * C + ch];
    }
  return out;
}

ImageEncoding encode_image_frozen(const Backbone& bb, const Tensor& image) {
  const auto& c = bb.config();
  const std::size_t n_patch = c.num_patches();
  Var x = image_tokens(bb, image);
  ImageEncoding enc;
  static const std::vector<std::uint8_t> kNoMask;
  for (const auto& block : bb.vision_blocks) {
    x = block_forward(x, block, c.heads, kNoMask);
    enc.patch_features.push_back(slice_rows(x, 1, 1 + n_patch));
  }
  enc.embedding = project_embedding(slice_rows(x, 0, 1), bb.vision_ln_post, bb.vision_proj);
  return enc;
}

ImageEncoding encode_image_prompted(const Backbone& bb, const PromptSet& prompts, const Tensor& image,
                                    const PromptedOptions& options) {
  const auto& c = bb.config();
  require(prompts.vision.size() == c.prompt_depth, ErrorKind::kConfiguration,
          "prompt set depth " + std::to_string(prompts.vision.size()) + " does not match prompt_depth " +
              std::to_string(c.prompt_depth));
  if (options.style == StyleMode::kShift) {
    require(options.style_layer >= 1 && options.style_layer < c.layers, ErrorKind::kConfiguration,
            "style layer " + std::to_string(options.style_layer) + " must lie in [1, " + std::to_string(c.layers - 1) +
                "]");
    require(options.bank != nullptr && !options.bank->empty(), ErrorKind::kConfiguration,
            "style shift requested without a style bank");
  }
  const std::size_t V = c.vision_prompts, n_patch = c.num_patches();
  const std::size_t n = V + 1 + n_patch;
  const auto mask = options.mask_prompts ? build_mask(n, false, 0, V) : std::vector<std::uint8_t>{};

  Var body = image_tokens(bb, image);
  Var x = concat_rows({prompts.vision[0], body});
  ImageEncoding enc;
  for (std::size_t l = 0; l < c.layers; ++l) {
    if (l > 0 && l < c.prompt_depth) x = concat_rows({prompts.vision[l], slice_rows(x, V, n)});
    x = block_forward(x, bb.vision_blocks[l], c.heads, mask);
    if (options.style == StyleMode::kShift && l + 1 == options.style_layer) {
      Var shifted = style_shift_layer(slice_rows(x, V + 1, n), *options.bank);
      x = concat_rows({slice_rows(x, 0, V + 1), shifted});
    }
    enc.patch_features.push_back(slice_rows(x, V + 1, n));
  }
  enc.embedding = project_embedding(slice_rows(x, V, V + 1), bb.vision_ln_post, bb.vision_proj);
  return enc;
}

Var encode_text_frozen(const Backbone& bb, std::span<const int> tokens) {
  const auto& c = bb.config();
  Var x = text_tokens(bb, tokens);
  const std::size_t n = tokens.size();
  const auto mask = build_mask(n, true, 0, 0);
  for (const auto& block : bb.text_blocks) x = block_forward(x, block, c.heads, mask);
  return project_embedding(slice_rows(x, n - 1, n), bb.text_ln_final, bb.text_proj);
}

Var encode_text_prompted(const Backbone& bb, const PromptSet& prompts, std::span<const int> tokens,
                         bool mask_prompts) {
  const auto& c = bb.config();
  require(prompts.text.size() == c.prompt_depth, ErrorKind::kConfiguration,
          "prompt set depth does not match prompt_depth");
  Var body = text_tokens(bb, tokens);
  const std::size_t T = c.text_prompts;
  const std::size_t n = tokens.size() + T;
  const auto mask = build_mask(n, true, mask_prompts ? 1 : 0, mask_prompts ? 1 + T : 0);
  Var x = concat_rows({slice_rows(body, 0, 1), prompts.text[0], slice_rows(body, 1, tokens.size())});
  for (std::size_t l = 0; l < c.layers; ++l) {
    if (l > 0 && l < c.prompt_depth)
      x = concat_rows({slice_rows(x, 0, 1), prompts.text[l], slice_rows(x, 1 + T, n)});
    x = block_forward(x, bb.text_blocks[l], c.heads, mask);
  }
  return project_embedding(slice_rows(x, n - 1, n), bb.text_ln_final, bb.text_proj);
}

Var encode_classes_frozen(const Backbone& bb, std::span<const std::size_t> class_ids) {
  std::vector<Var> rows;
  for (auto id : class_ids) {
    require(id < bb.config().class_vocab, ErrorKind::kVocabulary, "class id " + std::to_string(id) + " out of vocabulary");
    rows.push_back(encode_text_frozen(bb, class_token_sequence(id)));
  }
  return concat_rows(rows);
}

Var encode_classes_prompted(const Backbone& bb, const PromptSet& prompts, std::span<const std::size_t> class_ids,
                            bool mask_prompts) {
  std::vector<Var> rows;
  for (auto id : class_ids) {
    require(id < bb.config().class_vocab, ErrorKind::kVocabulary, "class id " + std::to_string(id) + " out of vocabulary");
    rows.push_back(encode_text_prompted(bb, prompts, class_token_sequence(id), mask_prompts));
  }
  return concat_rows(rows);
}

Var similarity_logits(const Var& image_embedding, const Var& class_embeddings, double temperature) {
  require(temperature > 0.0, ErrorKind::kContract, "temperature must be positive");
  require(image_embedding.cols() == class_embeddings.cols(), ErrorKind::kDimension,
          "embedding dimension mismatch: " + shape_string(image_embedding.shape()) + " vs " +
              shape_string(class_embeddings.shape()));
  Var img = l2_normalize_rows(reshape(image_embedding, {1, image_embedding.numel()}));
  Var cls = l2_normalize_rows(class_embeddings);
  return scale(matmul_nt(img, cls), 1.0 / temperature);
}

Var zero_shot_logits(const Var& image_embedding, const Var& class_embeddings, double temperature) {
  return softmax(similarity_logits(image_embedding, class_embeddings, temperature), 1);
}

}  // namespace styleprompt
