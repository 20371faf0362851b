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

#include "styleprompt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "styleprompt/errors.hpp"
#include "styleprompt/rng.hpp"

namespace styleprompt {

using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

// Tags keep the derived streams of different consumers apart.
enum SeedTag : std::uint64_t {
  kPretrainInit = 0x50,
  kPretrainShuffle = 0x51,
  kPromptInit = 0xA1,
  kBankInit = 0xA2,
  kEpochOrder = 0xE0,
  kCrop = 0xC0,
};

}  // namespace

// --- optimisers -------------------------------------------------------------

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum) {
  require(param.shape() == velocity.shape() && (grad.empty() || grad.shape() == param.shape()),
          ErrorKind::kDimension,
          "sgd_step: param " + shape_string(param.shape()) + ", grad " + shape_string(grad.shape()) + ", velocity " +
              shape_string(velocity.shape()));
  auto p = param.data();
  auto v = velocity.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = momentum * v[i] + (grad.empty() ? 0.0 : grad[i]);
    p[i] -= lr * v[i];
  }
}

void sgd_step(std::span<const Var> params, std::vector<Tensor>& velocity, double lr, double momentum) {
  if (velocity.empty())
    for (const auto& p : params) velocity.emplace_back(p.shape(), 0.0);
  require(velocity.size() == params.size(), ErrorKind::kDimension, "sgd_step: velocity count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var p = params[i];
    Tensor value = p.value();
    sgd_step(value, p.grad(), velocity[i], lr, momentum);
    p.assign(std::move(value));
  }
}

void adam_step(std::span<const Var> params, AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (state.m.empty())
    for (const auto& p : params) {
      state.m.emplace_back(p.shape(), 0.0);
      state.v.emplace_back(p.shape(), 0.0);
    }
  require(state.m.size() == params.size(), ErrorKind::kDimension, "adam_step: state size mismatch");
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var p = params[i];
    const Tensor& g = p.grad();
    if (g.empty()) continue;
    Tensor value = p.value();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < value.numel(); ++k) {
      m[k] = beta1 * m[k] + (1 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1 - beta2) * g[k] * g[k];
      value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
    p.assign(std::move(value));
  }
}

// --- pre-training -----------------------------------------------------------

Var symmetric_contrastive_loss(const Var& image_embeddings, const Var& text_embeddings, const Var& log_temperature) {
  require(image_embeddings.shape() == text_embeddings.shape(), ErrorKind::kDimension,
          "contrastive loss: image " + shape_string(image_embeddings.shape()) + " vs text " +
              shape_string(text_embeddings.shape()));
  const std::size_t B = image_embeddings.rows();
  Var logits = mul_scalar(matmul_nt(l2_normalize_rows(image_embeddings), l2_normalize_rows(text_embeddings)),
                          exp(neg(log_temperature)));
  Tensor eye({B, B});
  for (std::size_t i = 0; i < B; ++i) eye.at(i, i) = 1.0;
  const Var diag = constant(eye);
  Var rows = sum(mul(log_softmax(logits, 1), diag));
  Var cols = sum(mul(log_softmax(logits, 0), diag));
  return scale(add(rows, cols), -0.5 / static_cast<double>(B));
}

PretrainResult pretrain(const EncoderConfig& encoder, const PretrainConfig& options, const Dataset& dataset,
                        const std::vector<std::size_t>& indices, std::uint64_t seed, const JsonSink& on_step) {
  require(options.epochs > 0 && options.learning_rate > 0, ErrorKind::kConfiguration,
          "pretrain needs positive epochs and learning rate");
  std::map<std::size_t, std::vector<std::size_t>> pools;
  for (auto i : indices) pools[dataset.samples.at(i).class_id].push_back(i);
  require(pools.size() >= 2, ErrorKind::kContract, "pretrain needs samples from at least two classes");
  std::size_t steps = SIZE_MAX;
  std::vector<std::size_t> classes;
  for (const auto& [c, pool] : pools) {
    steps = std::min(steps, pool.size());
    classes.push_back(c);
  }

  PretrainResult result{Backbone::initialize(encoder, derive_seed(seed, {kPretrainInit})), {}, 0.0};
  Backbone& bb = result.backbone;
  bb.set_trainable(true);
  std::vector<Var> params;
  for (auto& [name, p] : bb.named_parameters()) params.push_back(p);
  AdamState adam;
  const double min_log_t = std::log(options.min_temperature);

  std::size_t global = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> order;
    for (auto c : classes) {
      auto pool = pools[c];
      std::mt19937_64 rng(derive_seed(seed, {kPretrainShuffle, epoch, c}));
      std::shuffle(pool.begin(), pool.end(), rng);
      order.push_back(std::move(pool));
    }
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps; ++s, ++global) {
      for (auto& p : params) p.zero_grad();
      std::vector<Var> rows;
      for (const auto& pool : order) rows.push_back(encode_image_frozen(bb, dataset.samples[pool[s]].pixels).embedding);
      Var loss = symmetric_contrastive_loss(concat_rows(rows), encode_classes_frozen(bb, classes), bb.log_temperature());
      const double value = loss.item();
      require(std::isfinite(value), ErrorKind::kTraining,
              "pretrain diverged: non-finite loss at step " + std::to_string(global + 1));
      if (global == 0) result.first_step_loss = value;
      epoch_loss += value;
      backward(loss);
      adam_step(params, adam, options.learning_rate);
      Var log_t = bb.log_temperature();
      if (log_t.item() < min_log_t) log_t.assign(Tensor::scalar(min_log_t));
      if (on_step)
        on_step({{"stage", "pretrain"},
                 {"step", global + 1},
                 {"epoch", epoch + 1},
                 {"seed", seed},
                 {"loss", value},
                 {"temperature", bb.temperature()}});
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(steps));
  }
  bb.set_trainable(false);
  return result;
}

Checkpoint backbone_checkpoint(const Backbone& backbone, const json& provenance) {
  Checkpoint ck;
  ck.header = {{"kind", "backbone"},
               {"encoder", to_json(backbone.config())},
               {"checksum", hex64(backbone.checksum())},
               {"provenance", provenance}};
  for (const auto& [name, p] : backbone.named_parameters()) ck.put(name, p.value());
  return ck;
}

Backbone backbone_from_checkpoint(const Checkpoint& ck) {
  require(ck.header.value("kind", "") == "backbone", ErrorKind::kCompatibility,
          "checkpoint is not a backbone (kind '" + ck.header.value("kind", "") + "')");
  Backbone bb = Backbone::initialize(encoder_config_from_json(ck.header.at("encoder")), 0);
  for (auto& [name, p] : bb.named_parameters()) {
    const Tensor& t = ck.tensor(name);
    require(t.shape() == p.shape(), ErrorKind::kIntegrity,
            "backbone tensor '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                shape_string(p.shape()));
    Var leaf = p;
    leaf.assign(t);
  }
  bb.set_trainable(false);
  require(hex64(bb.checksum()) == ck.header.value("checksum", ""), ErrorKind::kIntegrity,
          "backbone checksum does not match its header");
  return bb;
}

// --- prompt tuning ------------------------------------------------------------

json StepRecord::to_json() const {
  return {{"step", step}, {"epoch", epoch}, {"seed", seed},           {"ce", ce},
          {"cm", cm},     {"feat", feat},   {"diversity", diversity}, {"content", content},
          {"total", total}};
}

Tensor random_shift_crop(const Tensor& image, std::uint64_t seed, std::size_t max_shift) {
  require(image.rank() == 3, ErrorKind::kDimension, "random_shift_crop expects H×W×C");
  std::mt19937_64 rng(seed);
  const auto s = static_cast<long>(max_shift);
  std::uniform_int_distribution<long> shift(-s, s);
  const long dy = shift(rng), dx = shift(rng);
  const long H = static_cast<long>(image.shape()[0]), W = static_cast<long>(image.shape()[1]);
  const std::size_t C = image.shape()[2];
  Tensor out(image.shape());
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      const long sy = std::clamp(y + dy, 0L, H - 1), sx = std::clamp(x + dx, 0L, W - 1);
      for (std::size_t c = 0; c < C; ++c)
        out[(static_cast<std::size_t>(y * W + x)) * C + c] = image[(static_cast<std::size_t>(sy * W + sx)) * C + c];
    }
  return out;
}

PromptTuner::PromptTuner(std::shared_ptr<const Backbone> backbone, const Dataset& dataset,
                         std::vector<std::size_t> train, std::vector<std::size_t> class_ids, const TuneConfig& config,
                         std::uint64_t seed)
    : backbone_(std::move(backbone)),
      dataset_(dataset),
      train_(std::move(train)),
      class_ids_(std::move(class_ids)),
      config_(config),
      seed_(seed) {
  require(backbone_ != nullptr, ErrorKind::kContract, "prompt tuning needs a backbone");
  for (const auto& [name, p] : backbone_->named_parameters())
    require(!p.requires_grad(), ErrorKind::kContract, "backbone parameter '" + name + "' is not frozen");
  require(!train_.empty(), ErrorKind::kContract, "prompt tuning needs training samples");
  require(!class_ids_.empty(), ErrorKind::kContract, "prompt tuning needs a class set");
  require(config_.batch_size > 0 && config_.epochs > 0 && config_.learning_rate > 0, ErrorKind::kConfiguration,
          "tune needs positive epochs, batch size and learning rate");
  config_.weights.validate();
  for (auto i : train_) {
    const auto c = dataset_.samples.at(i).class_id;
    require(std::find(class_ids_.begin(), class_ids_.end(), c) != class_ids_.end(), ErrorKind::kContract,
            "training sample " + std::to_string(i) + " has class " + std::to_string(c) + " outside the class set");
  }
  const auto& enc = backbone_->config();
  if (config_.method == TuneMethod::kStyleBank && config_.style_mode == StyleMode::kShift)
    require(config_.style_layer >= 1 && config_.style_layer < enc.layers, ErrorKind::kConfiguration,
            "style layer " + std::to_string(config_.style_layer) + " must lie in [1, " +
                std::to_string(enc.layers - 1) + "]");

  backbone_checksum_ = backbone_->checksum();
  steps_per_epoch_ = (train_.size() + config_.batch_size - 1) / config_.batch_size;
  prompts_ = PromptSet::initialize(*backbone_, derive_seed(seed_, {kPromptInit}));
  const bool feature_init = config_.bank_init == "feature_stats";
  const std::size_t style_index = std::clamp<std::size_t>(config_.style_layer, 1, enc.layers) - 1;
  std::vector<StyleStats> styles;
  if (!config_.crop_augment || feature_init) {
    for (auto i : train_) {
      auto f = encode_image_frozen(*backbone_, dataset_.samples[i].pixels);
      if (!config_.crop_augment) {
        frozen_embeddings_.push_back(f.embedding.value());
        frozen_patches_.push_back(f.patch_features.back().value());
      }
      if (feature_init) styles.push_back(extract_style(f.patch_features[style_index]));
    }
  }
  bank_ = feature_init ? feature_stats_bank(styles, config_.n_bases, config_.bank_spread,
                                            derive_seed(seed_, {kBankInit}))
                       : StyleBank(config_.n_bases, enc.token_dim, derive_seed(seed_, {kBankInit}));
  for (const auto& p : parameters()) velocity_.emplace_back(p.shape(), 0.0);
  frozen_classes_ = encode_classes_frozen(*backbone_, class_ids_).value();
}

std::vector<Var> PromptTuner::parameters() const {
  auto out = prompts_.parameters();
  if (config_.method == TuneMethod::kStyleBank)
    for (const auto& p : bank_.parameters()) out.push_back(p);
  return out;
}

LossBatch PromptTuner::make_batch(std::size_t epoch, std::size_t within, FrozenTargets& frozen) const {
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed_, {kEpochOrder, epoch}));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t begin = within * config_.batch_size;
  const std::size_t end = std::min(begin + config_.batch_size, order.size());

  LossBatch batch;
  batch.class_ids = class_ids_;
  std::vector<Tensor> emb_rows;
  for (std::size_t k = begin; k < end; ++k) {
    const auto pos = order[k];
    const auto& sample = dataset_.samples[train_[pos]];
    const auto label = static_cast<std::size_t>(
        std::find(class_ids_.begin(), class_ids_.end(), sample.class_id) - class_ids_.begin());
    batch.labels.push_back(label);
    if (config_.crop_augment) {
      Tensor img = random_shift_crop(sample.pixels, derive_seed(seed_, {kCrop, epoch, within, k - begin}));
      auto f = encode_image_frozen(*backbone_, img);
      emb_rows.push_back(f.embedding.value());
      frozen.final_patch_features.push_back(f.patch_features.back().value());
      batch.images.push_back(std::move(img));
    } else {
      emb_rows.push_back(frozen_embeddings_[pos]);
      frozen.final_patch_features.push_back(frozen_patches_[pos]);
      batch.images.push_back(sample.pixels);
    }
  }
  const std::size_t d = emb_rows.front().numel();
  frozen.image_embeddings = Tensor({emb_rows.size(), d});
  for (std::size_t r = 0; r < emb_rows.size(); ++r)
    std::copy(emb_rows[r].data().begin(), emb_rows[r].data().end(), frozen.image_embeddings.data().begin() + r * d);
  frozen.class_embeddings = frozen_classes_;
  return batch;
}

StepRecord PromptTuner::step() {
  require(!finished(), ErrorKind::kContract, "prompt tuning already finished");
  const std::size_t epoch = completed_ / steps_per_epoch_;
  const std::size_t within = completed_ % steps_per_epoch_;
  FrozenTargets frozen;
  LossBatch batch = make_batch(epoch, within, frozen);

  auto params = parameters();
  for (auto& p : params) p.zero_grad();
  StepRecord rec;
  rec.step = completed_ + 1;
  rec.epoch = epoch + 1;
  rec.seed = seed_;
  Var objective;
  if (config_.method == TuneMethod::kIvlp) {
    std::vector<Var> rows;
    for (const auto& img : batch.images) rows.push_back(encode_image_prompted(*backbone_, prompts_, img).embedding);
    objective = cross_entropy_loss(concat_rows(rows), encode_classes_prompted(*backbone_, prompts_, class_ids_),
                                   batch.labels, config_.weights.temperature);
    rec.ce = rec.total = objective.item();
  } else {
    PromptedOptions opt;
    opt.style = config_.style_mode;
    opt.style_layer = config_.style_layer;
    auto out = total_loss(*backbone_, prompts_, bank_, batch, config_.weights, opt, &frozen);
    rec.ce = out.ce;
    rec.cm = out.cm;
    rec.feat = out.feat;
    rec.diversity = out.diversity;
    rec.content = out.content;
    rec.total = out.total;
    objective = out.objective;
  }
  require(std::isfinite(rec.total), ErrorKind::kTraining,
          "non-finite loss at step " + std::to_string(rec.step) + " (epoch " + std::to_string(rec.epoch) + ")");
  backward(objective);
  sgd_step(params, velocity_, config_.learning_rate, config_.momentum);
  ++completed_;
  if (completed_ % steps_per_epoch_ == 0) verify_backbone();
  return rec;
}

void PromptTuner::run(std::size_t max_steps, const std::function<void(const StepRecord&)>& sink) {
  for (std::size_t n = 0; n < max_steps && !finished(); ++n) {
    auto rec = step();
    if (sink) sink(rec);
  }
}

void PromptTuner::verify_backbone() const {
  require(backbone_->checksum() == backbone_checksum_, ErrorKind::kInvariant,
          "frozen backbone weights changed during prompt tuning");
}

Checkpoint PromptTuner::checkpoint(const json& provenance) const {
  Checkpoint ck;
  ck.header = {{"kind", "prompt_tune"},
               {"tune", to_json(config_)},
               {"encoder", to_json(backbone_->config())},
               {"seed", seed_},
               {"class_ids", class_ids_},
               {"train_size", train_.size()},
               {"completed_steps", completed_},
               {"total_steps", total_steps()},
               {"backbone_checksum", hex64(backbone_checksum_)},
               {"provenance", provenance}};
  for (const auto& [name, p] : prompts_.named_parameters()) ck.put(name, p.value());
  ck.put("bank.mu", bank_.mu().value());
  ck.put("bank.sigma_raw", bank_.sigma_raw().value());
  for (std::size_t i = 0; i < velocity_.size(); ++i) ck.put("optimizer.velocity" + std::to_string(i), velocity_[i]);
  return ck;
}

void PromptTuner::restore(const Checkpoint& ck) {
  const auto& h = ck.header;
  require(h.value("kind", "") == "prompt_tune", ErrorKind::kCompatibility, "checkpoint is not a prompt-tuning run");
  require(h.at("backbone_checksum").get<std::string>() == hex64(backbone_checksum_), ErrorKind::kCompatibility,
          "checkpoint was tuned against a different backbone");
  require(h.at("tune") == to_json(config_), ErrorKind::kCompatibility, "checkpoint tuning settings differ from this run");
  require(h.at("seed").get<std::uint64_t>() == seed_, ErrorKind::kCompatibility, "checkpoint seed differs from this run");
  require(h.at("class_ids").get<std::vector<std::size_t>>() == class_ids_ &&
              h.at("train_size").get<std::size_t>() == train_.size(),
          ErrorKind::kCompatibility, "checkpoint class set or training set differs from this run");
  auto load = [&](const std::string& name, const Var& target) {
    const Tensor& t = ck.tensor(name);
    require(t.shape() == target.shape(), ErrorKind::kIntegrity, "checkpoint tensor '" + name + "' has wrong shape");
    Var leaf = target;
    leaf.assign(t);
  };
  for (const auto& [name, p] : prompts_.named_parameters()) load(name, p);
  load("bank.mu", bank_.mu());
  load("bank.sigma_raw", bank_.sigma_raw());
  for (std::size_t i = 0; i < velocity_.size(); ++i) {
    const Tensor& t = ck.tensor("optimizer.velocity" + std::to_string(i));
    require(t.shape() == velocity_[i].shape(), ErrorKind::kIntegrity, "optimizer state has wrong shape");
    velocity_[i] = t;
  }
  completed_ = h.at("completed_steps").get<std::size_t>();
  require(completed_ <= total_steps(), ErrorKind::kIntegrity, "checkpoint progress exceeds the run length");
}

TunedModel tuned_model_from_checkpoint(const Checkpoint& ck, const Backbone& backbone) {
  const auto& h = ck.header;
  require(h.value("kind", "") == "prompt_tune", ErrorKind::kCompatibility, "checkpoint is not a prompt-tuning run");
  require(h.at("backbone_checksum").get<std::string>() == hex64(backbone.checksum()), ErrorKind::kCompatibility,
          "tuned checkpoint belongs to a different backbone");
  TunedModel m;
  m.header = h;
  m.class_ids = h.at("class_ids").get<std::vector<std::size_t>>();
  m.prompts = PromptSet::zeros(backbone.config());
  for (const auto& [name, p] : m.prompts.named_parameters()) {
    const Tensor& t = ck.tensor(name);
    require(t.shape() == p.shape(), ErrorKind::kIntegrity, "checkpoint tensor '" + name + "' has wrong shape");
    Var leaf = p;
    leaf.assign(t);
    leaf.set_requires_grad(false);
  }
  m.bank = StyleBank::from_raw(ck.tensor("bank.mu"), ck.tensor("bank.sigma_raw"));
  return m;
}

}  // namespace styleprompt
