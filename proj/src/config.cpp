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

#include "styleprompt/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "styleprompt/errors.hpp"

namespace styleprompt {

using nlohmann::json;

namespace {

// Strict reader: every key of `j` must be consumed by a field.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j.is_object(), ErrorKind::kConfiguration, where() + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      require(seen_.count(key) > 0, ErrorKind::kConfiguration, "unknown configuration key '" + prefix() + key + "'");
  }

  template <typename T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::kConfiguration, "'" + prefix() + key + "': " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string prefix() const { return path_.empty() ? "" : path_ + "."; }

 private:
  std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

StyleMode style_mode_from(const std::string& s) {
  if (s == "shift") return StyleMode::kShift;
  if (s == "off") return StyleMode::kOff;
  fail(ErrorKind::kConfiguration, "tune.style_mode must be 'shift' or 'off', got '" + s + "'");
}

TuneMethod method_from(const std::string& s) {
  if (s == "style_bank") return TuneMethod::kStyleBank;
  if (s == "ivlp") return TuneMethod::kIvlp;
  fail(ErrorKind::kConfiguration, "tune.method must be 'style_bank' or 'ivlp', got '" + s + "'");
}

void read_encoder(Reader& r, EncoderConfig& c) {
  r.field("image_size", c.image_size);
  r.field("channels", c.channels);
  r.field("patch_grid", c.patch_grid);
  r.field("token_dim", c.token_dim);
  r.field("layers", c.layers);
  r.field("heads", c.heads);
  r.field("mlp_ratio", c.mlp_ratio);
  r.field("embed_dim", c.embed_dim);
  r.field("class_vocab", c.class_vocab);
  r.field("max_text_length", c.max_text_length);
  r.field("temperature", c.temperature);
  r.field("prompt_depth", c.prompt_depth);
  r.field("vision_prompts", c.vision_prompts);
  r.field("text_prompts", c.text_prompts);
}

void read_weights(Reader& r, LossWeights& w) {
  r.field("lambda_f", w.lambda_f);
  r.field("lambda_g", w.lambda_g);
  r.field("lambda1", w.lambda1);
  r.field("lambda2", w.lambda2);
  r.field("lambda_cm", w.lambda_cm);
  r.field("temperature", w.temperature);
}

}  // namespace

std::string_view to_string(TuneMethod method) { return method == TuneMethod::kIvlp ? "ivlp" : "style_bank"; }
std::string_view to_string(StyleMode mode) { return mode == StyleMode::kShift ? "shift" : "off"; }

Config::Config() { model.prompt_depth = 9; }

EncoderConfig Config::encoder() const {
  EncoderConfig c = model;
  c.prompt_depth = std::min(model.prompt_depth, model.layers);
  return c;
}

void Config::validate() const {
  require(model.prompt_depth >= 1, ErrorKind::kConfiguration, "model.prompt_depth must be at least 1");
  encoder().validate();
  require(data.classes <= model.class_vocab, ErrorKind::kConfiguration, "data.classes exceeds model.class_vocab");
  require(data.domains >= 2 && data.classes >= 4, ErrorKind::kConfiguration, "need at least 2 domains and 4 classes");
  require(data.samples_per_cell > 0 && data.shots > 0, ErrorKind::kConfiguration, "sample counts must be positive");
  for (auto d : data.source_domains)
    require(d < data.domains, ErrorKind::kConfiguration, "data.source_domains refers to a missing domain");
  for (auto d : data.target_domains) {
    require(d < data.domains, ErrorKind::kConfiguration, "data.target_domains refers to a missing domain");
    require(std::find(data.source_domains.begin(), data.source_domains.end(), d) == data.source_domains.end(),
            ErrorKind::kConfiguration, "a domain cannot be both source and target");
  }
  require(pretrain.learning_rate > 0 && pretrain.min_temperature > 0, ErrorKind::kConfiguration,
          "pretrain.learning_rate and pretrain.min_temperature must be positive");
  require(pretrain.samples_per_cell > 0, ErrorKind::kConfiguration, "pretrain.samples_per_cell must be positive");
  require(pretrain.domains == "source" || pretrain.domains == "all", ErrorKind::kConfiguration,
          "pretrain.domains must be 'source' or 'all'");
  require(tune.learning_rate > 0, ErrorKind::kConfiguration, "tune.learning_rate must be positive");
  require(tune.momentum >= 0 && tune.momentum < 1, ErrorKind::kConfiguration, "tune.momentum must lie in [0, 1)");
  require(tune.batch_size > 0 && tune.epochs > 0, ErrorKind::kConfiguration, "tune.batch_size and tune.epochs must be positive");
  require(tune.n_bases >= 1, ErrorKind::kConfiguration, "tune.n_bases must be at least 1");
  require(tune.bank_init == "standard" || tune.bank_init == "feature_stats", ErrorKind::kConfiguration,
          "tune.bank_init must be 'standard' or 'feature_stats'");
  require(tune.bank_spread >= 0.0 && std::isfinite(tune.bank_spread), ErrorKind::kConfiguration,
          "tune.bank_spread must be finite and non-negative");
  require(tune.style_layer >= 1 && tune.style_layer < model.layers, ErrorKind::kConfiguration,
          "tune.style_layer must lie in [1, " + std::to_string(model.layers - 1) + "]");
  tune.weights.validate();
  static const std::set<std::string> protocols{"base_to_novel", "domain_gen", "all"};
  require(protocols.count(eval.protocol) > 0, ErrorKind::kConfiguration,
          "eval.protocol must be base_to_novel, domain_gen or all");
  static const std::set<std::string> axes{"loss-terms", "style-layer", "n-bases", "augmentation"};
  require(axes.count(ablate.axis) > 0, ErrorKind::kConfiguration,
          "ablate.axis must be loss-terms, style-layer, n-bases or augmentation");
  require(!ablate.seeds.empty(), ErrorKind::kConfiguration, "ablate.seeds must be nonempty");
}

json to_json(const EncoderConfig& c) {
  return {{"image_size", c.image_size},   {"channels", c.channels},
          {"patch_grid", c.patch_grid},   {"token_dim", c.token_dim},
          {"layers", c.layers},           {"heads", c.heads},
          {"mlp_ratio", c.mlp_ratio},     {"embed_dim", c.embed_dim},
          {"class_vocab", c.class_vocab}, {"max_text_length", c.max_text_length},
          {"temperature", c.temperature}, {"prompt_depth", c.prompt_depth},
          {"vision_prompts", c.vision_prompts}, {"text_prompts", c.text_prompts}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  {
    Reader r(j, "model");
    read_encoder(r, c);
  }
  c.validate();
  return c;
}

json to_json(const LossWeights& w) {
  return {{"lambda_f", w.lambda_f}, {"lambda_g", w.lambda_g},   {"lambda1", w.lambda1},
          {"lambda2", w.lambda2},   {"lambda_cm", w.lambda_cm}, {"temperature", w.temperature}};
}

json to_json(const TuneConfig& t) {
  return {{"method", std::string(to_string(t.method))},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"momentum", t.momentum},
          {"style_mode", std::string(to_string(t.style_mode))},
          {"style_layer", t.style_layer},
          {"n_bases", t.n_bases},
          {"bank_init", t.bank_init},
          {"bank_spread", t.bank_spread},
          {"crop_augment", t.crop_augment},
          {"weights", to_json(t.weights)}};
}

json to_json(const Config& c) {
  json j;
  j["format_version"] = kConfigFormatVersion;
  j["seed"] = c.seed;
  j["model"] = to_json(c.model);
  j["data"] = {{"root", c.data.root},
               {"domains", c.data.domains},
               {"classes", c.data.classes},
               {"samples_per_cell", c.data.samples_per_cell},
               {"source_domains", c.data.source_domains},
               {"target_domains", c.data.target_domains},
               {"fraction_base", c.data.fraction_base},
               {"shots", c.data.shots}};
  j["pretrain"] = {{"epochs", c.pretrain.epochs},
                   {"learning_rate", c.pretrain.learning_rate},
                   {"samples_per_cell", c.pretrain.samples_per_cell},
                   {"domains", c.pretrain.domains},
                   {"min_temperature", c.pretrain.min_temperature}};
  j["tune"] = to_json(c.tune);
  j["eval"] = {{"protocol", c.eval.protocol}};
  j["ablate"] = {{"axis", c.ablate.axis}, {"grid", c.ablate.grid}, {"seeds", c.ablate.seeds}};
  return j;
}

Config config_from_json(const json& j) {
  Config c;
  {
    Reader root(j, "");
    int version = kConfigFormatVersion;
    root.field("format_version", version);
    require(version == kConfigFormatVersion, ErrorKind::kCompatibility,
            "config format_version " + std::to_string(version) + " unsupported (expected " +
                std::to_string(kConfigFormatVersion) + ")");
    root.field("seed", c.seed);
    if (const json* m = root.child("model")) {
      Reader r(*m, "model");
      read_encoder(r, c.model);
    }
    if (const json* d = root.child("data")) {
      Reader r(*d, "data");
      r.field("root", c.data.root);
      r.field("domains", c.data.domains);
      r.field("classes", c.data.classes);
      r.field("samples_per_cell", c.data.samples_per_cell);
      r.field("source_domains", c.data.source_domains);
      r.field("target_domains", c.data.target_domains);
      r.field("fraction_base", c.data.fraction_base);
      r.field("shots", c.data.shots);
    }
    if (const json* p = root.child("pretrain")) {
      Reader r(*p, "pretrain");
      r.field("epochs", c.pretrain.epochs);
      r.field("learning_rate", c.pretrain.learning_rate);
      r.field("samples_per_cell", c.pretrain.samples_per_cell);
      r.field("domains", c.pretrain.domains);
      r.field("min_temperature", c.pretrain.min_temperature);
    }
    if (const json* t = root.child("tune")) {
      Reader r(*t, "tune");
      std::string method(to_string(c.tune.method)), mode(to_string(c.tune.style_mode));
      r.field("method", method);
      r.field("style_mode", mode);
      c.tune.method = method_from(method);
      c.tune.style_mode = style_mode_from(mode);
      r.field("epochs", c.tune.epochs);
      r.field("batch_size", c.tune.batch_size);
      r.field("learning_rate", c.tune.learning_rate);
      r.field("momentum", c.tune.momentum);
      r.field("style_layer", c.tune.style_layer);
      r.field("n_bases", c.tune.n_bases);
      r.field("bank_init", c.tune.bank_init);
      r.field("bank_spread", c.tune.bank_spread);
      r.field("crop_augment", c.tune.crop_augment);
      if (const json* w = r.child("weights")) {
        Reader rw(*w, "tune.weights");
        read_weights(rw, c.tune.weights);
      }
    }
    if (const json* e = root.child("eval")) {
      Reader r(*e, "eval");
      r.field("protocol", c.eval.protocol);
    }
    if (const json* a = root.child("ablate")) {
      Reader r(*a, "ablate");
      r.field("axis", c.ablate.axis);
      r.field("grid", c.ablate.grid);
      r.field("seeds", c.ablate.seeds);
    }
  }
  c.validate();
  return c;
}

void apply_override(json& document, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::kUsage,
          "override '" + assignment + "' must have the form key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json* node = &document;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(node->is_object() && node->contains(key), ErrorKind::kConfiguration,
            "override targets unknown configuration key '" + path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  *node = value;
}

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open config " + path.string());
  json j = json::parse(in, nullptr, false);
  require(!j.is_discarded(), ErrorKind::kConfiguration, path.string() + ": not valid JSON");
  // Overrides may name keys the file leaves at their defaults.
  json full = to_json(Config{});
  full.merge_patch(j);
  for (const auto& o : overrides) apply_override(full, o);
  return config_from_json(full);
}

Config default_config_with(const std::vector<std::string>& overrides) {
  json full = to_json(Config{});
  for (const auto& o : overrides) apply_override(full, o);
  return config_from_json(full);
}

}  // namespace styleprompt
