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

// Run configuration: one JSON document with a format version. Missing keys
// take the defaults below; unknown keys are configuration errors. CLI
// overrides are dotted paths applied to the document before parsing.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "styleprompt/encoders.hpp"
#include "styleprompt/losses.hpp"

namespace styleprompt {

inline constexpr int kConfigFormatVersion = 1;

struct DataConfig {
  std::string root = "data";
  std::size_t domains = 4;
  std::size_t classes = 8;
  std::size_t samples_per_cell = 60;
  std::vector<std::size_t> source_domains{0, 1};
  std::vector<std::size_t> target_domains{2, 3};
  double fraction_base = 0.5;
  std::size_t shots = 16;
};

struct PretrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 2e-3;  // Adam
  std::size_t samples_per_cell = 4;  // separate pool from the tuning data
  std::string domains = "all";       // source | all
  double min_temperature = 0.01;
};

enum class TuneMethod { kStyleBank, kIvlp };

struct TuneConfig {
  TuneMethod method = TuneMethod::kStyleBank;
  std::size_t epochs = 25;
  std::size_t batch_size = 4;
  double learning_rate = 0.0025;
  double momentum = 0.9;
  StyleMode style_mode = StyleMode::kShift;
  std::size_t style_layer = 2;
  std::size_t n_bases = 12;
  /// standard: mu ~ N(0, 0.5²), sigma = 1. feature_stats: bases drawn around
  /// the frozen style statistics of the training images at style_layer.
  std::string bank_init = "feature_stats";
  double bank_spread = 1.0;  // feature_stats: spread in units of the sample std
  bool crop_augment = false;
  LossWeights weights;
};

struct EvalConfig {
  std::string protocol = "base_to_novel";  // base_to_novel | domain_gen | all
};

struct AblateConfig {
  std::string axis = "loss-terms";  // loss-terms | style-layer | n-bases | augmentation
  std::vector<std::string> grid;    // empty: the axis default
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

struct Config {
  std::uint64_t seed = 0;
  /// model.prompt_depth is the requested depth; encoder() saturates it.
  EncoderConfig model;
  DataConfig data;
  PretrainConfig pretrain;
  TuneConfig tune;
  EvalConfig eval;
  AblateConfig ablate;

  Config();
  void validate() const;
  /// Encoder settings with the prompt depth saturated to the layer count.
  EncoderConfig encoder() const;
};

std::string_view to_string(TuneMethod method);
std::string_view to_string(StyleMode mode);

nlohmann::json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossWeights& weights);
nlohmann::json to_json(const TuneConfig& config);
nlohmann::json to_json(const Config& config);
Config config_from_json(const nlohmann::json& j);

/// "a.b.c=value"; the value is parsed as JSON when possible, otherwise kept
/// as a string. The path must already exist in the document.
void apply_override(nlohmann::json& document, const std::string& assignment);

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
Config default_config_with(const std::vector<std::string>& overrides);

}  // namespace styleprompt
