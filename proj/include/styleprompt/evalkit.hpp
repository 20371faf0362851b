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

// Evaluation protocols, the harmonic-mean metric, ablation sweeps and
// report files.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "styleprompt/config.hpp"
#include "styleprompt/data_synth.hpp"
#include "styleprompt/encoders.hpp"
#include "styleprompt/trainer.hpp"

namespace styleprompt {

/// Top-1 class (from `class_ids`) for each sample. `prompts == nullptr`
/// evaluates the frozen model; prompts are always run with style off.
std::vector<std::size_t> predict(const Backbone& backbone, const PromptSet* prompts, const Dataset& dataset,
                                 const std::vector<std::size_t>& samples, const std::vector<std::size_t>& class_ids);

/// Percentage of samples whose predicted class equals their label.
double accuracy(const Backbone& backbone, const PromptSet* prompts, const Dataset& dataset,
                const std::vector<std::size_t>& samples, const std::vector<std::size_t>& class_ids);

double harmonic_mean(double base, double novel);

struct EvalReport {
  std::string protocol;
  nlohmann::json metrics = nlohmann::json::object();
  /// Tidy rows for the CSV table: one object per row, same keys throughout.
  std::vector<nlohmann::json> table;
  nlohmann::json provenance = nlohmann::json::object();

  nlohmann::json to_json() const;
};

EvalReport base_to_novel_eval(const Backbone& backbone, const PromptSet& prompts, const Dataset& dataset,
                              const FewShotSplit& split);

/// Per-target-domain accuracy over `class_ids` plus the target average.
EvalReport domain_gen_eval(const Backbone& backbone, const PromptSet& prompts, const Dataset& dataset,
                           const DomainSplit& split, const std::vector<std::size_t>& class_ids);

/// Mean over samples of ‖f_p − f‖²/d for images plus the same over classes
/// for text: how far the prompted embeddings sit from the frozen ones.
double alignment_mse(const Backbone& backbone, const PromptSet& prompts, const Dataset& dataset,
                     const std::vector<std::size_t>& samples, const std::vector<std::size_t>& class_ids);

/// Writes <stem>.json and <stem>.csv.
void write_report(const EvalReport& report, const std::filesystem::path& stem);
std::string to_csv(const std::vector<nlohmann::json>& rows);

// --- experiment pipeline --------------------------------------------------------

struct ExperimentData {
  Dataset tune;      // all domains; prompt tuning draws only from sources
  Dataset pretrain;  // disjoint pool from the same domain and class specs
  FewShotSplit split;
  DomainSplit domains;
};

ExperimentData make_experiment_data(const Config& config, std::uint64_t seed);
/// Builds the splits over already generated (or loaded) datasets.
ExperimentData experiment_data_from(const Config& config, Dataset tune, Dataset pretrain, std::uint64_t seed);
Backbone pretrain_backbone(const Config& config, const ExperimentData& data, std::uint64_t seed,
                           const JsonSink& on_step = {});

struct CellOutcome {
  nlohmann::json metrics;  // base, novel, harmonic, target, per-domain, alignment
  std::vector<StepRecord> records;
};

/// Tunes on the few-shot split and evaluates every protocol.
CellOutcome run_cell(const Config& config, const std::shared_ptr<const Backbone>& backbone,
                     const ExperimentData& data, std::uint64_t seed);

struct AblationCell {
  std::string name;
  std::vector<std::string> overrides;
};

/// Cells for an axis. An empty grid gives the default cells.
std::vector<AblationCell> ablation_cells(const std::string& axis, const std::vector<std::string>& grid,
                                         const EncoderConfig& encoder);

/// One full pretrain + tune + eval per (cell, seed); the backbone is shared
/// across cells of a seed. `on_row` sees each completed row, so callers can
/// persist partial results.
std::vector<nlohmann::json> ablation_sweep(const Config& config, const std::vector<AblationCell>& cells,
                                           const std::vector<std::uint64_t>& seeds,
                                           const std::function<void(const nlohmann::json&)>& on_row = {});

/// Mean and sample standard deviation of a metric per cell.
std::vector<nlohmann::json> summarize_rows(const std::vector<nlohmann::json>& rows,
                                           const std::vector<std::string>& metrics);

}  // namespace styleprompt
