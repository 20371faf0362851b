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

#include "styleprompt/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>

#include "styleprompt/errors.hpp"
#include "styleprompt/rng.hpp"

namespace styleprompt {

using nlohmann::json;

namespace {

// Evaluation must not build a graph through the prompts.
PromptSet frozen_copy(const PromptSet& prompts) {
  PromptSet copy;
  for (const auto& v : prompts.vision) copy.vision.push_back(constant(v.value()));
  for (const auto& t : prompts.text) copy.text.push_back(constant(t.value()));
  return copy;
}

Var class_embeddings(const Backbone& backbone, const PromptSet* prompts, const std::vector<std::size_t>& class_ids) {
  return prompts ? encode_classes_prompted(backbone, *prompts, class_ids) : encode_classes_frozen(backbone, class_ids);
}

Var image_embedding(const Backbone& backbone, const PromptSet* prompts, const Tensor& image) {
  return prompts ? encode_image_prompted(backbone, *prompts, image).embedding
                 : encode_image_frozen(backbone, image).embedding;
}

enum SeedTag : std::uint64_t { kTuneData = 0xDA, kPretrainData = 0xDB, kSplit = 0x5E, kPretrainRun = 0x9B };

}  // namespace

std::vector<std::size_t> predict(const Backbone& backbone, const PromptSet* prompts, const Dataset& dataset,
                                 const std::vector<std::size_t>& samples, const std::vector<std::size_t>& class_ids) {
  require(!samples.empty(), ErrorKind::kContract, "evaluation sample set is empty");
  require(!class_ids.empty(), ErrorKind::kContract, "evaluation class set is empty");
  std::optional<PromptSet> local;
  if (prompts) local = frozen_copy(*prompts);
  const PromptSet* p = local ? &*local : nullptr;
  const Var classes = class_embeddings(backbone, p, class_ids);
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (auto i : samples) {
    const Tensor logits =
        similarity_logits(image_embedding(backbone, p, dataset.samples.at(i).pixels), classes, backbone.temperature())
            .value();
    const auto best = std::max_element(logits.data().begin(), logits.data().end()) - logits.data().begin();
    out.push_back(class_ids[static_cast<std::size_t>(best)]);
  }
  return out;
}

double accuracy(const Backbone& backbone, const PromptSet* prompts, const Dataset& dataset,
                const std::vector<std::size_t>& samples, const std::vector<std::size_t>& class_ids) {
  const auto pred = predict(backbone, prompts, dataset, samples, class_ids);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) correct += pred[k] == dataset.samples[samples[k]].class_id;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(samples.size());
}

double harmonic_mean(double base, double novel) {
  require(base > 0.0 && novel > 0.0, ErrorKind::kContract, "harmonic_mean needs positive accuracies");
  return 2.0 * base * novel / (base + novel);
}

json EvalReport::to_json() const {
  return {{"protocol", protocol}, {"metrics", metrics}, {"table", table}, {"provenance", provenance}};
}

EvalReport base_to_novel_eval(const Backbone& backbone, const PromptSet& prompts, const Dataset& dataset,
                              const FewShotSplit& split) {
  for (auto i : split.train) {
    const auto c = dataset.samples.at(i).class_id;
    require(std::find(split.novel_classes.begin(), split.novel_classes.end(), c) == split.novel_classes.end(),
            ErrorKind::kContract, "class leakage: novel class " + std::to_string(c) + " appears in the training set");
  }
  EvalReport r;
  r.protocol = "base_to_novel";
  const double base = accuracy(backbone, &prompts, dataset, split.base_test, split.base_classes);
  const double novel = accuracy(backbone, &prompts, dataset, split.novel_test, split.novel_classes);
  const double h = (base > 0 && novel > 0) ? harmonic_mean(base, novel) : 0.0;
  r.metrics = {{"base", base}, {"novel", novel}, {"harmonic", h}};
  r.table = {{{"split", "base"}, {"accuracy", base}, {"samples", split.base_test.size()}},
             {{"split", "novel"}, {"accuracy", novel}, {"samples", split.novel_test.size()}},
             {{"split", "harmonic"}, {"accuracy", h}, {"samples", 0}}};
  r.provenance = {{"base_classes", split.base_classes}, {"novel_classes", split.novel_classes},
                  {"shots", split.shots},               {"split_seed", split.seed},
                  {"domains", split.domains}};
  return r;
}

EvalReport domain_gen_eval(const Backbone& backbone, const PromptSet& prompts, const Dataset& dataset,
                           const DomainSplit& split, const std::vector<std::size_t>& class_ids) {
  EvalReport r;
  r.protocol = "domain_gen";
  double total = 0;
  for (std::size_t t = 0; t < split.target_domains.size(); ++t) {
    std::vector<std::size_t> samples;
    for (auto i : split.target_test[t])
      if (std::find(class_ids.begin(), class_ids.end(), dataset.samples[i].class_id) != class_ids.end())
        samples.push_back(i);
    const double acc = accuracy(backbone, &prompts, dataset, samples, class_ids);
    total += acc;
    r.table.push_back({{"domain", split.target_domains[t]}, {"accuracy", acc}, {"samples", samples.size()}});
  }
  const double avg = total / static_cast<double>(split.target_domains.size());
  r.metrics = {{"target_average", avg}};
  r.provenance = {{"source_domains", split.source_domains},
                  {"target_domains", split.target_domains},
                  {"class_ids", class_ids}};
  return r;
}

double alignment_mse(const Backbone& backbone, const PromptSet& prompts, const Dataset& dataset,
                     const std::vector<std::size_t>& samples, const std::vector<std::size_t>& class_ids) {
  require(!samples.empty() && !class_ids.empty(), ErrorKind::kContract, "alignment_mse needs samples and classes");
  const PromptSet p = frozen_copy(prompts);
  auto sq = [](const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.numel(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s / static_cast<double>(a.cols());
  };
  double img = 0;
  for (auto i : samples) {
    const auto& x = dataset.samples.at(i).pixels;
    img += sq(encode_image_prompted(backbone, p, x).embedding.value(), encode_image_frozen(backbone, x).embedding.value());
  }
  const Tensor tp = encode_classes_prompted(backbone, p, class_ids).value();
  const Tensor tf = encode_classes_frozen(backbone, class_ids).value();
  return img / static_cast<double>(samples.size()) + sq(tp, tf) / static_cast<double>(class_ids.size());
}

std::string to_csv(const std::vector<json>& rows) {
  if (rows.empty()) return "";
  std::vector<std::string> keys;
  for (const auto& [k, v] : rows.front().items()) keys.push_back(k);
  auto cell = [](const json& v) {
    std::string s = v.is_string() ? v.get<std::string>() : v.dump();
    if (s.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      return q + "\"";
    }
    return s;
  };
  std::string out;
  for (std::size_t k = 0; k < keys.size(); ++k) out += (k ? "," : "") + keys[k];
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < keys.size(); ++k) out += (k ? "," : "") + cell(row.value(keys[k], json()));
    out += '\n';
  }
  return out;
}

void write_report(const EvalReport& report, const std::filesystem::path& stem) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream js(stem.string() + ".json");
  require(static_cast<bool>(js), ErrorKind::kIo, "cannot write " + stem.string() + ".json");
  js << report.to_json().dump(2) << '\n';
  std::ofstream csv(stem.string() + ".csv");
  require(static_cast<bool>(csv), ErrorKind::kIo, "cannot write " + stem.string() + ".csv");
  csv << to_csv(report.table);
}

// --- experiment pipeline --------------------------------------------------------

ExperimentData make_experiment_data(const Config& config, std::uint64_t seed) {
  config.validate();
  const auto domains = default_domains(config.data.domains, 0);
  const auto classes = default_classes(config.data.classes);
  return experiment_data_from(
      config,
      generate_dataset(domains, classes, config.data.samples_per_cell, derive_seed(seed, {kTuneData}),
                       config.model.image_size),
      generate_dataset(domains, classes, config.pretrain.samples_per_cell, derive_seed(seed, {kPretrainData}),
                       config.model.image_size),
      seed);
}

ExperimentData experiment_data_from(const Config& config, Dataset tune, Dataset pretrain, std::uint64_t seed) {
  config.validate();
  require(tune.image_size == config.model.image_size && pretrain.image_size == config.model.image_size,
          ErrorKind::kCompatibility, "dataset image size does not match model.image_size");
  ExperimentData d;
  d.tune = std::move(tune);
  d.pretrain = std::move(pretrain);
  d.split = make_base_to_novel_split(d.tune, config.data.fraction_base, config.data.shots,
                                     derive_seed(seed, {kSplit}), config.data.source_domains);
  d.domains = make_domain_split(d.tune, config.data.source_domains, config.data.target_domains);
  return d;
}

Backbone pretrain_backbone(const Config& config, const ExperimentData& data, std::uint64_t seed,
                           const JsonSink& on_step) {
  const auto& sources = config.data.source_domains;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < data.pretrain.samples.size(); ++i)
    if (config.pretrain.domains == "all" ||
        std::find(sources.begin(), sources.end(), data.pretrain.samples[i].domain_id) != sources.end())
      pool.push_back(i);
  return pretrain(config.encoder(), config.pretrain, data.pretrain, pool, derive_seed(seed, {kPretrainRun}), on_step)
      .backbone;
}

CellOutcome run_cell(const Config& config, const std::shared_ptr<const Backbone>& backbone,
                     const ExperimentData& data, std::uint64_t seed) {
  CellOutcome out;
  const auto start = std::chrono::steady_clock::now();
  PromptTuner tuner(backbone, data.tune, data.split.train, data.split.base_classes, config.tune, seed);
  tuner.run(tuner.total_steps(), [&](const StepRecord& r) { out.records.push_back(r); });
  const auto& bb = *backbone;
  const auto& prompts = tuner.prompts();
  auto b2n = base_to_novel_eval(bb, prompts, data.tune, data.split);
  auto dg = domain_gen_eval(bb, prompts, data.tune, data.domains, data.split.base_classes);

  const std::size_t spe = tuner.steps_per_epoch();
  auto epoch_mean = [&](std::size_t epoch) {
    double s = 0;
    for (std::size_t k = (epoch - 1) * spe; k < epoch * spe; ++k) s += out.records[k].total;
    return s / static_cast<double>(spe);
  };
  out.metrics = {{"base", b2n.metrics["base"]},
                 {"novel", b2n.metrics["novel"]},
                 {"harmonic", b2n.metrics["harmonic"]},
                 {"target", dg.metrics["target_average"]},
                 {"alignment_mse", alignment_mse(bb, prompts, data.tune, data.split.base_test, data.split.base_classes)},
                 {"first_epoch_loss", epoch_mean(1)},
                 {"final_epoch_loss", epoch_mean(config.tune.epochs)}};
  for (const auto& row : dg.table)
    out.metrics["target_domain_" + std::to_string(row["domain"].get<std::size_t>())] = row["accuracy"];
  out.metrics["seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<AblationCell> ablation_cells(const std::string& axis, const std::vector<std::string>& grid,
                                         const EncoderConfig& encoder) {
  std::vector<AblationCell> cells;
  if (axis == "loss-terms") {
    const std::vector<AblationCell> all = {
        {"ivlp",
         {"tune.style_mode=\"off\"", "tune.weights.lambda1=0", "tune.weights.lambda2=0", "tune.weights.lambda_f=0",
          "tune.weights.lambda_g=0", "tune.weights.lambda_cm=0"}},
        {"+style",
         {"tune.style_mode=\"shift\"", "tune.weights.lambda2=0", "tune.weights.lambda_f=0", "tune.weights.lambda_g=0",
          "tune.weights.lambda_cm=0"}},
        {"+content", {"tune.weights.lambda_f=0", "tune.weights.lambda_g=0", "tune.weights.lambda_cm=0"}},
        {"+feat", {"tune.weights.lambda_cm=0"}},
        {"+cm", {}},
    };
    for (const auto& c : all)
      if (grid.empty() || std::find(grid.begin(), grid.end(), c.name) != grid.end()) cells.push_back(c);
    require(!cells.empty(), ErrorKind::kConfiguration, "loss-terms grid names no known cell");
  } else if (axis == "style-layer") {
    std::vector<std::string> layers = grid;
    if (layers.empty())
      for (std::size_t l = 1; l < encoder.layers; ++l) layers.push_back(std::to_string(l));
    for (const auto& l : layers) cells.push_back({"layer=" + l, {"tune.style_layer=" + l}});
  } else if (axis == "n-bases") {
    std::vector<std::string> ns = grid.empty() ? std::vector<std::string>{"1", "4", "8", "12", "16", "24"} : grid;
    for (const auto& n : ns) cells.push_back({"n_bases=" + n, {"tune.n_bases=" + n}});
  } else if (axis == "augmentation") {
    const std::vector<AblationCell> all = {
        {"none", {"tune.style_mode=\"off\"", "tune.crop_augment=false"}},
        {"crop", {"tune.style_mode=\"off\"", "tune.crop_augment=true"}},
        {"style", {"tune.style_mode=\"shift\"", "tune.crop_augment=false"}},
        {"style+crop", {"tune.style_mode=\"shift\"", "tune.crop_augment=true"}},
    };
    for (const auto& c : all)
      if (grid.empty() || std::find(grid.begin(), grid.end(), c.name) != grid.end()) cells.push_back(c);
    require(!cells.empty(), ErrorKind::kConfiguration, "augmentation grid names no known cell");
  } else {
    fail(ErrorKind::kConfiguration, "unknown ablation axis '" + axis + "'");
  }
  return cells;
}

std::vector<json> ablation_sweep(const Config& config, const std::vector<AblationCell>& cells,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::function<void(const json&)>& on_row) {
  require(!cells.empty() && !seeds.empty(), ErrorKind::kContract, "ablation grid and seed list must be nonempty");
  // Resolve every cell first so a bad override fails before any training.
  std::vector<Config> cell_configs;
  for (const auto& cell : cells) {
    json doc = to_json(config);
    for (const auto& o : cell.overrides) apply_override(doc, o);
    cell_configs.push_back(config_from_json(doc));
  }
  std::vector<json> rows;
  for (auto seed : seeds) {
    const auto data = make_experiment_data(config, seed);
    const auto backbone = std::make_shared<const Backbone>(pretrain_backbone(config, data, seed));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      auto outcome = run_cell(cell_configs[c], backbone, data, seed);
      json row = outcome.metrics;
      row["cell"] = cells[c].name;
      row["seed"] = seed;
      rows.push_back(row);
      if (on_row) on_row(row);
    }
  }
  return rows;
}

std::vector<json> summarize_rows(const std::vector<json>& rows, const std::vector<std::string>& metrics) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const json*>> groups;
  for (const auto& r : rows) {
    const auto name = r.at("cell").get<std::string>();
    if (!groups.count(name)) order.push_back(name);
    groups[name].push_back(&r);
  }
  std::vector<json> out;
  for (const auto& name : order) {
    json s = {{"cell", name}, {"seeds", groups[name].size()}};
    for (const auto& m : metrics) {
      double sum = 0, sq = 0;
      const auto& g = groups[name];
      for (const auto* r : g) sum += r->at(m).get<double>();
      const double mean = sum / static_cast<double>(g.size());
      for (const auto* r : g) sq += std::pow(r->at(m).get<double>() - mean, 2);
      s[m + "_mean"] = mean;
      s[m + "_std"] = g.size() > 1 ? std::sqrt(sq / static_cast<double>(g.size() - 1)) : 0.0;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace styleprompt
