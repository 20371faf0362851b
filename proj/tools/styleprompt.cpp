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


// Command-line entry point: data generation, pre-training, prompt tuning,
// evaluation, ablation, bank inspection and the verification suite.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "styleprompt/checkpoint.hpp"
#include "styleprompt/config.hpp"
#include "styleprompt/errors.hpp"
#include "styleprompt/evalkit.hpp"
#include "styleprompt/trainer.hpp"
#include "styleprompt/verify.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace styleprompt;

constexpr const char* kOutEnv = "STYLEPROMPT_OUT";
constexpr const char* kToolVersion = "1.0.0";

std::string default_out_root() {
  const char* env = std::getenv(kOutEnv);
  return env && *env ? env : "runs";
}

template <typename T>
std::string show(const T& value) {
  return json(value).dump();
}

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = default_out_root();
  int verbosity = 0;
};

/// Training hyperparameter flags. Unset flags leave the configuration as is.
struct HyperFlags {
  std::optional<std::size_t> epochs, batch_size, n_bases, style_layer, shots, prompt_depth;
  std::optional<double> learning_rate, lambda_f, lambda_g, lambda1, lambda2;

  void attach(CLI::App* app) {
    const Config d;
    app->add_option("--epochs", epochs, "Prompt-tuning epochs")->default_str(show(d.tune.epochs));
    app->add_option("--lr", learning_rate, "SGD learning rate")->default_str(show(d.tune.learning_rate));
    app->add_option("--batch-size", batch_size, "Batch size")->default_str(show(d.tune.batch_size));
    app->add_option("--n-bases", n_bases, "Number of style bases N")->default_str(show(d.tune.n_bases));
    app->add_option("--style-layer", style_layer, "Transformer layer whose output is restyled")
        ->default_str(show(d.tune.style_layer));
    app->add_option("--prompt-depth", prompt_depth, "Requested prompt depth (saturates at the layer count)")
        ->default_str(show(d.model.prompt_depth));
    app->add_option("--lambda-f", lambda_f, "Feature alignment weight")->default_str(show(d.tune.weights.lambda_f));
    app->add_option("--lambda-g", lambda_g, "Text alignment weight")->default_str(show(d.tune.weights.lambda_g));
    app->add_option("--lambda-1", lambda1, "Diversity weight")->default_str(show(d.tune.weights.lambda1));
    app->add_option("--lambda-2", lambda2, "Content consistency weight")->default_str(show(d.tune.weights.lambda2));
    app->add_option("--shots", shots, "Training shots per base class")->default_str(show(d.data.shots));
  }

  void append_overrides(std::vector<std::string>& out) const {
    auto add = [&](const char* key, const auto& v) {
      if (v) out.push_back(std::string(key) + "=" + show(*v));
    };
    add("tune.epochs", epochs);
    add("tune.learning_rate", learning_rate);
    add("tune.batch_size", batch_size);
    add("tune.n_bases", n_bases);
    add("tune.style_layer", style_layer);
    add("model.prompt_depth", prompt_depth);
    add("tune.weights.lambda_f", lambda_f);
    add("tune.weights.lambda_g", lambda_g);
    add("tune.weights.lambda1", lambda1);
    add("tune.weights.lambda2", lambda2);
    add("data.shots", shots);
  }
};

struct Context {
  Config config;
  std::uint64_t seed = 0;
  fs::path out;
  int verbosity = 0;

  json provenance(const std::string& command) const {
    return {{"command", command}, {"tool_version", kToolVersion}, {"config", to_json(config)}, {"seed", seed}};
  }
};

Context make_context(const GlobalOptions& g, const HyperFlags& flags) {
  std::vector<std::string> overrides = g.overrides;
  flags.append_overrides(overrides);
  if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
  Context ctx;
  ctx.config = g.config_path.empty() ? default_config_with(overrides) : load_config(g.config_path, overrides);
  ctx.config.validate();
  ctx.seed = ctx.config.seed;
  ctx.out = g.out;
  ctx.verbosity = g.verbosity;
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  require(!ec, ErrorKind::kIo, "cannot create output directory " + ctx.out.string() + ": " + ec.message());
  return ctx;
}

fs::path or_default(const std::string& given, const fs::path& fallback) { return given.empty() ? fallback : fs::path(given); }

void require_input(const fs::path& path, const std::string& what, const std::string& producer) {
  require(fs::exists(path), ErrorKind::kPrerequisite,
          what + " not found at " + path.string() + " (produce it with `styleprompt " + producer + "`)");
}

void write_json(const fs::path& path, const json& document) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out << document.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// --- datasets -------------------------------------------------------------------

Dataset load_checked(const fs::path& root, const Config& config) {
  require_input(root / "manifest.json", "dataset manifest", "gen-data");
  Dataset d = load_dataset(root);
  require(d.domains.size() == config.data.domains && d.classes.size() == config.data.classes &&
              d.image_size == config.model.image_size,
          ErrorKind::kCompatibility,
          "dataset at " + root.string() + " does not match data.domains, data.classes or model.image_size");
  return d;
}

ExperimentData load_experiment(const fs::path& data_root, const Config& config, std::uint64_t seed) {
  return experiment_data_from(config, load_checked(data_root / "tune", config),
                              load_checked(data_root / "pretrain", config), seed);
}

int cmd_gen_data(const Context& ctx, const std::string& data_dir) {
  const fs::path root = or_default(data_dir, ctx.out / "data");
  const auto data = make_experiment_data(ctx.config, ctx.seed);
  const json prov = ctx.provenance("gen-data");
  save_dataset(data.tune, root / "tune", prov);
  save_dataset(data.pretrain, root / "pretrain", prov);
  std::cout << json{{"data", root.string()},
                    {"tune_samples", data.tune.samples.size()},
                    {"pretrain_samples", data.pretrain.samples.size()},
                    {"seed", ctx.seed}}
                   .dump()
            << '\n';
  return 0;
}

// --- pre-training ---------------------------------------------------------------

int cmd_pretrain(const Context& ctx, const std::string& data_dir) {
  const auto start = std::chrono::steady_clock::now();
  const auto data = load_experiment(or_default(data_dir, ctx.out / "data"), ctx.config, ctx.seed);
  const json prov = ctx.provenance("pretrain");
  std::ofstream records(ctx.out / "pretrain_record.jsonl");
  require(static_cast<bool>(records), ErrorKind::kIo, "cannot write pretrain_record.jsonl");
  records << json{{"kind", "header"}, {"provenance", prov}}.dump() << '\n';
  json last;
  std::size_t steps = 0;
  const Backbone bb = pretrain_backbone(ctx.config, data, ctx.seed, [&](const json& r) {
    records << r.dump() << '\n';
    last = r;
    ++steps;
    if (ctx.verbosity > 0) std::cerr << r.dump() << '\n';
  });
  records.flush();
  const fs::path ckpt = ctx.out / "backbone.ckpt";
  save_checkpoint(ckpt, backbone_checkpoint(bb, prov));
  const json summary = {{"provenance", prov},
                        {"checkpoint", ckpt.string()},
                        {"backbone_checksum", backbone_checkpoint(bb, {}).header.at("checksum")},
                        {"steps", steps},
                        {"final_step", last},
                        {"wall_clock_seconds", seconds_since(start)}};
  write_json(ctx.out / "pretrain_summary.json", summary);
  std::cout << json{{"checkpoint", ckpt.string()}, {"steps", steps}}.dump() << '\n';
  return 0;
}

std::shared_ptr<const Backbone> load_backbone(const fs::path& path, const Config& config) {
  require_input(path, "backbone checkpoint", "pretrain");
  auto bb = std::make_shared<const Backbone>(backbone_from_checkpoint(load_checkpoint(path)));
  require(to_json(bb->config()) == to_json(config.encoder()), ErrorKind::kCompatibility,
          "backbone at " + path.string() + " was built with different model settings");
  return bb;
}

// --- prompt tuning --------------------------------------------------------------

struct TuneOptions {
  std::string data, backbone;
  std::optional<std::size_t> max_steps;
  bool resume = false;
};

/// Keeps the header and every step record up to `completed`; returns the text.
std::string records_up_to(const fs::path& path, const json& header, std::size_t completed) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kPrerequisite, "cannot resume: " + path.string() + " is missing");
  std::string line, kept;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json r = json::parse(line, nullptr, false);
    require(!r.is_discarded(), ErrorKind::kIntegrity, path.string() + ": malformed record");
    if (first) {
      require(r == header, ErrorKind::kCompatibility, "cannot resume: run record header differs from this run");
      first = false;
    } else if (r.at("step").get<std::size_t>() > completed) {
      break;
    }
    kept += line + '\n';
  }
  require(!first, ErrorKind::kIntegrity, "cannot resume: run record is empty");
  return kept;
}

int cmd_tune(const Context& ctx, const TuneOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const auto bb = load_backbone(or_default(opt.backbone, ctx.out / "backbone.ckpt"), ctx.config);
  const auto data = load_experiment(or_default(opt.data, ctx.out / "data"), ctx.config, ctx.seed);
  PromptTuner tuner(bb, data.tune, data.split.train, data.split.base_classes, ctx.config.tune, ctx.seed);

  const json prov = ctx.provenance("tune");
  const json header = {{"kind", "header"}, {"provenance", prov}};
  const fs::path ckpt = ctx.out / "tuned.ckpt";
  const fs::path record_path = ctx.out / "run_record.jsonl";
  std::string prefix = header.dump() + '\n';
  if (opt.resume) {
    require_input(ckpt, "tuning checkpoint", "tune");
    tuner.restore(load_checkpoint(ckpt));
    prefix = records_up_to(record_path, header, tuner.completed_steps());
  }
  write_text(record_path, prefix);
  std::ofstream records(record_path, std::ios::app);
  require(static_cast<bool>(records), ErrorKind::kIo, "cannot append to " + record_path.string());

  const std::size_t budget = opt.max_steps.value_or(tuner.total_steps());
  tuner.run(budget, [&](const StepRecord& r) {
    records << r.to_json().dump() << '\n';
    if (ctx.verbosity > 0) std::cerr << r.to_json().dump() << '\n';
  });
  records.flush();
  tuner.verify_backbone();
  save_checkpoint(ckpt, tuner.checkpoint(prov));

  const json summary = {{"provenance", prov},
                        {"checkpoint", ckpt.string()},
                        {"completed_steps", tuner.completed_steps()},
                        {"total_steps", tuner.total_steps()},
                        {"finished", tuner.finished()},
                        {"wall_clock_seconds", seconds_since(start)}};
  write_json(ctx.out / "run_summary.json", summary);
  std::cout << json{{"checkpoint", ckpt.string()},
                    {"completed_steps", tuner.completed_steps()},
                    {"total_steps", tuner.total_steps()}}
                   .dump()
            << '\n';
  return 0;
}

// --- evaluation -----------------------------------------------------------------

struct EvalOptions {
  std::string data, backbone, tuned;
};

int cmd_eval(const Context& ctx, const EvalOptions& opt) {
  const auto bb = load_backbone(or_default(opt.backbone, ctx.out / "backbone.ckpt"), ctx.config);
  const fs::path tuned_path = or_default(opt.tuned, ctx.out / "tuned.ckpt");
  require_input(tuned_path, "tuned checkpoint", "tune");
  const Checkpoint ck = load_checkpoint(tuned_path);
  const TunedModel model = tuned_model_from_checkpoint(ck, *bb);

  // The split is rebuilt from the tuning run's own settings and seed.
  const json& run = model.header.at("provenance");
  require(run.contains("config") && run.contains("seed"), ErrorKind::kCompatibility,
          "tuned checkpoint lacks the provenance needed to rebuild its split");
  const Config run_config = config_from_json(run.at("config"));
  const auto run_seed = run.at("seed").get<std::uint64_t>();
  const auto data = load_experiment(or_default(opt.data, ctx.out / "data"), run_config, run_seed);
  require(model.class_ids == data.split.base_classes, ErrorKind::kCompatibility,
          "tuned checkpoint classes do not match the rebuilt base split");

  const std::string& protocol = ctx.config.eval.protocol;
  std::vector<EvalReport> reports;
  if (protocol == "base_to_novel" || protocol == "all")
    reports.push_back(base_to_novel_eval(*bb, model.prompts, data.tune, data.split));
  if (protocol == "domain_gen" || protocol == "all")
    reports.push_back(domain_gen_eval(*bb, model.prompts, data.tune, data.domains, data.split.base_classes));
  for (auto& report : reports) {
    report.provenance = ctx.provenance("eval");
    report.provenance["tuned_run"] = run;
    report.provenance["tuned_checkpoint"] = tuned_path.string();
    const fs::path stem = ctx.out / ("eval_" + report.protocol);
    write_report(report, stem);
    std::cout << json{{"report", stem.string() + ".json"}, {"metrics", report.metrics}}.dump() << '\n';
  }
  return 0;
}

// --- ablation -------------------------------------------------------------------

int cmd_ablate(const Context& ctx) {
  const auto start = std::chrono::steady_clock::now();
  const auto& a = ctx.config.ablate;
  const auto cells = ablation_cells(a.axis, a.grid, ctx.config.encoder());
  const json prov = ctx.provenance("ablate");
  const fs::path rows_path = ctx.out / "ablation_rows.jsonl";
  std::ofstream rows_out(rows_path);
  require(static_cast<bool>(rows_out), ErrorKind::kIo, "cannot write " + rows_path.string());
  rows_out << json{{"kind", "header"}, {"provenance", prov}}.dump() << '\n';
  const auto rows = ablation_sweep(ctx.config, cells, a.seeds, [&](const json& row) {
    rows_out << row.dump() << '\n';
    rows_out.flush();
    if (ctx.verbosity > 0) std::cerr << row.dump() << '\n';
  });
  const auto summary = summarize_rows(rows, {"base", "novel", "harmonic", "target", "alignment_mse"});
  write_json(ctx.out / "ablation_summary.json",
             {{"provenance", prov}, {"cells", summary}, {"wall_clock_seconds", seconds_since(start)}});
  write_text(ctx.out / "ablation_summary.csv", to_csv(summary));
  for (const auto& s : summary) std::cout << s.dump() << '\n';
  return 0;
}

// --- bank inspection ------------------------------------------------------------

int cmd_inspect_bank(const Context& ctx, const std::string& tuned) {
  const fs::path path = or_default(tuned, ctx.out / "tuned.ckpt");
  require_input(path, "tuned checkpoint", "tune");
  const Checkpoint ck = load_checkpoint(path);
  require(ck.header.value("kind", "") == "prompt_tune", ErrorKind::kCompatibility,
          path.string() + " is not a prompt-tuning checkpoint");
  const StyleBank bank = StyleBank::from_raw(ck.tensor("bank.mu"), ck.tensor("bank.sigma_raw"));
  const Tensor mu = bank.mu().value();
  const Tensor sigma = bank.sigma().value();
  std::vector<json> rows;
  for (std::size_t b = 0; b < mu.rows(); ++b)
    for (std::size_t k = 0; k < mu.cols(); ++k)
      rows.push_back({{"basis", b}, {"dim", k}, {"mu", mu.at(b, k)}, {"sigma", sigma.at(b, k)}});
  write_text(ctx.out / "bank.csv", to_csv(rows));
  write_json(ctx.out / "bank.json", {{"provenance", ctx.provenance("inspect-bank")},
                                     {"source_checkpoint", path.string()},
                                     {"source_provenance", ck.header.value("provenance", json::object())},
                                     {"n_bases", mu.rows()},
                                     {"dim", mu.cols()}});
  std::cout << json{{"csv", (ctx.out / "bank.csv").string()}, {"n_bases", mu.rows()}, {"dim", mu.cols()}}.dump()
            << '\n';
  return 0;
}

// --- verification ---------------------------------------------------------------

int cmd_verify(const Context& ctx, bool full) {
  VerifyOptions options;
  options.include_experiment = full;
  options.on_result = [](const CheckResult& r) { std::cout << format_result(r) << std::endl; };
  if (ctx.verbosity > 0) options.on_experiment_row = [](const json& row) { std::cerr << row.dump() << '\n'; };
  const auto results = run_verification(options);
  json doc = {{"provenance", ctx.provenance("verify")}, {"full", full}, {"checks", json::array()}};
  std::size_t failed = 0;
  for (const auto& r : results) {
    doc["checks"].push_back(r.to_json());
    if (!r.passed) ++failed;
  }
  doc["passed"] = failed == 0;
  write_json(ctx.out / "verify.json", doc);
  if (failed > 0) {
    std::cerr << "error: " << to_string(ErrorKind::kInvariant) << ": " << failed << " check(s) failed:";
    for (const auto& r : results)
      if (!r.passed) std::cerr << ' ' << r.id;
    std::cerr << '\n';
    return 1;
  }
  return 0;
}

int exit_code_for(ErrorKind kind) {
  return kind == ErrorKind::kUsage || kind == ErrorKind::kPrerequisite ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Style-guided prompt tuning on a miniature dual encoder", "styleprompt"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Configuration file (JSON with format_version)");
  app.add_option("-O,--override", g.overrides, "Dotted override key.path=value, repeatable")
      ->allow_extra_args(false);
  app.add_option("--seed", g.seed, "Master seed (overrides the config)")->default_str(show(Config{}.seed));
  app.add_option("--out", g.out, std::string("Output directory (default from $") + kOutEnv + ")")
      ->default_str(g.out);
  app.add_flag("-v,--verbose", g.verbosity, "Progress records on stderr");

  HyperFlags hyper;
  std::string data_dir;

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic multi-domain datasets");
  gen->add_option("--data", data_dir, "Dataset directory")->default_str("<out>/data");

  auto* pre = app.add_subcommand("pretrain", "Contrastive pre-training of the backbone");
  pre->add_option("--data", data_dir, "Dataset directory")->default_str("<out>/data");

  TuneOptions tune_opt;
  auto* tune = app.add_subcommand("tune", "Prompt tuning against a frozen backbone");
  tune->add_option("--data", tune_opt.data, "Dataset directory")->default_str("<out>/data");
  tune->add_option("--backbone", tune_opt.backbone, "Backbone checkpoint")->default_str("<out>/backbone.ckpt");
  tune->add_option("--max-steps", tune_opt.max_steps, "Stop after this many steps (resumable)")
      ->default_str("all");
  tune->add_flag("--resume", tune_opt.resume, "Continue from <out>/tuned.ckpt");
  hyper.attach(tune);

  EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "Evaluate a tuned checkpoint (eval.protocol selects the protocol)");
  eval->add_option("--data", eval_opt.data, "Dataset directory")->default_str("<out>/data");
  eval->add_option("--backbone", eval_opt.backbone, "Backbone checkpoint")->default_str("<out>/backbone.ckpt");
  eval->add_option("--tuned", eval_opt.tuned, "Tuned checkpoint")->default_str("<out>/tuned.ckpt");

  auto* ablate = app.add_subcommand("ablate", "Multi-seed ablation over ablate.axis");
  hyper.attach(ablate);

  std::string bank_ckpt;
  auto* inspect = app.add_subcommand("inspect-bank", "Dump the learned style bases as CSV");
  inspect->add_option("--tuned", bank_ckpt, "Tuned checkpoint")->default_str("<out>/tuned.ckpt");

  bool full = false;
  auto* verify = app.add_subcommand("verify", "Run the oracle, gradient and invariant suite");
  verify->add_flag("--full", full, "Include the multi-seed experiment checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << to_string(ErrorKind::kUsage) << ": " << e.what() << '\n';
    return 2;
  }

  try {
    const Context ctx = make_context(g, hyper);
    if (gen->parsed()) return cmd_gen_data(ctx, data_dir);
    if (pre->parsed()) return cmd_pretrain(ctx, data_dir);
    if (tune->parsed()) return cmd_tune(ctx, tune_opt);
    if (eval->parsed()) return cmd_eval(ctx, eval_opt);
    if (ablate->parsed()) return cmd_ablate(ctx);
    if (inspect->parsed()) return cmd_inspect_bank(ctx, bank_ckpt);
    if (verify->parsed()) return cmd_verify(ctx, full);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
