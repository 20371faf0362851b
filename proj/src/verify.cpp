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


#include "styleprompt/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <random>
#include <sstream>

#include "styleprompt/checkpoint.hpp"
#include "styleprompt/errors.hpp"
#include "styleprompt/evalkit.hpp"
#include "styleprompt/gradcheck.hpp"
#include "styleprompt/losses.hpp"
#include "styleprompt/style_shift.hpp"
#include "styleprompt/trainer.hpp"

namespace styleprompt {

using nlohmann::json;

json CheckResult::to_json() const {
  return {{"id", id}, {"name", name}, {"passed", passed}, {"detail", detail}, {"seconds", seconds}};
}

std::string format_result(const CheckResult& r) {
  std::ostringstream os;
  os << (r.passed ? "[PASS] " : "[FAIL] ") << std::setw(2) << r.id << " " << r.name << " (" << std::fixed
     << std::setprecision(1) << r.seconds << " s)";
  if (!r.detail.empty()) os << ": " << r.detail;
  return os.str();
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

/// Runs body, which fills passed/detail; exceptions become failures.
CheckResult timed(int id, std::string name, const std::function<void(CheckResult&)>& body) {
  CheckResult r;
  r.id = id;
  r.name = std::move(name);
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const Error& e) {
    r.passed = false;
    r.detail = std::string(to_string(e.kind())) + ": " + e.what();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = e.what();
  }
  r.seconds = since(t0);
  return r;
}

Tensor uniform(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

std::size_t pick_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// --- brute-force oracles --------------------------------------------------------

struct PlainStats {
  std::vector<double> mu, sigma;
};

PlainStats moments_oracle(const Tensor& f, double eps) {
  const std::size_t n = f.rows(), d = f.cols();
  PlainStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0;
    for (std::size_t i = 0; i < n; ++i) m += f.at(i, j);
    m /= static_cast<double>(n);
    double v = 0;
    for (std::size_t i = 0; i < n; ++i) v += (f.at(i, j) - m) * (f.at(i, j) - m);
    s.mu[j] = m;
    s.sigma[j] = std::sqrt(v / static_cast<double>(n) + eps);
  }
  return s;
}

double w2_oracle(const std::vector<double>& ma, const std::vector<double>& sa, const std::vector<double>& mb,
                 const std::vector<double>& sb) {
  double d = 0;
  for (std::size_t k = 0; k < ma.size(); ++k) d += (ma[k] - mb[k]) * (ma[k] - mb[k]) + (sa[k] - sb[k]) * (sa[k] - sb[k]);
  return d;
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  return {t.data().begin() + static_cast<std::ptrdiff_t>(r * t.cols()),
          t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * t.cols())};
}

double max_diff(const std::vector<double>& a, std::span<const double> b) {
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) ab += a[k] * b[k], aa += a[k] * a[k], bb += b[k] * b[k];
  return ab / std::sqrt(aa * bb);
}

double ce_oracle(const Tensor& img, const Tensor& cls, const std::vector<std::size_t>& labels, double tau) {
  double total = 0;
  for (std::size_t i = 0; i < img.rows(); ++i) {
    std::vector<double> z;
    for (std::size_t c = 0; c < cls.rows(); ++c) z.push_back(cosine(row_of(img, i), row_of(cls, c)) / tau);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (double v : z) s += std::exp(v - m);
    total += -(z[labels[i]] - m - std::log(s));
  }
  return total / static_cast<double>(img.rows());
}

double diversity_oracle(const Tensor& mu, const Tensor& sigma) {
  double s = 0;
  for (std::size_t n = 0; n < mu.rows(); ++n)
    for (std::size_t k = 0; k < mu.rows(); ++k)
      if (n != k)
        s += std::abs(cosine(row_of(mu, n), row_of(mu, k))) + std::abs(cosine(row_of(sigma, n), row_of(sigma, k)));
  return s;
}

double content_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), d = a.cols();
  const auto sa = moments_oracle(a, 0.0), sb = moments_oracle(b, 0.0);
  double loss = 0;
  for (std::size_t j = 0; j < d; ++j) {
    double c = 0;
    for (std::size_t i = 0; i < n; ++i)
      c += (a.at(i, j) - sa.mu[j]) / sa.sigma[j] * (b.at(i, j) - sb.mu[j]) / sb.sigma[j];
    c /= static_cast<double>(n);
    loss += (c - 1) * (c - 1);
  }
  return std::sqrt(loss);
}

Tensor random_simplex_rows(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  Tensor t = uniform(rng, {rows, cols}, 0.01, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += t.at(r, c);
    for (std::size_t c = 0; c < cols; ++c) t.at(r, c) /= s;
  }
  return t;
}

StyleBank random_bank(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  return StyleBank::from_stats(uniform(rng, {n, d}, -2.0, 2.0), uniform(rng, {n, d}, 0.2, 2.5));
}

// --- shared tiny and small setups -------------------------------------------------

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.image_size = 8;
  c.patch_grid = 2;
  c.token_dim = 8;
  c.embed_dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.class_vocab = 4;
  c.prompt_depth = 2;
  c.vision_prompts = 2;
  c.text_prompts = 2;
  return c;
}

/// A desk-size pipeline shrunk to a few epochs.
struct SmallSetup {
  Config config;
  ExperimentData data;
  std::shared_ptr<const Backbone> backbone;
};

SmallSetup small_setup(std::uint64_t seed) {
  SmallSetup s;
  s.config.data.samples_per_cell = 20;
  s.config.data.shots = 4;
  s.config.pretrain.epochs = 2;
  s.config.tune.epochs = 2;
  s.data = make_experiment_data(s.config, seed);
  s.backbone = std::make_shared<const Backbone>(pretrain_backbone(s.config, s.data, seed));
  return s;
}

std::string record_lines(const std::vector<StepRecord>& records) {
  std::string out;
  for (const auto& r : records) out += r.to_json().dump() + "\n";
  return out;
}

}  // namespace

// --- 1: equation oracles ----------------------------------------------------------------

CheckResult check_equation_oracles() {
  return timed(1, "equation oracles", [](CheckResult& r) {
    constexpr int kCases = 100;
    constexpr double kTol = 1e-10;
    std::mt19937_64 rng(0xE0);
    std::map<std::string, double> worst;
    auto note = [&](const std::string& name, double err) { worst[name] = std::max(worst[name], err); };
    for (int c = 0; c < kCases; ++c) {
      const std::size_t P = pick_size(rng, 2, 16), D = pick_size(rng, 2, 12), N = pick_size(rng, 1, 6);
      const Tensor F = uniform(rng, {P, D}, -3.0, 3.0);

      const auto st = extract_style(constant(F));
      const auto so = moments_oracle(F, kStyleEpsilon);
      note("extract_style", std::max(max_diff(so.mu, st.mu.value().data()), max_diff(so.sigma, st.sigma.value().data())));

      const auto other = extract_style(constant(uniform(rng, {P, D}, -2.0, 2.0)));
      note("wasserstein_distance",
           std::abs(wasserstein_distance(st, other).item() -
                    w2_oracle(so.mu, so.sigma, row_of(other.mu.value(), 0), row_of(other.sigma.value(), 0))));

      const StyleBank bank = random_bank(rng, N, D);
      const Tensor bmu = bank.mu().value(), bsig = bank.sigma().value();
      const Tensor w = similarity_weights(st, bank).value();
      std::vector<double> expect(N);
      double z = 0;
      for (std::size_t n = 0; n < N; ++n) {
        expect[n] = std::exp(1.0 / (1.0 + w2_oracle(so.mu, so.sigma, row_of(bmu, n), row_of(bsig, n))));
        z += expect[n];
      }
      for (auto& v : expect) v /= z;
      note("similarity_weights", max_diff(expect, w.data()));

      const Tensor omega = random_simplex_rows(rng, 1, N);
      const auto mapped = map_style(constant(omega), bank);
      std::vector<double> mm(D, 0.0), ms(D, 0.0);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < D; ++k) mm[k] += omega[n] * bmu.at(n, k), ms[k] += omega[n] * bsig.at(n, k);
      note("map_style", std::max(max_diff(mm, mapped.mu.value().data()), max_diff(ms, mapped.sigma.value().data())));

      const StyleStats target{constant(uniform(rng, {1, D}, -2.0, 2.0)), constant(uniform(rng, {1, D}, 0.3, 2.0))};
      const Tensor out = apply_style(constant(F), target).value();
      std::vector<double> expect_out(P * D);
      for (std::size_t i = 0; i < P; ++i)
        for (std::size_t k = 0; k < D; ++k)
          expect_out[i * D + k] =
              target.sigma.value()[k] * (F.at(i, k) - so.mu[k]) / so.sigma[k] + target.mu.value()[k];
      note("apply_style", max_diff(expect_out, out.data()));

      const std::size_t B = pick_size(rng, 1, 6), C = pick_size(rng, 2, 7), d = pick_size(rng, 2, 10);
      const Tensor img = uniform(rng, {B, d}, -1.0, 1.0), cls = uniform(rng, {C, d}, -1.0, 1.0);
      std::vector<std::size_t> labels;
      for (std::size_t i = 0; i < B; ++i) labels.push_back(pick_size(rng, 0, C - 1));
      const double tau = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
      note("cross_entropy_loss",
           std::abs(cross_entropy_loss(constant(img), constant(cls), labels, tau).item() - ce_oracle(img, cls, labels, tau)));

      const Tensor dmu = uniform(rng, {N + 1, D}, -1.0, 1.0), dsig = uniform(rng, {N + 1, D}, 0.1, 2.0);
      note("diversity_loss",
           std::abs(diversity_loss(constant(dmu), constant(dsig)).item() - diversity_oracle(dmu, dsig)));

      const Tensor G = uniform(rng, {P, D}, -3.0, 3.0);
      note("content_loss", std::abs(content_loss(constant(F), constant(G)).item() - content_oracle(F, G)));

      const Tensor fi = uniform(rng, {B, d}, -1, 1), pi = uniform(rng, {B, d}, -1, 1), ft = uniform(rng, {B, d}, -1, 1),
                   pt = uniform(rng, {B, d}, -1, 1);
      const double lf = std::uniform_real_distribution<double>(0.0, 30.0)(rng), lg = 25.0;
      double feat = 0;
      for (std::size_t i = 0; i < B; ++i)
        for (std::size_t k = 0; k < d; ++k)
          feat += (lf * std::pow(fi.at(i, k) - pi.at(i, k), 2) + lg * std::pow(ft.at(i, k) - pt.at(i, k), 2)) /
                  static_cast<double>(d) / static_cast<double>(B);
      note("feature_alignment_loss",
           std::abs(feature_alignment_loss(constant(fi), constant(pi), constant(ft), constant(pt), lf, lg).item() - feat));

      const Tensor pre = random_simplex_rows(rng, B, C), prep = random_simplex_rows(rng, B, C);
      double kl = 0;
      for (std::size_t k = 0; k < pre.numel(); ++k) kl += pre[k] * std::log(pre[k] / prep[k]);
      kl /= static_cast<double>(B);
      const double got = cross_modal_loss(constant(pre), constant(prep)).item();
      note("cross_modal_loss", std::abs(got - kl) + (got < 0 ? 1.0 : 0.0));
    }
    double overall = 0;
    std::string names;
    for (const auto& [name, err] : worst) {
      overall = std::max(overall, err);
      if (err > kTol) names += " " + name + "=" + fmt(err);
    }
    r.passed = overall <= kTol && worst.size() == 10;
    r.detail = std::to_string(worst.size()) + " operations x " + std::to_string(kCases) +
               " cases, max abs error " + fmt(overall) + (names.empty() ? "" : ";" + names);
  });
}

// --- 2: gradients -------------------------------------------------------------------------

CheckResult check_gradients() {
  return timed(2, "gradient check", [](CheckResult& r) {
    constexpr int kSeeds = 10;
    // The style shift divides by patch standard deviations, so higher
    // derivatives are large; extrapolated differences stay accurate at a
    // step where roundoff is negligible.
    constexpr double kStep = 1e-4;
    const auto enc = tiny_encoder();
    struct Term {
      const char* name;
      LossWeights weights;
    };
    auto only = [](double cm, double f, double g, double l1, double l2) {
      LossWeights w = LossWeights::ce_only();
      w.lambda_cm = cm, w.lambda_f = f, w.lambda_g = g, w.lambda1 = l1, w.lambda2 = l2;
      return w;
    };
    const std::vector<Term> terms = {{"ce", LossWeights::ce_only()},
                                     {"cm", only(1, 0, 0, 0, 0)},
                                     {"feat", only(0, 15, 25, 0, 0)},
                                     {"diversity", only(0, 0, 0, 1, 0)},
                                     {"content", only(0, 0, 0, 0, 1)},
                                     {"total", LossWeights{}}};
    double worst = 0;
    std::string worst_where;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      std::mt19937_64 rng(seed + 100);
      Backbone bb = Backbone::initialize(enc, seed);
      PromptSet prompts = PromptSet::initialize(bb, seed + 1);
      // A generic bank: at initialisation every sigma basis is identical and
      // their cosine gradients vanish exactly, leaving only roundoff to compare.
      StyleBank bank = random_bank(rng, 3, enc.token_dim);
      LossBatch batch;
      for (int i = 0; i < 2; ++i) batch.images.push_back(uniform(rng, {8, 8, 3}, -1.0, 1.0));
      batch.labels = {1, 0};
      batch.class_ids = {0, 2, 3};
      PromptedOptions opt;
      opt.style = StyleMode::kShift;
      opt.style_layer = 1;
      const FrozenTargets frozen = compute_frozen_targets(bb, batch);
      auto params = prompts.parameters();
      for (const auto& p : bank.parameters()) params.push_back(p);
      for (const auto& t : terms) {
        // Single terms: objective(ce + term) − objective(ce); the ce parts cancel exactly.
        auto f = [&]() -> Var {
          Var full = total_loss(bb, prompts, bank, batch, t.weights, opt, &frozen).objective;
          if (std::string(t.name) == "ce" || std::string(t.name) == "total") return full;
          return sub(full, total_loss(bb, prompts, bank, batch, LossWeights::ce_only(), opt, &frozen).objective);
        };
        const auto rep = gradient_check(f, params, kStep, FiniteDifference::kRichardson);
        checked += rep.checked;
        if (rep.max_relative_error > worst) {
          worst = rep.max_relative_error;
          worst_where = std::string(t.name) + " seed " + std::to_string(seed);
        }
      }
    }
    r.passed = worst < 1e-4;
    r.detail = "6 objectives x " + std::to_string(kSeeds) + " seeds, " + std::to_string(checked) +
               " partials, max relative error " + fmt(worst) + (worst_where.empty() ? "" : " (" + worst_where + ")");
  });
}

// --- 3: AdaIN round trip ----------------------------------------------------------------

CheckResult check_adain_round_trip() {
  return timed(3, "AdaIN round trip", [](CheckResult& r) {
    std::mt19937_64 rng(0xAD);
    double recon = 0, recover = 0;
    for (int c = 0; c < 200; ++c) {
      const std::size_t P = pick_size(rng, 4, 16), D = pick_size(rng, 2, 32);
      const Tensor F = uniform(rng, {P, D}, -3.0, 3.0);
      const Var f = constant(F);
      recon = std::max(recon, max_abs_diff(apply_style(f, extract_style(f)).value(), F));
      const StyleStats t{constant(uniform(rng, {1, D}, -2.0, 2.0)), constant(uniform(rng, {1, D}, 0.3, 2.0))};
      const auto back = extract_style(apply_style(f, t));
      recover = std::max({recover, max_abs_diff(back.mu.value(), t.mu.value()),
                          max_abs_diff(back.sigma.value(), t.sigma.value())});
    }
    r.passed = recon <= 1e-3 && recover <= 1e-3;
    r.detail = "200 maps, reconstruction error " + fmt(recon) + ", style recovery error " + fmt(recover);
  });
}

// --- 4: similarity weights ----------------------------------------------------------------

CheckResult check_similarity_weights() {
  return timed(4, "similarity weights", [](CheckResult& r) {
    std::mt19937_64 rng(0x5A);
    double worst_sum = 0;
    int argmax_failures = 0;
    for (int c = 0; c < 1000; ++c) {
      const std::size_t D = pick_size(rng, 1, 16), N = pick_size(rng, 1, 24);
      const StyleBank bank = random_bank(rng, N, D);
      const auto cur = extract_style(constant(uniform(rng, {pick_size(rng, 2, 16), D}, -2.0, 2.0)));
      const Tensor w = similarity_weights(cur, bank).value();
      const Tensor d = basis_distances(cur, bank).value();
      double s = 0;
      for (double v : w.data()) s += v;
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      const auto nearest = std::min_element(d.data().begin(), d.data().end()) - d.data().begin();
      const double top = *std::max_element(w.data().begin(), w.data().end());
      if (w[static_cast<std::size_t>(nearest)] != top) ++argmax_failures;
    }
    r.passed = worst_sum <= 1e-12 && argmax_failures == 0;
    r.detail = "1000 cases, max |sum-1| " + fmt(worst_sum) + ", nearest-basis violations " +
               std::to_string(argmax_failures);
  });
}

// --- 5: harmonic mean against the reference table ----------------------------------------

CheckResult check_harmonic_table() {
  return timed(5, "harmonic mean table", [](CheckResult& r) {
    struct Row {
      double b, n, h;
    };
    const Row rows[] = {{77.58, 71.68, 74.51}, {98.38, 95.44, 96.89}, {95.64, 98.63, 97.11}, {78.53, 75.12, 76.79},
                        {98.04, 76.86, 86.17}, {90.93, 92.29, 91.60}, {42.79, 39.28, 40.96}, {82.66, 80.61, 81.62},
                        {83.41, 65.58, 73.43}, {94.52, 82.74, 88.24}, {86.83, 80.40, 83.49}};
    double worst = 0, mb = 0, mn = 0, mh = 0;
    for (const auto& row : rows) {
      const double h = harmonic_mean(row.b, row.n);
      worst = std::max(worst, std::abs(h - row.h));
      mb += row.b / 11, mn += row.n / 11, mh += h / 11;
    }
    const double avg_err = std::max({std::abs(mb - 84.48), std::abs(mn - 78.06), std::abs(mh - 80.98)});
    const bool subtle = std::abs(harmonic_mean(84.48, 78.06) - 81.14) <= 0.01;
    r.passed = worst <= 0.01 && avg_err <= 0.01 && subtle;
    r.detail = "11 rows max error " + fmt(worst) + ", average row error " + fmt(avg_err) +
               ", H(mean B, mean N) = " + fmt(harmonic_mean(84.48, 78.06), 4) + " vs mean H " + fmt(mh, 4);
  });
}

// --- 6: degenerate configuration equals the baseline ------------------------------------------

CheckResult check_ivlp_equivalence() {
  return timed(6, "baseline equivalence", [](CheckResult& r) {
    const auto s = small_setup(6);
    TuneConfig ivlp = s.config.tune;
    ivlp.method = TuneMethod::kIvlp;
    ivlp.style_mode = StyleMode::kOff;
    TuneConfig degenerate = s.config.tune;
    degenerate.style_mode = StyleMode::kOff;
    degenerate.weights.lambda_f = degenerate.weights.lambda_g = degenerate.weights.lambda1 = 0;
    degenerate.weights.lambda2 = degenerate.weights.lambda_cm = 0;
    PromptTuner a(s.backbone, s.data.tune, s.data.split.train, s.data.split.base_classes, ivlp, 6);
    PromptTuner b(s.backbone, s.data.tune, s.data.split.train, s.data.split.base_classes, degenerate, 6);
    std::size_t mismatched_steps = 0, steps = 0;
    while (!a.finished()) {
      const auto ra = a.step(), rb = b.step();
      ++steps;
      if (ra.ce != rb.ce || ra.total != rb.total) ++mismatched_steps;
    }
    std::size_t mismatched_tensors = 0;
    const auto pa = a.prompts().named_parameters(), pb = b.prompts().named_parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) mismatched_tensors += !pa[i].second.value().bit_equal(pb[i].second.value());
    const double acc_a = accuracy(*s.backbone, &a.prompts(), s.data.tune, s.data.split.base_test, s.data.split.base_classes);
    const double acc_b = accuracy(*s.backbone, &b.prompts(), s.data.tune, s.data.split.base_test, s.data.split.base_classes);
    r.passed = mismatched_steps == 0 && mismatched_tensors == 0 && acc_a == acc_b && b.finished();
    r.detail = std::to_string(steps) + " steps, " + std::to_string(mismatched_steps) + " loss mismatches, " +
               std::to_string(mismatched_tensors) + " prompt tensors differ";
  });
}

// --- 7 and 8: the directional experiment -----------------------------------------------------

std::vector<CheckResult> check_directional_experiment(const std::vector<std::uint64_t>& seeds,
                                                      const std::function<void(const json&)>& on_row) {
  const auto t0 = Clock::now();
  CheckResult acc{7, "directional experiment", false, "", 0.0};
  CheckResult align{8, "alignment behaviour", false, "", 0.0};
  try {
    Config config;
    const auto cells = ablation_cells("loss-terms", {"ivlp", "+cm"}, config.encoder());
    const auto rows = ablation_sweep(config, cells, seeds, on_row);
    const double seconds = since(t0);
    std::map<std::string, std::map<std::uint64_t, json>> by;
    for (const auto& row : rows) by[row["cell"].get<std::string>()][row["seed"].get<std::uint64_t>()] = row;
    auto mean = [&](const std::string& cell, const char* metric) {
      double s = 0;
      for (const auto& [seed, row] : by[cell]) s += row[metric].get<double>();
      return s / static_cast<double>(by[cell].size());
    };
    const double dt = mean("+cm", "target") - mean("ivlp", "target");
    const double dn = mean("+cm", "novel") - mean("ivlp", "novel");
    acc.passed = dt >= 2.0 && dn >= -1.0 && seconds < 600.0;
    acc.detail = std::to_string(seeds.size()) + " seeds, target " + fmt(mean("ivlp", "target"), 4) + " -> " +
                 fmt(mean("+cm", "target"), 4) + " (" + (dt >= 0 ? "+" : "") + fmt(dt, 3) + " pp), novel " +
                 fmt(mean("ivlp", "novel"), 4) + " -> " + fmt(mean("+cm", "novel"), 4) + " (" + (dn >= 0 ? "+" : "") +
                 fmt(dn, 3) + " pp), " + fmt(seconds, 4) + " s";
    int lower = 0;
    for (auto seed : seeds)
      lower += by["+cm"][seed]["alignment_mse"].get<double>() < by["ivlp"][seed]["alignment_mse"].get<double>();
    align.passed = lower == static_cast<int>(seeds.size());
    align.detail = "prompted-frozen MSE lower than CE-only in " + std::to_string(lower) + "/" +
                   std::to_string(seeds.size()) + " seeds (mean " + fmt(mean("+cm", "alignment_mse")) + " vs " +
                   fmt(mean("ivlp", "alignment_mse")) + ")";
  } catch (const std::exception& e) {
    acc.detail = align.detail = e.what();
  }
  acc.seconds = align.seconds = since(t0);
  return {acc, align};
}

// --- 9: frozen backbone integrity ---------------------------------------------------------------

CheckResult check_frozen_integrity() {
  return timed(9, "frozen backbone integrity", [](CheckResult& r) {
    const auto s = small_setup(9);
    const auto& bb = *s.backbone;
    const std::uint64_t before = bb.checksum();
    const std::vector<std::size_t> probe = {s.data.split.base_test.front(), s.data.split.novel_test.front(),
                                            s.data.domains.target_test.back().front()};
    auto frozen_snapshot = [&] {
      std::vector<Tensor> out;
      for (auto i : probe) {
        auto e = encode_image_frozen(bb, s.data.tune.samples[i].pixels);
        out.push_back(e.embedding.value());
        for (const auto& f : e.patch_features) out.push_back(f.value());
      }
      out.push_back(encode_classes_frozen(bb, s.data.tune.class_ids()).value());
      return out;
    };
    const auto reference = frozen_snapshot();

    PromptTuner tuner(s.backbone, s.data.tune, s.data.split.train, s.data.split.base_classes, s.config.tune, 9);
    tuner.run(SIZE_MAX);
    bool ok = bb.checksum() == before;
    auto same = [&](const std::vector<Tensor>& v) {
      for (std::size_t k = 0; k < v.size(); ++k)
        if (!v[k].bit_equal(reference[k])) return false;
      return true;
    };
    const bool after_tuning = same(frozen_snapshot());

    // Arbitrary prompt and bank values, pushed through a full loss evaluation.
    std::mt19937_64 rng(99);
    PromptSet wild = PromptSet::initialize(bb, 1234);
    for (auto& p : wild.parameters()) {
      Var leaf = p;
      leaf.assign(uniform(rng, p.shape(), -5.0, 5.0));
    }
    StyleBank wild_bank = random_bank(rng, 12, bb.config().token_dim);
    LossBatch batch;
    for (auto i : probe) batch.images.push_back(s.data.tune.samples[i].pixels);
    batch.labels = {0, 0, 0};
    batch.class_ids = s.data.split.base_classes;
    PromptedOptions opt;
    opt.style = StyleMode::kShift;
    backward(total_loss(bb, wild, wild_bank, batch, LossWeights{}, opt).objective);
    const bool after_wild = same(frozen_snapshot());

    // Masked prompts with style off reproduce the frozen path exactly.
    PromptedOptions masked;
    masked.mask_prompts = true;
    bool masked_equal = true;
    for (auto i : probe)
      masked_equal &= encode_image_prompted(bb, wild, s.data.tune.samples[i].pixels, masked)
                          .embedding.value()
                          .bit_equal(encode_image_frozen(bb, s.data.tune.samples[i].pixels).embedding.value());
    masked_equal &= encode_classes_prompted(bb, wild, s.data.tune.class_ids(), true)
                        .value()
                        .bit_equal(encode_classes_frozen(bb, s.data.tune.class_ids()).value());
    ok = ok && bb.checksum() == before && after_tuning && after_wild && masked_equal;
    r.passed = ok;
    r.detail = std::string("checksum ") + (bb.checksum() == before ? "unchanged" : "CHANGED") +
               ", frozen outputs after tuning " + (after_tuning ? "identical" : "differ") +
               ", under arbitrary prompts/bank " + (after_wild ? "identical" : "differ") + ", masked prompted view " +
               (masked_equal ? "equals" : "differs from") + " frozen";
  });
}

// --- 10: determinism --------------------------------------------------------------------------

CheckResult check_determinism() {
  return timed(10, "determinism and resume", [](CheckResult& r) {
    const auto s = small_setup(10);
    const auto again = small_setup(10);
    const bool pretrain_same = serialize_checkpoint(backbone_checkpoint(*s.backbone, {})) ==
                               serialize_checkpoint(backbone_checkpoint(*again.backbone, {}));
    bool data_same = s.data.tune.samples.size() == again.data.tune.samples.size();
    for (std::size_t i = 0; data_same && i < s.data.tune.samples.size(); ++i)
      data_same = s.data.tune.samples[i].pixels.bit_equal(again.data.tune.samples[i].pixels);

    auto tuner = [&](const SmallSetup& x) {
      return std::make_unique<PromptTuner>(x.backbone, x.data.tune, x.data.split.train, x.data.split.base_classes,
                                           x.config.tune, 10);
    };
    auto run = [](PromptTuner& t, std::size_t max_steps) {
      std::vector<StepRecord> recs;
      t.run(max_steps, [&](const StepRecord& rec) { recs.push_back(rec); });
      return recs;
    };
    auto a = tuner(s);
    auto b = tuner(again);
    const auto ra = run(*a, SIZE_MAX), rb = run(*b, SIZE_MAX);
    const bool records_same = record_lines(ra) == record_lines(rb);
    const auto final_bytes = serialize_checkpoint(a->checkpoint());
    const bool ckpt_same = final_bytes == serialize_checkpoint(b->checkpoint());

    // Interrupt mid-epoch, go through a checkpoint file, resume in a fresh tuner.
    const std::size_t k = a->steps_per_epoch() + a->steps_per_epoch() / 2 + 1;
    auto first = tuner(s);
    auto head = run(*first, k);
    const auto path = std::filesystem::temp_directory_path() /
                      ("styleprompt_resume_" + std::to_string(reinterpret_cast<std::uintptr_t>(first.get())) + ".ckpt");
    save_checkpoint(path, first->checkpoint());
    auto resumed = tuner(s);
    resumed->restore(load_checkpoint(path));
    std::filesystem::remove(path);
    auto tail = run(*resumed, SIZE_MAX);
    head.insert(head.end(), tail.begin(), tail.end());
    const bool resume_same = record_lines(head) == record_lines(ra);
    const bool resume_ckpt = serialize_checkpoint(resumed->checkpoint()) == final_bytes;

    r.passed = pretrain_same && data_same && records_same && ckpt_same && resume_same && resume_ckpt;
    auto yn = [](bool b) { return b ? "identical" : "DIFFERENT"; };
    r.detail = std::string("data ") + yn(data_same) + ", backbone " + yn(pretrain_same) + ", run record " +
               yn(records_same) + ", checkpoint " + yn(ckpt_same) + ", resumed at step " + std::to_string(k) + "/" +
               std::to_string(ra.size()) + ": record " + yn(resume_same) + ", checkpoint " + yn(resume_ckpt);
  });
}

std::vector<CheckResult> run_verification(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  auto emit = [&](CheckResult r) {
    if (options.on_result) options.on_result(r);
    out.push_back(std::move(r));
  };
  emit(check_equation_oracles());
  emit(check_gradients());
  emit(check_adain_round_trip());
  emit(check_similarity_weights());
  emit(check_harmonic_table());
  emit(check_ivlp_equivalence());
  if (options.include_experiment)
    for (auto& r : check_directional_experiment(options.experiment_seeds, options.on_experiment_row)) emit(r);
  emit(check_frozen_integrity());
  emit(check_determinism());
  return out;
}

}  // namespace styleprompt
