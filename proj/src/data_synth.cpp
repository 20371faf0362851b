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

#include "styleprompt/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "styleprompt/errors.hpp"
#include "styleprompt/rng.hpp"
#include "styleprompt/tensor_io.hpp"

namespace styleprompt {

namespace {

constexpr std::array<std::string_view, kNumShapePrograms> kProgramNames = {
    "horizontal_bars", "vertical_bars", "disk",   "ring",     "cross",  "diagonal_cross", "checker", "wedge",
    "triangle",        "square_frame",  "diamond", "diagonal_stripes", "dots", "crescent", "corner",  "half_disk",
};

constexpr double kPi = std::numbers::pi;

double box(double u, double v, double cx, double cy, double hx, double hy) {
  return std::max(std::abs(u - cx) - hx, std::abs(v - cy) - hy);
}

double cross_sd(double u, double v) {
  return std::min(std::max(std::abs(u) - 0.2, std::abs(v) - 0.75), std::max(std::abs(v) - 0.2, std::abs(u) - 0.75));
}

// Signed distance (negative inside) for each program.
double signed_distance(ShapeProgram p, double u, double v) {
  const double r = std::hypot(u, v);
  switch (p) {
    case ShapeProgram::kHorizontalBars:
      return std::max(-std::cos(3 * kPi * v) / (3 * kPi), std::abs(u) - 0.8);
    case ShapeProgram::kVerticalBars:
      return std::max(-std::cos(3 * kPi * u) / (3 * kPi), std::abs(v) - 0.8);
    case ShapeProgram::kDisk:
      return r - 0.6;
    case ShapeProgram::kRing:
      return std::abs(r - 0.55) - 0.15;
    case ShapeProgram::kCross:
      return cross_sd(u, v);
    case ShapeProgram::kDiagonalCross: {
      const double s = std::numbers::sqrt2 / 2;
      return cross_sd(s * (u - v), s * (u + v));
    }
    case ShapeProgram::kChecker:
      return std::max(-std::cos(2 * kPi * u) * std::cos(2 * kPi * v) / (2 * kPi), std::max(std::abs(u), std::abs(v)) - 0.8);
    case ShapeProgram::kWedge: {
      const double theta = std::atan2(u, -v);
      return std::max(r - 0.8, (std::abs(theta) - kPi / 4) * r);
    }
    case ShapeProgram::kTriangle:
      return std::max(v - 0.6, (std::abs(u) * 1.3 - (v + 0.7) * 0.7) / std::hypot(1.3, 0.7));
    case ShapeProgram::kSquareFrame:
      return std::abs(std::max(std::abs(u), std::abs(v)) - 0.55) - 0.13;
    case ShapeProgram::kDiamond:
      return (std::abs(u) + std::abs(v) - 0.95) / std::numbers::sqrt2;
    case ShapeProgram::kDiagonalStripes:
      return std::max(-std::cos(2.5 * kPi * (u + v) / std::numbers::sqrt2) / (2.5 * kPi),
                      std::max(std::abs(u), std::abs(v)) - 0.8);
    case ShapeProgram::kDots: {
      auto nearest = [](double x) { return std::clamp(std::round(x / 0.55), -1.0, 1.0) * 0.55; };
      return std::hypot(u - nearest(u), v - nearest(v)) - 0.18;
    }
    case ShapeProgram::kCrescent:
      return std::max(r - 0.65, 0.5 - std::hypot(u - 0.3, v + 0.25));
    case ShapeProgram::kCorner:
      return std::min(box(u, v, -0.45, 0.0, 0.17, 0.7), box(u, v, 0.0, 0.5, 0.62, 0.2));
    case ShapeProgram::kHalfDisk:
      return std::max(r - 0.7, -v);
  }
  fail(ErrorKind::kContract, "unknown shape program");
}

std::string cell_path(std::size_t domain, std::size_t cls, std::size_t n) {
  return "domain_" + std::to_string(domain) + "/class_" + std::to_string(cls) + "/sample_" + std::to_string(n) + ".bin";
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(ShapeProgram program) { return kProgramNames.at(static_cast<std::size_t>(program)); }

ShapeProgram shape_program_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kProgramNames.size(); ++i)
    if (kProgramNames[i] == name) return static_cast<ShapeProgram>(i);
  fail(ErrorKind::kConfiguration, "unknown shape program '" + std::string(name) + "'");
}

void DomainSpec::validate() const {
  for (double s : color_std) require(s > 0.0, ErrorKind::kContract, "domain " + std::to_string(id) + ": color std must be positive");
  require(texture_freq_lo > 0.0 && texture_freq_hi >= texture_freq_lo, ErrorKind::kContract,
          "domain " + std::to_string(id) + ": invalid texture band");
  require(noise >= 0.0 && texture_amplitude >= 0.0, ErrorKind::kContract,
          "domain " + std::to_string(id) + ": noise and texture amplitude must be non-negative");
}

void ClassSpec::validate() const {
  require(scale_lo > 0.0 && scale_hi >= scale_lo, ErrorKind::kContract,
          "class " + std::to_string(id) + ": invalid scale range");
  require(position_jitter >= 0.0, ErrorKind::kContract, "class " + std::to_string(id) + ": negative jitter");
}

std::vector<DomainSpec> default_domains(std::size_t count, std::uint64_t seed) {
  static const DomainSpec kTable[] = {
      {0, {0.6, 0.1, -0.4}, {0.9, 0.5, 0.7}, 1.0, 2.0, 0.4, 0.5, 0},
      {1, {-0.3, 0.5, 0.2}, {0.6, 1.0, 0.5}, 2.0, 3.0, 0.6, 0.6, 0},
      {2, {0.1, -0.6, 0.7}, {1.2, 0.7, 1.1}, 3.0, 4.0, 0.8, 0.7, 0},
      {3, {-0.7, -0.2, -0.5}, {0.5, 0.8, 1.3}, 4.0, 5.0, 1.0, 0.8, 0},
  };
  std::vector<DomainSpec> out;
  std::mt19937_64 rng(derive_seed(seed, {0xD0}));
  std::uniform_real_distribution<double> mean(-0.8, 0.8), sd(0.4, 1.4), freq(1.0, 5.0), amp(0.1, 0.5), noise(0.02, 0.25);
  for (std::size_t d = 0; d < count; ++d) {
    DomainSpec spec;
    if (d < std::size(kTable)) {
      spec = kTable[d];
    } else {
      for (auto& m : spec.color_mean) m = mean(rng);
      for (auto& s : spec.color_std) s = sd(rng);
      spec.texture_freq_lo = freq(rng);
      spec.texture_freq_hi = spec.texture_freq_lo + 1.0;
      spec.texture_amplitude = amp(rng);
      spec.noise = noise(rng);
    }
    spec.id = d;
    spec.seed = derive_seed(seed, {0xD1, d});
    out.push_back(spec);
  }
  return out;
}

std::vector<ClassSpec> default_classes(std::size_t count) {
  require(count <= kNumShapePrograms, ErrorKind::kConfiguration,
          "at most " + std::to_string(kNumShapePrograms) + " classes are available");
  std::vector<ClassSpec> out;
  for (std::size_t c = 0; c < count; ++c) {
    ClassSpec spec;
    spec.id = c;
    spec.program = static_cast<ShapeProgram>(c);
    out.push_back(spec);
  }
  return out;
}

double shape_mask(ShapeProgram program, double u, double v) {
  constexpr double kEdge = 0.12;
  return std::clamp(0.5 - signed_distance(program, u, v) / kEdge, 0.0, 1.0);
}

Tensor render_sample(const DomainSpec& domain, const ClassSpec& cls, std::size_t image_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double s = uniform(cls.scale_lo, cls.scale_hi);
  const double cx = uniform(-cls.position_jitter, cls.position_jitter);
  const double cy = uniform(-cls.position_jitter, cls.position_jitter);
  const double freq = uniform(domain.texture_freq_lo, domain.texture_freq_hi);
  const double theta = uniform(0.0, kPi);
  const double phase = uniform(0.0, 2 * kPi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const std::size_t W = image_size;
  Tensor img({W, W, 3});
  for (std::size_t y = 0; y < W; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double xn = (x + 0.5) / W, yn = (y + 0.5) / W;
      const double m = shape_mask(cls.program, (2 * xn - 1 - cx) / s, (2 * yn - 1 - cy) / s);
      const double wave = freq * (xn * std::cos(theta) + yn * std::sin(theta));
      for (std::size_t c = 0; c < 3; ++c) {
        const double texture = domain.texture_amplitude * std::sin(2 * kPi * wave + phase + c * 2 * kPi / 3);
        img[(y * W + x) * 3 + c] = (2 * m - 1) + texture + domain.noise * gauss(rng);
      }
    }
  // Per-channel standardisation, then the domain's colour statistics.
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < W * W; ++i) mean += img[i * 3 + c];
    mean /= static_cast<double>(W * W);
    for (std::size_t i = 0; i < W * W; ++i) var += (img[i * 3 + c] - mean) * (img[i * 3 + c] - mean);
    const double sd = std::sqrt(var / static_cast<double>(W * W));
    require(sd > 0.0, ErrorKind::kNumericDomain, "rendered channel has zero variance");
    for (std::size_t i = 0; i < W * W; ++i)
      img[i * 3 + c] = domain.color_mean[c] + domain.color_std[c] * (img[i * 3 + c] - mean) / sd;
  }
  return img;
}

std::vector<std::size_t> Dataset::domain_ids() const {
  std::vector<std::size_t> out;
  for (const auto& d : domains) out.push_back(d.id);
  return out;
}

std::vector<std::size_t> Dataset::class_ids() const {
  std::vector<std::size_t> out;
  for (const auto& c : classes) out.push_back(c.id);
  return out;
}

const Sample& Dataset::at(std::size_t domain_id, std::size_t class_id, std::size_t n) const {
  for (std::size_t d = 0; d < domains.size(); ++d)
    for (std::size_t c = 0; c < classes.size(); ++c)
      if (domains[d].id == domain_id && classes[c].id == class_id && n < samples_per_cell)
        return samples.at((d * classes.size() + c) * samples_per_cell + n);
  fail(ErrorKind::kContract, "no sample " + cell_path(domain_id, class_id, n));
}

Dataset generate_dataset(const std::vector<DomainSpec>& domains, const std::vector<ClassSpec>& classes,
                         std::size_t samples_per_cell, std::uint64_t seed, std::size_t image_size) {
  require(domains.size() >= 2, ErrorKind::kContract, "need at least 2 domains");
  require(classes.size() >= 4, ErrorKind::kContract, "need at least 4 classes");
  require(samples_per_cell > 0, ErrorKind::kContract, "samples per class per domain must be positive");
  require(image_size >= 4, ErrorKind::kContract, "image size too small");
  std::set<std::size_t> domain_ids, class_ids, programs;
  for (const auto& d : domains) {
    d.validate();
    require(domain_ids.insert(d.id).second, ErrorKind::kContract, "duplicate domain id " + std::to_string(d.id));
  }
  for (const auto& c : classes) {
    c.validate();
    require(class_ids.insert(c.id).second, ErrorKind::kContract, "duplicate class id " + std::to_string(c.id));
    require(programs.insert(static_cast<std::size_t>(c.program)).second, ErrorKind::kContract,
            "shape programs must be pairwise distinct");
  }
  Dataset ds{domains, classes, image_size, samples_per_cell, seed, {}};
  ds.samples.reserve(domains.size() * classes.size() * samples_per_cell);
  for (const auto& d : domains)
    for (const auto& c : classes)
      for (std::size_t n = 0; n < samples_per_cell; ++n)
        ds.samples.push_back(
            {render_sample(d, c, image_size, derive_seed(seed, {d.seed, d.id, c.id, n})), c.id, d.id, n});
  return ds;
}

// --- splits -------------------------------------------------------------------

FewShotSplit make_base_to_novel_split(const Dataset& dataset, double fraction_base, std::size_t shots,
                                      std::uint64_t seed, const std::vector<std::size_t>& domains) {
  require(fraction_base > 0.0 && fraction_base < 1.0, ErrorKind::kContract, "fraction_base must lie in (0, 1)");
  require(shots > 0, ErrorKind::kContract, "shots must be positive");
  auto classes = dataset.class_ids();
  const auto n_base = static_cast<std::size_t>(std::lround(fraction_base * static_cast<double>(classes.size())));
  require(n_base >= 1 && n_base < classes.size(), ErrorKind::kContract, "split leaves no base or no novel classes");

  FewShotSplit split;
  split.shots = shots;
  split.seed = seed;
  split.domains = domains.empty() ? dataset.domain_ids() : domains;
  const auto known = dataset.domain_ids();
  for (auto d : split.domains)
    require(std::find(known.begin(), known.end(), d) != known.end(), ErrorKind::kContract,
            "unknown domain " + std::to_string(d));

  std::mt19937_64 rng(derive_seed(seed, {0xB2}));
  std::shuffle(classes.begin(), classes.end(), rng);
  split.base_classes.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n_base));
  split.novel_classes.assign(classes.begin() + static_cast<std::ptrdiff_t>(n_base), classes.end());
  std::sort(split.base_classes.begin(), split.base_classes.end());
  std::sort(split.novel_classes.begin(), split.novel_classes.end());

  auto in_domains = [&](const Sample& s) {
    return std::find(split.domains.begin(), split.domains.end(), s.domain_id) != split.domains.end();
  };
  for (auto c : split.base_classes) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
      if (dataset.samples[i].class_id == c && in_domains(dataset.samples[i])) pool.push_back(i);
    require(pool.size() >= shots, ErrorKind::kContract,
            "class " + std::to_string(c) + " has " + std::to_string(pool.size()) + " samples, fewer than " +
                std::to_string(shots) + " shots");
    std::mt19937_64 pick(derive_seed(seed, {0xB3, c}));
    std::shuffle(pool.begin(), pool.end(), pick);
    split.train.insert(split.train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shots));
    split.base_test.insert(split.base_test.end(), pool.begin() + static_cast<std::ptrdiff_t>(shots), pool.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.base_test.begin(), split.base_test.end());
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    if (in_domains(s) && std::binary_search(split.novel_classes.begin(), split.novel_classes.end(), s.class_id))
      split.novel_test.push_back(i);
  }
  return split;
}

DomainSplit make_domain_split(const Dataset& dataset, const std::vector<std::size_t>& source_domains,
                              const std::vector<std::size_t>& target_domains) {
  require(!source_domains.empty() && !target_domains.empty(), ErrorKind::kContract,
          "source and target domain lists must be nonempty");
  const auto known = dataset.domain_ids();
  for (auto d : source_domains) {
    require(std::find(known.begin(), known.end(), d) != known.end(), ErrorKind::kContract,
            "unknown domain " + std::to_string(d));
    require(std::find(target_domains.begin(), target_domains.end(), d) == target_domains.end(), ErrorKind::kContract,
            "domain " + std::to_string(d) + " is both source and target");
  }
  for (auto d : target_domains)
    require(std::find(known.begin(), known.end(), d) != known.end(), ErrorKind::kContract,
            "unknown domain " + std::to_string(d));
  DomainSplit split{source_domains, target_domains, {}, std::vector<std::vector<std::size_t>>(target_domains.size())};
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto d = dataset.samples[i].domain_id;
    if (std::find(source_domains.begin(), source_domains.end(), d) != source_domains.end()) split.train.push_back(i);
    for (std::size_t t = 0; t < target_domains.size(); ++t)
      if (target_domains[t] == d) split.target_test[t].push_back(i);
  }
  return split;
}

// --- persistence --------------------------------------------------------------

void save_dataset(const Dataset& dataset, const std::filesystem::path& root, const nlohmann::json& provenance) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  std::error_code ec;
  fs::create_directories(root, ec);
  require(!ec, ErrorKind::kIo, "cannot create " + root.string() + ": " + ec.message());
  json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["seed"] = dataset.seed;
  manifest["image_size"] = dataset.image_size;
  manifest["samples_per_cell"] = dataset.samples_per_cell;
  manifest["provenance"] = provenance;
  for (const auto& d : dataset.domains)
    manifest["domains"].push_back({{"id", d.id},
                                   {"color_mean", d.color_mean},
                                   {"color_std", d.color_std},
                                   {"texture_freq_lo", d.texture_freq_lo},
                                   {"texture_freq_hi", d.texture_freq_hi},
                                   {"texture_amplitude", d.texture_amplitude},
                                   {"noise", d.noise},
                                   {"seed", d.seed}});
  for (const auto& c : dataset.classes)
    manifest["classes"].push_back({{"id", c.id},
                                   {"program", std::string(to_string(c.program))},
                                   {"scale_lo", c.scale_lo},
                                   {"scale_hi", c.scale_hi},
                                   {"position_jitter", c.position_jitter}});
  manifest["samples"] = json::array();
  for (const auto& s : dataset.samples) {
    const auto rel = cell_path(s.domain_id, s.class_id, s.index);
    fs::create_directories((root / rel).parent_path(), ec);
    require(!ec, ErrorKind::kIo, "cannot create directory for " + rel);
    save_tensor(root / rel, s.pixels);
    manifest["samples"].push_back({{"path", rel}, {"checksum", hex64(fnv1a(s.pixels.data()))}});
  }
  std::ofstream out(root / "manifest.json");
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + (root / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& root) {
  using nlohmann::json;
  const auto manifest_path = root / "manifest.json";
  std::ifstream in(manifest_path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kIntegrity, manifest_path.string() + ": " + e.what());
  }
  try {
    const int version = m.at("format_version").get<int>();
    require(version == kDatasetFormatVersion, ErrorKind::kCompatibility,
            manifest_path.string() + ": dataset format version " + std::to_string(version) + " unsupported (expected " +
                std::to_string(kDatasetFormatVersion) + ")");
    Dataset ds;
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.image_size = m.at("image_size").get<std::size_t>();
    ds.samples_per_cell = m.at("samples_per_cell").get<std::size_t>();
    for (const auto& d : m.at("domains")) {
      DomainSpec spec;
      spec.id = d.at("id").get<std::size_t>();
      spec.color_mean = d.at("color_mean").get<std::array<double, 3>>();
      spec.color_std = d.at("color_std").get<std::array<double, 3>>();
      spec.texture_freq_lo = d.at("texture_freq_lo").get<double>();
      spec.texture_freq_hi = d.at("texture_freq_hi").get<double>();
      spec.texture_amplitude = d.at("texture_amplitude").get<double>();
      spec.noise = d.at("noise").get<double>();
      spec.seed = d.at("seed").get<std::uint64_t>();
      ds.domains.push_back(spec);
    }
    for (const auto& c : m.at("classes")) {
      ClassSpec spec;
      spec.id = c.at("id").get<std::size_t>();
      spec.program = shape_program_from_string(c.at("program").get<std::string>());
      spec.scale_lo = c.at("scale_lo").get<double>();
      spec.scale_hi = c.at("scale_hi").get<double>();
      spec.position_jitter = c.at("position_jitter").get<double>();
      ds.classes.push_back(spec);
    }
    const auto& files = m.at("samples");
    require(files.size() == ds.domains.size() * ds.classes.size() * ds.samples_per_cell, ErrorKind::kIntegrity,
            manifest_path.string() + ": sample count does not match the declared grid");
    std::size_t k = 0;
    for (const auto& d : ds.domains)
      for (const auto& c : ds.classes)
        for (std::size_t n = 0; n < ds.samples_per_cell; ++n, ++k) {
          const auto rel = cell_path(d.id, c.id, n);
          const auto& entry = files[k];
          require(entry.at("path").get<std::string>() == rel, ErrorKind::kIntegrity,
                  (root / rel).string() + ": manifest order mismatch");
          Tensor pixels;
          try {
            pixels = load_tensor(root / rel);
          } catch (const Error& e) {
            fail(e.kind() == ErrorKind::kIo ? ErrorKind::kIntegrity : e.kind(), (root / rel).string() + ": " + e.what());
          }
          require(pixels.shape() == Shape{ds.image_size, ds.image_size, 3}, ErrorKind::kIntegrity,
                  (root / rel).string() + ": unexpected shape " + shape_string(pixels.shape()));
          require(hex64(fnv1a(pixels.data())) == entry.at("checksum").get<std::string>(), ErrorKind::kIntegrity,
                  (root / rel).string() + ": checksum mismatch");
          ds.samples.push_back({std::move(pixels), c.id, d.id, n});
        }
    return ds;
  } catch (const json::exception& e) {
    fail(ErrorKind::kIntegrity, manifest_path.string() + ": " + e.what());
  }
}

}  // namespace styleprompt
