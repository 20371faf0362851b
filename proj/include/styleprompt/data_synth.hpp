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

// Procedural multi-domain images. A class is a parametric shape mask; a
// domain is a style: per-channel colour statistics, a texture frequency
// band and additive noise. Domains never change the shape programs.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "styleprompt/tensor.hpp"

namespace styleprompt {

enum class ShapeProgram {
  kHorizontalBars,
  kVerticalBars,
  kDisk,
  kRing,
  kCross,
  kDiagonalCross,
  kChecker,
  kWedge,
  kTriangle,
  kSquareFrame,
  kDiamond,
  kDiagonalStripes,
  kDots,
  kCrescent,
  kCorner,
  kHalfDisk,
};

inline constexpr std::size_t kNumShapePrograms = 16;

std::string_view to_string(ShapeProgram program);
ShapeProgram shape_program_from_string(std::string_view name);

struct DomainSpec {
  std::size_t id = 0;
  std::array<double, 3> color_mean{0.0, 0.0, 0.0};
  std::array<double, 3> color_std{1.0, 1.0, 1.0};
  double texture_freq_lo = 1.0;  // cycles per image
  double texture_freq_hi = 2.0;
  double texture_amplitude = 0.3;
  double noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClassSpec {
  std::size_t id = 0;
  ShapeProgram program = ShapeProgram::kDisk;
  double scale_lo = 0.8;
  double scale_hi = 1.1;
  double position_jitter = 0.12;  // in half-widths of the image

  void validate() const;
};

/// Deterministic, well-separated domain styles.
std::vector<DomainSpec> default_domains(std::size_t count, std::uint64_t seed);
/// Class c uses shape program c.
std::vector<ClassSpec> default_classes(std::size_t count);

struct Sample {
  Tensor pixels;  // H×W×3
  std::size_t class_id = 0;
  std::size_t domain_id = 0;
  std::size_t index = 0;  // n within its (domain, class) cell
};

struct Dataset {
  std::vector<DomainSpec> domains;
  std::vector<ClassSpec> classes;
  std::size_t image_size = 24;
  std::size_t samples_per_cell = 0;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;  // domain-major, then class, then index

  std::vector<std::size_t> domain_ids() const;
  std::vector<std::size_t> class_ids() const;
  const Sample& at(std::size_t domain_id, std::size_t class_id, std::size_t n) const;
};

/// Soft shape mask in [0, 1] for normalised coordinates (u, v) ∈ [−1, 1]².
double shape_mask(ShapeProgram program, double u, double v);

Tensor render_sample(const DomainSpec& domain, const ClassSpec& cls, std::size_t image_size, std::uint64_t seed);

Dataset generate_dataset(const std::vector<DomainSpec>& domains, const std::vector<ClassSpec>& classes,
                         std::size_t samples_per_cell, std::uint64_t seed, std::size_t image_size = 24);

// --- splits -------------------------------------------------------------------

struct FewShotSplit {
  std::vector<std::size_t> base_classes;
  std::vector<std::size_t> novel_classes;
  std::vector<std::size_t> domains;  // domains the split draws from
  std::size_t shots = 16;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train;  // indices into Dataset::samples
  std::vector<std::size_t> base_test;
  std::vector<std::size_t> novel_test;
};

/// Base classes are a seeded choice of round(fraction·C) classes. Train
/// holds K shots per base class drawn across `domains` (all when empty);
/// the remaining base samples from those domains form base_test.
FewShotSplit make_base_to_novel_split(const Dataset& dataset, double fraction_base, std::size_t shots,
                                      std::uint64_t seed, const std::vector<std::size_t>& domains = {});

struct DomainSplit {
  std::vector<std::size_t> source_domains;
  std::vector<std::size_t> target_domains;
  std::vector<std::size_t> train;                     // all source-domain samples
  std::vector<std::vector<std::size_t>> target_test;  // one list per target domain
};

DomainSplit make_domain_split(const Dataset& dataset, const std::vector<std::size_t>& source_domains,
                              const std::vector<std::size_t>& target_domains);

// --- persistence --------------------------------------------------------------

inline constexpr int kDatasetFormatVersion = 1;

/// <root>/domain_<id>/class_<id>/sample_<n>.bin plus <root>/manifest.json.
/// `provenance` (config and seed of the producing run) is stored in the manifest.
void save_dataset(const Dataset& dataset, const std::filesystem::path& root,
                  const nlohmann::json& provenance = nlohmann::json::object());
/// Verifies every file against the manifest checksums.
Dataset load_dataset(const std::filesystem::path& root);

}  // namespace styleprompt
