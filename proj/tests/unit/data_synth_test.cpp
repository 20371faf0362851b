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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "styleprompt/errors.hpp"

namespace styleprompt {
namespace {

namespace fs = std::filesystem;

Dataset small_dataset(std::uint64_t seed = 5, std::size_t per_cell = 20) {
  return generate_dataset(default_domains(4, seed), default_classes(8), per_cell, seed, 12);
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("styleprompt_data_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kUsage;
}

TEST(ShapePrograms, NamesRoundTripAndMasksDiffer) {
  std::set<std::string> seen;
  std::vector<std::vector<double>> masks;
  for (std::size_t p = 0; p < kNumShapePrograms; ++p) {
    const auto prog = static_cast<ShapeProgram>(p);
    EXPECT_EQ(shape_program_from_string(to_string(prog)), prog);
    EXPECT_TRUE(seen.insert(std::string(to_string(prog))).second);
    std::vector<double> m;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) m.push_back(shape_mask(prog, (x + 0.5) / 8 - 1, (y + 0.5) / 8 - 1));
    masks.push_back(m);
  }
  for (std::size_t a = 0; a < masks.size(); ++a)
    for (std::size_t b = a + 1; b < masks.size(); ++b) {
      double diff = 0;
      for (std::size_t i = 0; i < masks[a].size(); ++i) diff += std::abs(masks[a][i] - masks[b][i]);
      EXPECT_GT(diff / masks[a].size(), 0.05) << to_string(static_cast<ShapeProgram>(a)) << " vs "
                                              << to_string(static_cast<ShapeProgram>(b));
    }
  EXPECT_EQ(kind_of([] { shape_program_from_string("blob"); }), ErrorKind::kConfiguration);
}

TEST(GenerateDataset, DeterministicAndCounted) {
  auto a = small_dataset(), b = small_dataset();
  ASSERT_EQ(a.samples.size(), 4u * 8u * 20u);
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_TRUE(a.samples[i].pixels.bit_equal(b.samples[i].pixels));
  std::vector<std::size_t> per_class(8);
  for (const auto& s : a.samples) ++per_class[s.class_id];
  for (auto n : per_class) EXPECT_EQ(n, 80u);
  auto c = small_dataset(6);
  EXPECT_FALSE(a.samples[0].pixels.bit_equal(c.samples[0].pixels));
}

TEST(GenerateDataset, ChannelStatisticsMatchDomainSpec) {
  auto ds = generate_dataset(default_domains(2, 1), default_classes(4), 250, 1, 12);
  for (const auto& d : ds.domains) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double s = 0, ss = 0, n = 0;
      for (const auto& smp : ds.samples) {
        if (smp.domain_id != d.id) continue;
        for (std::size_t i = ch; i < smp.pixels.numel(); i += 3) {
          s += smp.pixels[i];
          ss += smp.pixels[i] * smp.pixels[i];
          ++n;
        }
      }
      const double mean = s / n, sd = std::sqrt(ss / n - mean * mean);
      EXPECT_NEAR(mean, d.color_mean[ch], 0.1 * std::max(std::abs(d.color_mean[ch]), 0.1));
      EXPECT_NEAR(sd, d.color_std[ch], 0.1 * d.color_std[ch]);
    }
  }
}

TEST(GenerateDataset, RejectsDegenerateSpecs) {
  EXPECT_EQ(kind_of([] { generate_dataset(default_domains(2, 0), default_classes(4), 0, 0); }), ErrorKind::kContract);
  EXPECT_EQ(kind_of([] { generate_dataset(default_domains(1, 0), default_classes(4), 2, 0); }), ErrorKind::kContract);
  EXPECT_EQ(kind_of([] { generate_dataset(default_domains(2, 0), default_classes(3), 2, 0); }), ErrorKind::kContract);
  auto classes = default_classes(4);
  classes[1].program = classes[0].program;
  EXPECT_EQ(kind_of([&] { generate_dataset(default_domains(2, 0), classes, 2, 0); }), ErrorKind::kContract);
  auto domains = default_domains(2, 0);
  domains[0].color_std[1] = 0.0;
  EXPECT_EQ(kind_of([&] { generate_dataset(domains, default_classes(4), 2, 0); }), ErrorKind::kContract);
}

TEST(BaseToNovelSplit, Bookkeeping) {
  auto ds = small_dataset();
  auto split = make_base_to_novel_split(ds, 0.5, 16, 3);
  EXPECT_EQ(split.base_classes.size(), 4u);
  EXPECT_EQ(split.novel_classes.size(), 4u);
  std::vector<std::size_t> inter;
  std::set_intersection(split.base_classes.begin(), split.base_classes.end(), split.novel_classes.begin(),
                        split.novel_classes.end(), std::back_inserter(inter));
  EXPECT_TRUE(inter.empty());
  EXPECT_EQ(split.train.size(), 4u * 16u);
  std::vector<std::size_t> shots(8);
  for (auto i : split.train) {
    const auto c = ds.samples[i].class_id;
    EXPECT_TRUE(std::binary_search(split.base_classes.begin(), split.base_classes.end(), c));
    ++shots[c];
  }
  for (auto c : split.base_classes) EXPECT_EQ(shots[c], 16u);
  for (auto i : split.novel_test)
    EXPECT_TRUE(std::binary_search(split.novel_classes.begin(), split.novel_classes.end(), ds.samples[i].class_id));
  EXPECT_EQ(split.base_test.size(), 4u * 80u - 64u);

  auto again = make_base_to_novel_split(ds, 0.5, 16, 3);
  EXPECT_EQ(again.train, split.train);
  EXPECT_EQ(again.base_classes, split.base_classes);
}

TEST(BaseToNovelSplit, RestrictedToSourceDomains) {
  auto ds = small_dataset();
  auto split = make_base_to_novel_split(ds, 0.5, 16, 3, {0, 1});
  for (const auto* list : {&split.train, &split.base_test, &split.novel_test})
    for (auto i : *list) EXPECT_LT(ds.samples[i].domain_id, 2u);
  EXPECT_EQ(kind_of([&] { make_base_to_novel_split(ds, 0.5, 41, 3, {0, 1}); }), ErrorKind::kContract);
  EXPECT_EQ(kind_of([&] { make_base_to_novel_split(ds, 0.5, 4, 3, {9}); }), ErrorKind::kContract);
  EXPECT_EQ(kind_of([&] { make_base_to_novel_split(ds, 1.0, 4, 3); }), ErrorKind::kContract);
}

TEST(DomainSplit, Bookkeeping) {
  auto ds = small_dataset();
  auto split = make_domain_split(ds, {0, 1}, {2, 3});
  EXPECT_EQ(split.train.size(), 2u * 8u * 20u);
  for (auto i : split.train) EXPECT_LT(ds.samples[i].domain_id, 2u);
  ASSERT_EQ(split.target_test.size(), 2u);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_EQ(split.target_test[t].size(), 8u * 20u);
    for (auto i : split.target_test[t]) EXPECT_EQ(ds.samples[i].domain_id, t + 2);
  }
  EXPECT_EQ(kind_of([&] { make_domain_split(ds, {0, 1}, {1, 2}); }), ErrorKind::kContract);
  EXPECT_EQ(kind_of([&] { make_domain_split(ds, {}, {1}); }), ErrorKind::kContract);
}

TEST(DatasetIo, RoundTripAndProvenance) {
  auto ds = small_dataset(7, 3);
  auto root = scratch("roundtrip");
  save_dataset(ds, root);
  EXPECT_TRUE(fs::exists(root / "domain_2" / "class_5" / "sample_1.bin"));
  auto back = load_dataset(root);
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_TRUE(back.samples[i].pixels.bit_equal(ds.samples[i].pixels));
    EXPECT_EQ(back.samples[i].class_id, ds.samples[i].class_id);
    EXPECT_EQ(back.samples[i].domain_id, ds.samples[i].domain_id);
  }
  EXPECT_EQ(back.seed, 7u);
  // The recorded specs and seed regenerate the same pixels.
  auto regen = generate_dataset(back.domains, back.classes, back.samples_per_cell, back.seed, back.image_size);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) EXPECT_TRUE(regen.samples[i].pixels.bit_equal(ds.samples[i].pixels));
  fs::remove_all(root);
}

TEST(DatasetIo, ManifestCarriesProvenance) {
  auto ds = small_dataset(5, 1);
  auto root = scratch("provenance");
  save_dataset(ds, root, {{"seed", 5}, {"config", {{"format_version", 1}}}});
  std::ifstream in(root / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  EXPECT_EQ(manifest.at("provenance").at("seed"), 5);
  EXPECT_EQ(manifest.at("provenance").at("config").at("format_version"), 1);
  EXPECT_EQ(load_dataset(root).samples.size(), ds.samples.size());
  fs::remove_all(root);
}

TEST(DatasetIo, CorruptionNamesTheFile) {
  auto ds = small_dataset(8, 2);
  auto root = scratch("corrupt");
  save_dataset(ds, root);
  const auto victim = root / "domain_1" / "class_3" / "sample_0.bin";
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-3, std::ios::end);
    f.put('\x7f');
  }
  try {
    load_dataset(root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIntegrity);
    EXPECT_NE(std::string(e.what()).find("domain_1/class_3/sample_0.bin"), std::string::npos) << e.what();
  }
  fs::resize_file(victim, 10);
  EXPECT_EQ(kind_of([&] { load_dataset(root); }), ErrorKind::kIntegrity);
  fs::remove(victim);
  EXPECT_EQ(kind_of([&] { load_dataset(root); }), ErrorKind::kIntegrity);
  fs::remove_all(root);
}

TEST(DatasetIo, VersionMismatchIsCompatibilityError) {
  auto ds = small_dataset(9, 1);
  auto root = scratch("version");
  save_dataset(ds, root);
  std::ifstream in(root / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  in.close();
  text.replace(text.find("\"format_version\": 1"), 19, "\"format_version\": 9");
  std::ofstream(root / "manifest.json") << text;
  EXPECT_EQ(kind_of([&] { load_dataset(root); }), ErrorKind::kCompatibility);
  fs::remove_all(root);
}

}  // namespace
}  // namespace styleprompt
