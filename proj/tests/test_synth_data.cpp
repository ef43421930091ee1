// Copyright 2026 The LAP Toolkit Authors.
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

#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "lap/errors.hpp"
#include "lap/synth_data.hpp"

namespace lap {
namespace {

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec s;
  s.image_size = 32;
  s.n_train = 21;
  s.n_val = 6;
  s.n_test = 5;
  s.seed = seed;
  return s;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::path(::testing::TempDir()) / ("lap_synth_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TEST(Generate, SameSeedSameBytes) {
  const SynthDataset a = generate(small_spec(3));
  const SynthDataset b = generate(small_spec(3));
  for (auto split : {&SynthDataset::train, &SynthDataset::val, &SynthDataset::test}) {
    const auto& sa = (a.*split).samples;
    const auto& sb = (b.*split).samples;
    ASSERT_EQ(sa.size(), sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
      EXPECT_EQ(sa[i].image, sb[i].image);
      EXPECT_EQ(sa[i].mask, sb[i].mask);
      EXPECT_EQ(sa[i].annotation, sb[i].annotation);
    }
  }
  const SynthDataset c = generate(small_spec(4));
  EXPECT_NE(a.train.samples[0].image, c.train.samples[0].image);
}

TEST(Generate, SampleDependsOnlyOnSpecAndId) {
  const SynthSpec spec = small_spec(5);
  const SynthDataset d = generate(spec);
  const SynthSample& s = d.val.samples[3];
  const SynthSample again = generate_sample(spec, s.id, s.label);
  EXPECT_EQ(again.image, s.image);
  EXPECT_EQ(again.mask, s.mask);
}

TEST(Generate, NegativesHaveEmptyMasks) {
  const SynthDataset d = generate(small_spec(6));
  for (const SynthSample& s : d.train.samples) {
    std::size_t on = 0;
    for (auto v : s.mask.data) on += v;
    if (s.label == 0) {
      EXPECT_EQ(on, 0u);
      EXPECT_TRUE(s.annotation.concepts.empty());
      EXPECT_TRUE(s.annotation.boxes.empty());
    } else {
      EXPECT_GT(on, 0u);
      EXPECT_EQ(s.annotation.concepts, std::vector<int>{0});
    }
  }
}

TEST(Generate, BoxIsTightHullOfMask) {
  const SynthDataset d = generate(small_spec(7));
  for (const SynthSample& s : d.train.samples) {
    if (s.label == 0) continue;
    ASSERT_EQ(s.annotation.boxes.size(), 1u);
    const Box& b = s.annotation.boxes[0];
    int y0 = 1 << 30, y1 = -1, x0 = 1 << 30, x1 = -1;
    for (int y = 0; y < s.mask.rows; ++y) {
      for (int x = 0; x < s.mask.cols; ++x) {
        if (!s.mask.at(y, x)) continue;
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
    }
    EXPECT_EQ(b, (Box{0, x0, y0, x1 - x0 + 1, y1 - y0 + 1}));
    EXPECT_EQ(mask_hull(s.mask), b);
  }
  EXPECT_FALSE(mask_hull(Mask2d(4, 4)).has_value());
}

TEST(Generate, DiscRadiusWithinRange) {
  SynthSpec spec = small_spec(8);
  spec.radius_min = 3;
  spec.radius_max = 5;
  const SynthDataset d = generate(spec);
  for (const SynthSample& s : d.train.samples) {
    if (s.label == 0) continue;
    const Box& b = s.annotation.boxes[0];
    EXPECT_EQ(b.w, b.h);
    EXPECT_GE(b.w, 2 * 3 + 1);
    EXPECT_LE(b.w, 2 * 5 + 1);
  }
}

TEST(Generate, ContrastMatchesSpec) {
  SynthSpec spec;
  spec.n_train = 2000;
  spec.n_val = 0;
  spec.n_test = 0;
  spec.seed = 9;
  const SynthDataset d = generate(spec);
  double in_sum = 0.0, out_sum = 0.0;
  std::size_t in_n = 0, out_n = 0, positives = 0;
  for (const SynthSample& s : d.train.samples) {
    if (s.label == 0) continue;
    ++positives;
    for (std::size_t i = 0; i < s.image.size(); ++i) {
      if (s.mask.data[i]) {
        in_sum += s.image.data[i];
        ++in_n;
      } else {
        out_sum += s.image.data[i];
        ++out_n;
      }
    }
  }
  ASSERT_EQ(positives, 1000u);
  EXPECT_NEAR(in_sum / in_n - out_sum / out_n, spec.contrast, 0.01);
}

TEST(Generate, SplitsDisjointAndBalanced) {
  const SynthSpec spec = small_spec(10);
  const SynthDataset d = generate(spec);
  std::set<std::string> ids;
  std::size_t total = 0;
  for (const SynthSplit* split : {&d.train, &d.val, &d.test}) {
    int pos = 0;
    for (const SynthSample& s : split->samples) {
      ids.insert(s.annotation.sample_id);
      pos += s.label;
    }
    total += split->samples.size();
    const double half = split->samples.size() / 2.0;
    EXPECT_LE(std::abs(pos - half), 1.0) << split->name;
  }
  EXPECT_EQ(ids.size(), total);
  EXPECT_EQ(d.train.samples.size(), 21u);
  EXPECT_EQ(d.val.samples.size(), 6u);
  EXPECT_EQ(d.test.samples.size(), 5u);
}

TEST(Generate, InfeasibleSpecIsSpecError) {
  SynthSpec spec = small_spec(1);
  spec.image_size = 12;
  spec.radius_max = 8;
  EXPECT_THROW(generate(spec), SpecError);
  spec = small_spec(1);
  spec.radius_min = 5;
  spec.radius_max = 4;
  EXPECT_THROW(spec.validate(), SpecError);
}

TEST(Normalization, ZeroMeanUnitStdOnTrain) {
  const SynthDataset d = generate(small_spec(11));
  const Normalization norm = fit_normalization(d.train);
  const LabeledData data = to_labeled(d.train, norm);
  double sum = 0.0, sq = 0.0;
  for (double v : data.images.values()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(data.images.size());
  EXPECT_NEAR(sum / n, 0.0, 1e-9);
  EXPECT_NEAR(sq / n, 1.0, 1e-9);
  EXPECT_EQ(data.size(), 21);
  EXPECT_EQ(data.labels[0], 1);
  EXPECT_EQ(data.labels[1], 0);
}

// ------------------------------------------------------------ annotations

TEST(Annotations, RoundTrip) {
  AnnotationFile f;
  f.width = 64;
  f.height = 48;
  f.records = {{"a1", {0}, {Box{0, 3, 4, 10, 12}}},
               {"a2", {}, {}},
               {"a3", {0, 2}, {Box{0, 0, 0, 64, 48}, Box{2, 10, 10, 1, 1}}}};
  const auto dir = scratch_dir("roundtrip");
  save_annotations(dir / "x.ann", f);
  const AnnotationFile g = load_annotations(dir / "x.ann");
  EXPECT_EQ(g.width, 64);
  EXPECT_EQ(g.height, 48);
  EXPECT_EQ(g.records, f.records);
}

TEST(Annotations, EmptyInputGivesNoRecords) {
  std::istringstream empty("");
  EXPECT_TRUE(parse_annotations(empty, "empty").records.empty());
  std::istringstream header_only("# comment\nlapann 1 8 8\n\n");
  EXPECT_TRUE(parse_annotations(header_only, "h").records.empty());
}

TEST(Annotations, BoxOutsideImageNamesField) {
  std::istringstream in("lapann 1 32 32\ns0 0 0:20,4,16,8\n");
  try {
    parse_annotations(in, "boxes.ann");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("boxes.ann:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("field 'w'"), std::string::npos) << msg;
  }
}

TEST(Annotations, MalformedLinesReportLineNumber) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"lapann 1 8 8\ns0 x\n", ":2:"},
      {"lapann 1 8 8\n# c\ns0 0 0:1,2,3\n", ":3:"},
      {"nope\n", ":1:"},
      {"lapann 2 8 8\n", "version"},
      {"lapann 1 8 8\ns0 0 0:1,2,3,4\ns1 - 0:0,-1,2,2\n", "field 'y'"}};
  for (const auto& [text, needle] : cases) {
    std::istringstream in(text);
    try {
      parse_annotations(in, "f");
      ADD_FAILURE() << "no error for: " << text;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  }
}

TEST(Splits, SaveAndLoad) {
  const SynthDataset d = generate(small_spec(12));
  const auto dir = scratch_dir("splits");
  save_split(dir, d.val);
  const SynthSplit back = load_split(dir, "val");
  ASSERT_EQ(back.samples.size(), d.val.samples.size());
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    const SynthSample& a = d.val.samples[i];
    const SynthSample& b = back.samples[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_EQ(a.annotation, b.annotation);
    for (std::size_t k = 0; k < a.image.size(); ++k) {
      EXPECT_EQ(static_cast<float>(a.image.data[k]), b.image.data[k]);
    }
  }
}

}  // namespace
}  // namespace lap
