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

#ifndef LAP_SYNTH_DATA_HPP_
#define LAP_SYNTH_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lap/grid.hpp"
#include "lap/losses.hpp"
#include "lap/surgery.hpp"

namespace lap {

/**
 * @brief Spot-detection dataset: grayscale texture backgrounds, and on
 * positive samples one disc added on top.
 *
 * Background = mean + amplitude * sin(plane wave) + gaussian noise. The disc
 * adds `contrast` to every pixel it covers, so the in-mask mean exceeds the
 * background mean by `contrast` in expectation. Nothing is clipped.
 */
struct SynthSpec {
  int image_size = 64;
  int n_train = 2000;
  int n_val = 250;
  int n_test = 250;
  double background_mean = 0.3;
  double texture_amplitude = 0.1;
  int max_frequency = 4;  // cycles per image along each axis
  double noise_std = 0.05;
  int radius_min = 4;
  int radius_max = 8;
  double contrast = 0.4;
  std::uint64_t seed = 0;

  /// Throws SpecError when the disc cannot be placed or a field is invalid.
  void validate() const;
};

struct SynthSample {
  int id = 0;
  int label = 0;  // 1 when the disc is present
  Map2d image;
  Mask2d mask;
  ConceptAnnotation annotation;  // concept 0 plus its tight box on positives
};

struct SynthSplit {
  std::string name;
  std::vector<SynthSample> samples;
};

struct SynthDataset {
  SynthSpec spec;
  SynthSplit train, val, test;
};

/// Sample ids are global: train first, then val, then test. Even positions
/// within a split are positives. Each sample draws from its own generator
/// seeded from (spec.seed, id).
SynthDataset generate(const SynthSpec& spec);
SynthSample generate_sample(const SynthSpec& spec, int id, int label);

/// Tight bounding rectangle of the set pixels; nullopt for an empty mask.
std::optional<Box> mask_hull(const Mask2d& mask, int concept_id = 0);

struct Normalization {
  double mean = 0.0;
  double std = 1.0;
};
/// Pixel mean/std over a split.
Normalization fit_normalization(const SynthSplit& split);
/// (x - mean) / std into a (N, 1, H, W) tensor, with labels and annotations.
LabeledData to_labeled(const SynthSplit& split, const Normalization& norm);

/**
 * Annotation text format. Blank lines and lines starting with '#' are
 * ignored. The first record line is the header, then one line per sample:
 *
 *   lapann 1 <width> <height>
 *   <sample_id> <concepts> [<concept>:<x>,<y>,<w>,<h> ...]
 *
 * <concepts> is a comma-separated list of indices or "-" when empty.
 */
struct AnnotationFile {
  int width = 0;
  int height = 0;
  std::vector<ConceptAnnotation> records;
};

/// Throws ParseError carrying the line number and offending field.
AnnotationFile parse_annotations(std::istream& in, const std::string& source);
AnnotationFile load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const AnnotationFile& file);

/// <dir>/<split>.images.lapm (N,H,W), <split>.masks.lapm and <split>.ann.
void save_split(const std::filesystem::path& dir, const SynthSplit& split);
SynthSplit load_split(const std::filesystem::path& dir, const std::string& name);

}  // namespace lap

#endif  // LAP_SYNTH_DATA_HPP_
