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

#include "lap/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "lap/errors.hpp"
#include "lap/io.hpp"

namespace lap {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// The standard distributions are implementation-defined; these two are not.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(rng() % span);
}

double normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

void SynthSpec::validate() const {
  if (image_size < 1) throw SpecError("image_size must be positive");
  if (n_train < 0 || n_val < 0 || n_test < 0) {
    throw SpecError("split sizes must be non-negative");
  }
  if (radius_min < 1 || radius_max < radius_min) {
    throw SpecError("need 1 <= radius_min <= radius_max");
  }
  if (2 * radius_max + 1 > image_size) {
    throw SpecError("a disc of radius " + std::to_string(radius_max) +
                    " does not fit a " + std::to_string(image_size) + " px image");
  }
  if (noise_std < 0.0 || texture_amplitude < 0.0 || max_frequency < 1) {
    throw SpecError("invalid texture parameters");
  }
}

std::optional<Box> mask_hull(const Mask2d& mask, int concept_id) {
  int y0 = mask.rows, y1 = -1, x0 = mask.cols, x1 = -1;
  for (int y = 0; y < mask.rows; ++y) {
    for (int x = 0; x < mask.cols; ++x) {
      if (!mask.at(y, x)) continue;
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
  }
  if (y1 < 0) return std::nullopt;
  return Box{concept_id, x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

SynthSample generate_sample(const SynthSpec& spec, int id, int label) {
  std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(id))));
  const int n = spec.image_size;
  SynthSample s;
  s.id = id;
  s.label = label;
  s.image = Map2d(n, n);
  s.mask = Mask2d(n, n);
  s.annotation.sample_id = std::to_string(id);

  const int fx = uniform_int(rng, 0, spec.max_frequency);
  const int fy = uniform_int(rng, fx == 0 ? 1 : 0, spec.max_frequency);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double k = 2.0 * std::numbers::pi / n;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      s.image.at(y, x) = spec.background_mean +
                         spec.texture_amplitude * std::sin(k * (fx * x + fy * y) + phase) +
                         spec.noise_std * normal(rng);
    }
  }
  if (label == 1) {
    const int r = uniform_int(rng, spec.radius_min, spec.radius_max);
    const double cx = uniform(rng, r, n - 1 - r);
    const double cy = uniform(rng, r, n - 1 - r);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= double(r) * r) {
          s.mask.at(y, x) = 1;
          s.image.at(y, x) += spec.contrast;
        }
      }
    }
    s.annotation.concepts = {0};
    s.annotation.boxes = {*mask_hull(s.mask)};
  }
  return s;
}

SynthDataset generate(const SynthSpec& spec) {
  spec.validate();
  SynthDataset ds;
  ds.spec = spec;
  int next_id = 0;
  auto fill = [&](SynthSplit& split, const char* name, int count) {
    split.name = name;
    split.samples.reserve(count);
    for (int i = 0; i < count; ++i) {
      split.samples.push_back(generate_sample(spec, next_id++, i % 2 == 0 ? 1 : 0));
    }
  };
  fill(ds.train, "train", spec.n_train);
  fill(ds.val, "val", spec.n_val);
  fill(ds.test, "test", spec.n_test);
  return ds;
}

Normalization fit_normalization(const SynthSplit& split) {
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (const SynthSample& s : split.samples) {
    for (double v : s.image.data) {
      sum += v;
      sq += v * v;
    }
    count += s.image.size();
  }
  if (count == 0) throw ArgumentError("cannot normalize an empty split");
  Normalization norm;
  norm.mean = sum / count;
  const double var = sq / count - norm.mean * norm.mean;
  norm.std = var > 0.0 ? std::sqrt(var) : 1.0;
  return norm;
}

LabeledData to_labeled(const SynthSplit& split, const Normalization& norm) {
  LabeledData d;
  if (split.samples.empty()) return d;
  const int h = split.samples.front().image.rows;
  const int w = split.samples.front().image.cols;
  d.images = Tensor(static_cast<int>(split.samples.size()), 1, h, w);
  for (std::size_t i = 0; i < split.samples.size(); ++i) {
    const SynthSample& s = split.samples[i];
    if (s.image.rows != h || s.image.cols != w) {
      throw ArgumentError("split images differ in size");
    }
    double* p = d.images.plane(static_cast<int>(i), 0);
    for (std::size_t k = 0; k < s.image.size(); ++k) {
      p[k] = (s.image.data[k] - norm.mean) / norm.std;
    }
    d.labels.push_back(s.label);
    d.annotations.push_back(s.annotation);
  }
  return d;
}

// ------------------------------------------------------------ annotations

namespace {

[[noreturn]] void parse_fail(const std::string& source, int line,
                             const std::string& msg) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + msg);
}

int parse_int(const std::string& text, const std::string& field,
              const std::string& source, int line) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    parse_fail(source, line, "field '" + field + "': '" + text + "' is not an integer");
  }
  return v;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

}  // namespace

AnnotationFile parse_annotations(std::istream& in, const std::string& source) {
  AnnotationFile file;
  bool have_header = false;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty() || tok.front().front() == '#') continue;

    if (!have_header) {
      if (tok.size() != 4 || tok[0] != "lapann") {
        parse_fail(source, line, "expected header 'lapann 1 <width> <height>'");
      }
      if (parse_int(tok[1], "version", source, line) != 1) {
        parse_fail(source, line, "field 'version': only version 1 is supported");
      }
      file.width = parse_int(tok[2], "width", source, line);
      file.height = parse_int(tok[3], "height", source, line);
      if (file.width < 1 || file.height < 1) {
        parse_fail(source, line, "field 'width'/'height': must be positive");
      }
      have_header = true;
      continue;
    }

    if (tok.size() < 2) parse_fail(source, line, "field 'concepts': missing");
    ConceptAnnotation ann;
    ann.sample_id = tok[0];
    if (tok[1] != "-") {
      for (const std::string& c : split_on(tok[1], ',')) {
        const int idx = parse_int(c, "concepts", source, line);
        if (idx < 0) parse_fail(source, line, "field 'concepts': negative index");
        ann.concepts.push_back(idx);
      }
    }
    for (std::size_t b = 2; b < tok.size(); ++b) {
      const std::string tag = "box " + std::to_string(b - 2);
      const auto colon = tok[b].find(':');
      if (colon == std::string::npos) {
        parse_fail(source, line, tag + ": expected <concept>:<x>,<y>,<w>,<h>");
      }
      Box box;
      box.concept_id = parse_int(tok[b].substr(0, colon), tag + " concept", source, line);
      const std::vector<std::string> xywh = split_on(tok[b].substr(colon + 1), ',');
      if (xywh.size() != 4) parse_fail(source, line, tag + ": expected four coordinates");
      box.x = parse_int(xywh[0], tag + " x", source, line);
      box.y = parse_int(xywh[1], tag + " y", source, line);
      box.w = parse_int(xywh[2], tag + " w", source, line);
      box.h = parse_int(xywh[3], tag + " h", source, line);
      if (box.x < 0) parse_fail(source, line, tag + " field 'x': negative");
      if (box.y < 0) parse_fail(source, line, tag + " field 'y': negative");
      if (box.w < 1) parse_fail(source, line, tag + " field 'w': must be >= 1");
      if (box.h < 1) parse_fail(source, line, tag + " field 'h': must be >= 1");
      if (box.x + box.w > file.width) {
        parse_fail(source, line, tag + " field 'w': x + w = " +
                                     std::to_string(box.x + box.w) + " exceeds width " +
                                     std::to_string(file.width));
      }
      if (box.y + box.h > file.height) {
        parse_fail(source, line, tag + " field 'h': y + h = " +
                                     std::to_string(box.y + box.h) + " exceeds height " +
                                     std::to_string(file.height));
      }
      ann.boxes.push_back(box);
    }
    file.records.push_back(std::move(ann));
  }
  return file;
}

AnnotationFile load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_annotations(in, path.string());
}

void save_annotations(const std::filesystem::path& path, const AnnotationFile& file) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "lapann 1 " << file.width << ' ' << file.height << '\n';
  for (const ConceptAnnotation& a : file.records) {
    out << a.sample_id << ' ';
    if (a.concepts.empty()) out << '-';
    for (std::size_t i = 0; i < a.concepts.size(); ++i) {
      out << (i ? "," : "") << a.concepts[i];
    }
    for (const Box& b : a.boxes) {
      out << ' ' << b.concept_id << ':' << b.x << ',' << b.y << ',' << b.w << ',' << b.h;
    }
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

void save_split(const std::filesystem::path& dir, const SynthSplit& split) {
  if (split.samples.empty()) throw ArgumentError("refusing to save an empty split");
  std::vector<Map2d> images, masks;
  AnnotationFile ann;
  ann.height = split.samples.front().image.rows;
  ann.width = split.samples.front().image.cols;
  for (const SynthSample& s : split.samples) {
    images.push_back(s.image);
    Map2d m(s.mask.rows, s.mask.cols);
    for (std::size_t k = 0; k < m.size(); ++k) m.data[k] = s.mask.data[k];
    masks.push_back(std::move(m));
    ann.records.push_back(s.annotation);
  }
  write_maps(dir / (split.name + ".images.lapm"), images);
  write_maps(dir / (split.name + ".masks.lapm"), masks);
  save_annotations(dir / (split.name + ".ann"), ann);
}

SynthSplit load_split(const std::filesystem::path& dir, const std::string& name) {
  const std::vector<Map2d> images = read_maps(dir / (name + ".images.lapm"));
  const std::vector<Map2d> masks = read_maps(dir / (name + ".masks.lapm"));
  const AnnotationFile ann = load_annotations(dir / (name + ".ann"));
  if (images.size() != masks.size() || images.size() != ann.records.size()) {
    throw IntegrityError(name + ": images, masks and annotations differ in count");
  }
  SynthSplit split;
  split.name = name;
  for (std::size_t i = 0; i < images.size(); ++i) {
    SynthSample s;
    s.annotation = ann.records[i];
    try {
      s.id = std::stoi(s.annotation.sample_id);
    } catch (const std::exception&) {
      throw IntegrityError(name + ": non-numeric sample id " + s.annotation.sample_id);
    }
    s.label = s.annotation.has(0) ? 1 : 0;
    s.image = images[i];
    s.mask = Mask2d(masks[i].rows, masks[i].cols);
    for (std::size_t k = 0; k < masks[i].size(); ++k) s.mask.data[k] = masks[i].data[k] > 0.5;
    split.samples.push_back(std::move(s));
  }
  return split;
}

}  // namespace lap
