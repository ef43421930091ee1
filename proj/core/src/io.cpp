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

#include "lap/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include "lap/errors.hpp"

namespace lap {

namespace {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string what)
      : data_(data), what_(std::move(what)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw IntegrityError(what_ + ": truncated at byte " + std::to_string(pos_));
    }
  }
  std::span<const std::uint8_t> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

std::size_t LapmArray::count() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

void write_lapm(const std::filesystem::path& path,
                std::span<const std::uint32_t> dims,
                std::span<const double> values) {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  if (n != values.size()) {
    throw ArgumentError("write_lapm: dims describe " + std::to_string(n) +
                        " values, got " + std::to_string(values.size()));
  }
  ByteWriter w;
  w.bytes("LAPM");
  w.u32(kLapmVersion);
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (std::uint32_t d : dims) w.u32(d);
  for (double v : values) w.f32(static_cast<float>(v));
  dump(path, w.buffer());
}

LapmArray read_lapm(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = slurp(path);
  ByteReader r(bytes, path.string());
  if (r.str(4) != "LAPM") throw IntegrityError(path.string() + ": not a LAPM file");
  const std::uint32_t version = r.u32();
  if (version != kLapmVersion) {
    throw IntegrityError(path.string() + ": unsupported LAPM version " +
                         std::to_string(version));
  }
  LapmArray a;
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw IntegrityError(path.string() + ": implausible rank");
  for (std::uint32_t i = 0; i < rank; ++i) a.dims.push_back(r.u32());
  const std::size_t n = a.count();
  if (r.remaining() != n * 4) {
    throw IntegrityError(path.string() + ": payload size does not match dims");
  }
  a.values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) a.values.push_back(r.f32());
  return a;
}

void write_maps(const std::filesystem::path& path, std::span<const Map2d> maps) {
  if (maps.empty()) throw ArgumentError("write_maps: nothing to write");
  std::vector<double> flat;
  for (const Map2d& m : maps) {
    if (!m.same_shape(maps.front())) throw ArgumentError("write_maps: shapes differ");
    flat.insert(flat.end(), m.data.begin(), m.data.end());
  }
  const std::uint32_t dims[3] = {static_cast<std::uint32_t>(maps.size()),
                                 static_cast<std::uint32_t>(maps.front().rows),
                                 static_cast<std::uint32_t>(maps.front().cols)};
  write_lapm(path, dims, flat);
}

std::vector<Map2d> read_maps(const std::filesystem::path& path) {
  const LapmArray a = read_lapm(path);
  std::uint32_t count = 1, rows = 0, cols = 0;
  if (a.dims.size() == 2) {
    rows = a.dims[0];
    cols = a.dims[1];
  } else if (a.dims.size() == 3) {
    count = a.dims[0];
    rows = a.dims[1];
    cols = a.dims[2];
  } else {
    throw IntegrityError(path.string() + ": expected a rank 2 or 3 map container");
  }
  std::vector<Map2d> maps;
  auto it = a.values.begin();
  for (std::uint32_t i = 0; i < count; ++i) {
    Map2d m(static_cast<int>(rows), static_cast<int>(cols));
    for (double& v : m.data) v = *it++;
    maps.push_back(std::move(m));
  }
  return maps;
}

void write_png(const std::filesystem::path& path, const Map2d& m, double lo,
               double hi) {
  if (!(hi > lo)) throw ArgumentError("write_png: empty value range");
  std::vector<png_byte> pixels(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double t = std::clamp((m.data[i] - lo) / (hi - lo), 0.0, 1.0);
    pixels[i] = static_cast<png_byte>(std::lround(t * 255.0));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(m.cols);
  image.height = static_cast<png_uint_32>(m.rows);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0,
                               nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error("png write failed for " + path.string() + ": " + msg);
  }
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, Network& net,
                     const nlohmann::json& meta) {
  ByteWriter w;
  w.bytes("LAPC");
  w.u32(kCheckpointVersion);
  const std::string header =
      nlohmann::json{{"graph", net.describe()}, {"meta", meta}}.dump();
  w.u64(header.size());
  w.bytes(header);
  const std::vector<NamedParam> params = net.params();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const NamedParam& p : params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    for (int d : p.param->value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.param->value.values()) w.f32(static_cast<float>(v));
  }
  w.u64(fnv1a64(w.buffer()));
  dump(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = slurp(path);
  const std::string what = path.string();
  if (bytes.size() < 8 + 8) throw IntegrityError(what + ": file too short");
  const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 8);
  ByteReader tail(std::span<const std::uint8_t>(bytes).last(8), what);
  if (tail.u64() != fnv1a64(body)) throw IntegrityError(what + ": checksum mismatch");

  ByteReader r(body, what);
  if (r.str(4) != "LAPC") throw IntegrityError(what + ": not a checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IntegrityError(what + ": unsupported checkpoint version " +
                         std::to_string(version));
  }
  const std::uint64_t header_len = r.u64();
  if (header_len > r.remaining()) throw IntegrityError(what + ": header overruns file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(what + ": bad header: " + e.what());
  }
  Checkpoint ck;
  try {
    ck.net = Network::from_description(header.at("graph"));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(what + ": bad graph description: " + e.what());
  }
  ck.meta = header.value("meta", nlohmann::json::object());

  std::map<std::string, Param*> by_name;
  for (const NamedParam& p : ck.net.params()) by_name[p.name] = p.param;
  const std::uint32_t count = r.u32();
  if (count != by_name.size()) {
    throw IntegrityError(what + ": " + std::to_string(count) + " parameters stored, graph has " +
                         std::to_string(by_name.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    if (len > r.remaining()) throw IntegrityError(what + ": parameter name overruns file");
    const std::string name = r.str(len);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IntegrityError(what + ": unknown parameter " + name);
    Param& p = *it->second;
    for (int d : p.value.shape()) {
      if (r.u32() != static_cast<std::uint32_t>(d)) {
        throw IntegrityError(what + ": shape mismatch for " + name);
      }
    }
    for (double& v : p.value.values()) v = r.f32();
    by_name.erase(it);
  }
  if (r.remaining() != 0) throw IntegrityError(what + ": trailing bytes");
  return ck;
}

}  // namespace lap
