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

#ifndef LAP_IO_HPP_
#define LAP_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lap/grid.hpp"
#include "lap/network.hpp"

namespace lap {

/**
 * LAPM array container, little-endian throughout:
 *
 *   char[4]  "LAPM"
 *   u32      version (1)
 *   u32      rank
 *   u32      dims[rank]
 *   f32      values[prod(dims)], row-major
 */
inline constexpr std::uint32_t kLapmVersion = 1;

struct LapmArray {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t count() const;
};

void write_lapm(const std::filesystem::path& path,
                std::span<const std::uint32_t> dims,
                std::span<const double> values);
/// Throws IntegrityError on a bad magic, unknown version or short file.
LapmArray read_lapm(const std::filesystem::path& path);

/// Stacks maps of one shape into a (count, rows, cols) container.
void write_maps(const std::filesystem::path& path, std::span<const Map2d> maps);
/// Accepts rank 2 (one map) or rank 3 containers.
std::vector<Map2d> read_maps(const std::filesystem::path& path);

/// 8-bit grayscale PNG; values are mapped linearly from [lo, hi] and clipped.
void write_png(const std::filesystem::path& path, const Map2d& m,
               double lo = 0.0, double hi = 1.0);

/**
 * Checkpoint container, little-endian:
 *
 *   char[4]  "LAPC"
 *   u32      version (1)
 *   u64      header length, then that many bytes of UTF-8 JSON holding
 *            {"graph": Network::describe(), "meta": {...}}
 *   u32      parameter count, then per parameter:
 *              u32 name length, name bytes (UTF-8),
 *              u32 dims[4], f32 values (row-major)
 *   u64      FNV-1a 64 of every preceding byte
 */
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Network net;
  nlohmann::json meta;
};

void save_checkpoint(const std::filesystem::path& path, Network& net,
                     const nlohmann::json& meta = nlohmann::json::object());
/// Throws IntegrityError on any corruption, truncation or checksum mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace lap

#endif  // LAP_IO_HPP_
