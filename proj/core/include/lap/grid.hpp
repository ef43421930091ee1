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

#ifndef LAP_GRID_HPP_
#define LAP_GRID_HPP_

#include <cstdint>
#include <vector>

namespace lap {

/// Row-major 2-D grid. Map2d holds scores, Mask2d holds booleans as bytes.
template <typename T>
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int r, int c, T fill = T{})
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  const T& at(int i, int j) const {
    return data[static_cast<std::size_t>(i) * cols + j];
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Grid&) const = default;
};

using Map2d = Grid<double>;
using Mask2d = Grid<std::uint8_t>;

}  // namespace lap

#endif  // LAP_GRID_HPP_
