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

#include "lap/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "lap/errors.hpp"

namespace lap {

std::string Shape3::str() const {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

Tensor::Tensor(int n, int c, int h, int w, double fill) : shape_{n, c, h, w} {
  if (n < 0 || c < 0 || h < 0 || w < 0) {
    throw ArgumentError("negative tensor dimension");
  }
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

Tensor Tensor::slice(int begin, int end) const {
  if (begin < 0 || end > n() || begin > end) {
    throw ArgumentError("tensor slice out of range");
  }
  Tensor out(end - begin, c(), h(), w());
  std::copy(sample(0) + static_cast<std::size_t>(begin) * c() * h() * w(),
            sample(0) + static_cast<std::size_t>(end) * c() * h() * w(),
            out.data());
  return out;
}

Tensor Tensor::gather(std::span<const int> indices) const {
  Tensor out(static_cast<int>(indices.size()), c(), h(), w());
  const std::size_t block = static_cast<std::size_t>(c()) * h() * w();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= n()) {
      throw ArgumentError("tensor gather index out of range");
    }
    std::copy_n(sample(indices[i]), block, out.data() + i * block);
  }
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other)) {
    throw ArgumentError("tensor shape mismatch: " + shape_str() + " vs " +
                        other.shape_str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
  return std::to_string(n()) + "x" + std::to_string(c()) + "x" +
         std::to_string(h()) + "x" + std::to_string(w());
}

}  // namespace lap
