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

#ifndef LAP_TENSOR_HPP_
#define LAP_TENSOR_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lap {

/// Channel/height/width of one sample; the batch dimension is kept apart.
struct Shape3 {
  int c = 0;
  int h = 0;
  int w = 0;

  bool operator==(const Shape3&) const = default;
  std::string str() const;
};

/**
 * @brief Dense N x C x H x W array of doubles in row-major order.
 *
 * Every activation, gradient and parameter in the toolkit is a Tensor.
 * Parameters of lower rank use trailing unit dimensions, e.g. a linear
 * weight is (out, in, 1, 1).
 */
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);

  static Tensor like(const Tensor& other, double fill = 0.0) {
    return Tensor(other.n(), other.c(), other.h(), other.w(), fill);
  }

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  std::array<int, 4> shape() const { return shape_; }
  Shape3 sample_shape() const { return {c(), h(), w()}; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int n, int c, int h, int w) {
    return data_[index(n, c, h, w)];
  }
  double at(int n, int c, int h, int w) const {
    return data_[index(n, c, h, w)];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// Contiguous H*W plane of sample n, channel c.
  double* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const double* plane(int n, int c) const {
    return data_.data() + index(n, c, 0, 0);
  }
  /// Contiguous C*H*W block of sample n.
  double* sample(int n) { return data_.data() + index(n, 0, 0, 0); }
  const double* sample(int n) const {
    return data_.data() + index(n, 0, 0, 0);
  }

  /// Copy of samples [begin, end).
  Tensor slice(int begin, int end) const;
  /// Copy of the listed samples in order.
  Tensor gather(std::span<const int> indices) const;

  void fill(double value);
  /// In-place elementwise accumulate; shapes must match.
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
               shape_[3] +
           w;
  }

  std::array<int, 4> shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

/// Named trainable array with its accumulated gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::like(value)) {}
  void zero_grad() { grad.fill(0.0); }
};

}  // namespace lap

#endif  // LAP_TENSOR_HPP_
