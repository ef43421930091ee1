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

#ifndef LAP_TESTS_TEST_UTIL_HPP_
#define LAP_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lap/tensor.hpp"

namespace lap::testing {

// Finite-difference settings shared by every gradient check.
inline constexpr double kFdStep = 1e-3;
inline constexpr double kFdRelTol = 1e-4;
// Below this absolute gap two gradients count as equal; keeps the relative
// test meaningful for entries that are zero up to rounding.
inline constexpr double kFdAbsFloor = 1e-8;

inline Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t(n, c, h, w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline double rel_error(double a, double b) {
  const double gap = std::abs(a - b);
  if (gap <= kFdAbsFloor) return 0.0;
  return gap / std::max(std::abs(a), std::abs(b));
}

struct FdResult {
  double worst = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central differences of `f` w.r.t. every entry of `values`, compared with
/// `analytic`. `f` must read `values` afresh on each call.
inline FdResult fd_compare(std::span<double> values, std::span<const double> analytic,
                           const std::function<double()>& f, double step = kFdStep) {
  FdResult r;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + step;
    const double up = f();
    values[i] = keep - step;
    const double down = f();
    values[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double e = rel_error(analytic[i], numeric);
    if (e > r.worst) r = {e, i, analytic[i], numeric};
  }
  return r;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace lap::testing

#endif  // LAP_TESTS_TEST_UTIL_HPP_
