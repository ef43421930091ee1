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


#ifndef LAP_TESTS_STACK_REFERENCE_HPP_
#define LAP_TESTS_STACK_REFERENCE_HPP_

#include <algorithm>
#include <random>
#include <utility>

#include "lap/interpret.hpp"

namespace lap::testing {

inline StackLevel level(Map2d m, KernelSpec k = KernelSpec::square(2, 2)) {
  StackLevel l;
  l.aggregated = m;
  l.concepts = {std::move(m)};
  l.kernel = k;
  return l;
}

// Pull-based recursion: each pixel walks up to its ancestors independently.
class RecursiveReference {
 public:
  RecursiveReference(const InterpretationStack& s, int c) : s_(s), c_(c) {}

  double integrated(int l, int y, int x) const {
    const Map2d& p = map(l);
    if (l == s_.depth() - 1) return p.at(y, x);
    const auto [py, px] = parent(l, y, x);
    const double r = integrated(l + 1, py, px);
    double wmax = -1.0;
    for (int i = 0; i < p.rows; ++i) {
      for (int j = 0; j < p.cols; ++j) {
        if (parent(l, i, j) == std::make_pair(py, px)) wmax = std::max(wmax, p.at(i, j));
      }
    }
    if (!(r > 0.5 && wmax > 0.5)) return r;
    const double own = p.at(y, x) * decay(l);
    return p.at(y, x) > 0.5 ? std::max(r, own) : own;
  }

  double accumulated(int l, int y, int x) const {
    const double own = map(l).at(y, x);
    if (l == s_.depth() - 1) return own;
    const auto [py, px] = parent(l, y, x);
    return accumulated(l + 1, py, px) + own * decay(l);
  }

  // Nearest-neighbour lookup from input resolution to level 0.
  template <typename F>
  Map2d at_input(F f) const {
    const Map2d& p0 = map(0);
    Map2d out(s_.input_h, s_.input_w);
    for (int i = 0; i < s_.input_h; ++i) {
      for (int j = 0; j < s_.input_w; ++j) {
        out.at(i, j) = f(i * p0.rows / s_.input_h, j * p0.cols / s_.input_w);
      }
    }
    return out;
  }

 private:
  const Map2d& map(int l) const { return s_.levels[l].concepts[c_]; }
  std::pair<int, int> parent(int l, int y, int x) const {
    const KernelSpec& k = s_.levels[l].kernel;
    const Map2d& up = map(l + 1);
    const int py = std::min(std::max((y + k.padding) / k.stride_h, 0), up.rows - 1);
    const int px = std::min(std::max((x + k.padding) / k.stride_w, 0), up.cols - 1);
    return {py, px};
  }
  double decay(int l) const {
    double d = 1.0;
    for (int i = l; i < s_.depth() - 1; ++i) d *= s_.decay_alpha;
    return d;
  }

  const InterpretationStack& s_;
  int c_;
};

inline Map2d random_map(int rows, int cols, std::mt19937_64& rng) {
  Map2d m(rows, cols);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 9);
  for (double& v : m.data) {
    const int t = pick(rng);
    // Exact 0.5 and duplicates exercise the strict threshold and tie order.
    v = t == 0 ? 0.5 : t == 1 ? 0.75 : u(rng);
  }
  return m;
}

// Three levels with consistent geometry, level 0 at most 8x8.
inline InterpretationStack random_stack(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(4, 8), kern(2, 3), coin(0, 1);
  for (;;) {
    InterpretationStack s;
    int h = size(rng), w = size(rng);
    s.input_h = h * (1 + coin(rng));
    s.input_w = w * (1 + coin(rng));
    s.decay_alpha = 0.8;
    bool ok = true;
    for (int l = 0; l < 3 && ok; ++l) {
      const int k = kern(rng);
      const KernelSpec ks{k, k, std::uniform_int_distribution<int>(1, k)(rng),
                          std::uniform_int_distribution<int>(1, k)(rng), coin(rng) && k > 1 ? 1 : 0};
      s.levels.push_back(level(random_map(h, w, rng), ks));
      if (l < 2) {
        const int nh = (h + 2 * ks.padding - k) / ks.stride_h + 1;
        const int nw = (w + 2 * ks.padding - k) / ks.stride_w + 1;
        ok = h + 2 * ks.padding >= k && w + 2 * ks.padding >= k && nh >= 1 && nw >= 1;
        h = nh;
        w = nw;
      }
    }
    if (ok) return s;
  }
}

}  // namespace lap::testing

#endif  // LAP_TESTS_STACK_REFERENCE_HPP_
