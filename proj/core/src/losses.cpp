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

#include "lap/losses.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "lap/errors.hpp"

namespace lap {
namespace {

double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}
bool clamped(double p) { return p < kProbClamp || p > 1.0 - kProbClamp; }

// -ln(p) and its derivative.
double neg_log(double p, double* d) {
  *d = clamped(p) ? 0.0 : -1.0 / p;
  return -std::log(clamp_prob(p));
}

// -ln(1 - p) and its derivative.
double neg_log1m(double p, double* d) {
  *d = clamped(p) ? 0.0 : 1.0 / (1.0 - p);
  return -std::log(1.0 - clamp_prob(p));
}

void check_batch(const Tensor& probs,
                 std::span<const ConceptAnnotation> annotations, int heads) {
  if (probs.n() == 0) throw ArgumentError("empty batch");
  if (static_cast<int>(annotations.size()) != probs.n()) {
    throw ArgumentError("annotation count " +
                        std::to_string(annotations.size()) +
                        " does not match batch size " +
                        std::to_string(probs.n()));
  }
  if (heads != probs.c()) {
    throw ArgumentError("loss config has " + std::to_string(heads) +
                        " heads, maps have " + std::to_string(probs.c()));
  }
}

}  // namespace

bool ConceptAnnotation::has(int concept_id) const {
  return std::find(concepts.begin(), concepts.end(), concept_id) != concepts.end();
}

DiscLossConfig DiscLossConfig::uniform(int heads, std::optional<double> min_ar,
                                       std::optional<double> max_ar,
                                       std::optional<double> iar) {
  DiscLossConfig cfg;
  cfg.heads.assign(heads, HeadLossConfig{min_ar, max_ar, iar});
  return cfg;
}

void DiscLossConfig::validate() const {
  auto in_range = [](const std::optional<double>& r) {
    return !r || (*r > 0.0 && *r <= 1.0);
  };
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const HeadLossConfig& h = heads[i];
    if (!in_range(h.min_ar) || !in_range(h.max_ar) || !in_range(h.iar)) {
      throw ConfigError("head " + std::to_string(i) +
                        ": ratios must lie in (0, 1]");
    }
    if (h.min_ar && h.max_ar && *h.min_ar > *h.max_ar) {
      throw ConfigError("head " + std::to_string(i) + ": min_ar > max_ar");
    }
  }
  if (!(concordance_t > 0.0 && concordance_t < 1.0)) {
    throw ConfigError("concordance threshold must lie in (0, 1)");
  }
}

int ratio_count(double ratio, int count) {
  const double v = ratio * count;
  const int k = static_cast<int>(std::ceil(v - 1e-9 * std::max(1.0, v)));
  return std::clamp(k, 0, count);
}

std::vector<int> topk_pixels(std::span<const double> values, int k, Rank dir) {
  const int n = static_cast<int>(values.size());
  if (k < 0 || k > n) {
    throw ArgumentError("k = " + std::to_string(k) + " outside [0, " +
                        std::to_string(n) + "]");
  }
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto before = [&](int a, int b) {
    if (values[a] != values[b]) {
      return dir == Rank::kHighest ? values[a] > values[b] : values[a] < values[b];
    }
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), before);
  idx.resize(k);
  return idx;
}

LossValue concept_discrimination_loss(
    const Tensor& probs, const Tensor& selector_probs,
    std::span<const ConceptAnnotation> annotations, const DiscLossConfig& cfg) {
  check_batch(probs, annotations, static_cast<int>(cfg.heads.size()));
  const Tensor& rank_on = selector_probs.empty() ? probs : selector_probs;
  if (!rank_on.same_shape(probs)) {
    throw ArgumentError("selector maps " + rank_on.shape_str() +
                        " do not match concept maps " + probs.shape_str());
  }
  const int N = probs.n();
  const int hw = probs.h() * probs.w();
  LossValue out{0.0, Tensor::like(probs)};
  for (int c = 0; c < probs.c(); ++c) {
    const HeadLossConfig& hc = cfg.heads[c];
    int n_pos = 0;
    for (int s = 0; s < N; ++s) n_pos += annotations[s].has(c) ? 1 : 0;
    const int n_neg = N - n_pos;
    const int k1 = hc.min_ar ? ratio_count(*hc.min_ar, hw) : 0;
    const int k2 = hc.max_ar ? ratio_count(1.0 - *hc.max_ar, hw) : 0;
    const int k3 = hc.iar ? ratio_count(*hc.iar, hw) : 0;
    for (int s = 0; s < N; ++s) {
      const std::span<const double> sel(rank_on.plane(s, c), hw);
      const double* p = probs.plane(s, c);
      double* g = out.grad.plane(s, c);
      double d = 0.0;
      if (annotations[s].has(c)) {
        if (k1 > 0) {
          const double scale = 2.0 / (static_cast<double>(k1) * n_pos);
          for (int i : topk_pixels(sel, k1, Rank::kHighest)) {
            out.value += scale * neg_log(p[i], &d);
            g[i] += scale * d;
          }
        }
        if (k2 > 0) {
          const double scale = 1.0 / (static_cast<double>(k2) * n_pos);
          for (int i : topk_pixels(sel, k2, Rank::kLowest)) {
            out.value += scale * neg_log1m(p[i], &d);
            g[i] += scale * d;
          }
        }
      } else if (k3 > 0) {
        const double scale = 1.0 / (static_cast<double>(k3) * n_neg);
        for (int i : topk_pixels(sel, k3, Rank::kHighest)) {
          out.value += scale * neg_log1m(p[i], &d);
          g[i] += scale * d;
        }
      }
    }
  }
  return out;
}

LossValue discriminative_selector_loss(
    const Tensor& selector_probs, std::span<const ConceptAnnotation> annotations,
    const DiscLossConfig& cfg) {
  check_batch(selector_probs, annotations, static_cast<int>(cfg.heads.size()));
  const int N = selector_probs.n();
  const int hw = selector_probs.h() * selector_probs.w();
  LossValue out{0.0, Tensor::like(selector_probs)};
  for (int c = 0; c < selector_probs.c(); ++c) {
    const HeadLossConfig& hc = cfg.heads[c];
    int n_pos = 0;
    for (int s = 0; s < N; ++s) n_pos += annotations[s].has(c) ? 1 : 0;
    const int n_neg = N - n_pos;
    for (int s = 0; s < N; ++s) {
      const bool pos = annotations[s].has(c);
      if (pos && !hc.min_ar) continue;
      if (!pos && !hc.iar) continue;
      const double scale =
          1.0 / (static_cast<double>(hw) * (pos ? n_pos : n_neg));
      const double* q = selector_probs.plane(s, c);
      double* g = out.grad.plane(s, c);
      double d = 0.0;
      for (int i = 0; i < hw; ++i) {
        out.value += scale * (pos ? neg_log(q[i], &d) : neg_log1m(q[i], &d));
        g[i] += scale * d;
      }
    }
  }
  return out;
}

Tensor upsample_nearest(const Tensor& t, int H, int W) {
  Tensor out(t.n(), t.c(), H, W);
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      const double* src = t.plane(n, c);
      double* dst = out.plane(n, c);
      for (int i = 0; i < H; ++i) {
        const int si = i * t.h() / H;
        for (int j = 0; j < W; ++j) dst[i * W + j] = src[si * t.w() + j * t.w() / W];
      }
    }
  }
  return out;
}

ConcordanceValue concordance_loss(const Tensor& shallow, const Tensor& deep,
                                  double t, bool one_sided) {
  if (!(t > 0.0 && t < 1.0)) {
    throw ArgumentError("concordance threshold must lie in (0, 1)");
  }
  if (shallow.n() != deep.n() || shallow.c() != deep.c()) {
    throw ArgumentError("concordance maps disagree on batch or heads");
  }
  if (deep.h() > shallow.h() || deep.w() > shallow.w()) {
    throw ArgumentError("deeper map must not be finer than the shallower one");
  }
  const int H = shallow.h();
  const int W = shallow.w();
  ConcordanceValue out{0.0, Tensor::like(shallow), Tensor::like(deep)};
  const int pairs = shallow.n() * shallow.c();
  for (int n = 0; n < shallow.n(); ++n) {
    for (int c = 0; c < shallow.c(); ++c) {
      const double* ps = shallow.plane(n, c);
      const double* pd = deep.plane(n, c);
      double* gs = out.grad_shallow.plane(n, c);
      double* gd = out.grad_deep.plane(n, c);
      std::vector<int> sel;
      std::vector<int> src;
      for (int i = 0; i < H; ++i) {
        const int si = i * deep.h() / H;
        for (int j = 0; j < W; ++j) {
          const int k = si * deep.w() + j * deep.w() / W;
          const double diff = ps[i * W + j] - pd[k];
          if (one_sided ? diff > t : std::abs(diff) > t) {
            sel.push_back(i * W + j);
            src.push_back(k);
          }
        }
      }
      if (sel.empty()) continue;
      const double scale = 1.0 / (2.0 * static_cast<double>(sel.size()) * pairs);
      for (std::size_t m = 0; m < sel.size(); ++m) {
        const double p = clamp_prob(ps[sel[m]]);
        const double q = clamp_prob(pd[src[m]]);
        const double lr = std::log(p / q);
        const double lr1 = std::log((1.0 - p) / (1.0 - q));
        out.value += scale * ((p - q) * lr + (q - p) * lr1);
        if (!clamped(ps[sel[m]])) {
          gs[sel[m]] += scale * (lr + (p - q) / p - lr1 - (q - p) / (1.0 - p));
        }
        if (!clamped(pd[src[m]])) {
          gd[src[m]] += scale * (-lr - (p - q) / q + lr1 + (q - p) / (1.0 - q));
        }
      }
    }
  }
  return out;
}

Box resize_box(const Box& b, int image_h, int image_w, int map_h, int map_w) {
  const double sy = static_cast<double>(map_h) / image_h;
  const double sx = static_cast<double>(map_w) / image_w;
  int x0 = static_cast<int>(std::floor(b.x * sx));
  int y0 = static_cast<int>(std::floor(b.y * sy));
  int x1 = static_cast<int>(std::ceil((b.x + b.w) * sx - 1e-9));
  int y1 = static_cast<int>(std::ceil((b.y + b.h) * sy - 1e-9));
  x0 = std::clamp(x0, 0, map_w - 1);
  y0 = std::clamp(y0, 0, map_h - 1);
  x1 = std::clamp(x1, 0, map_w);
  y1 = std::clamp(y1, 0, map_h);
  if (x1 <= x0 || y1 <= y0) {
    std::clog << "warning: box (" << b.x << "," << b.y << "," << b.w << ","
              << b.h << ") is degenerate at " << map_h << "x" << map_w
              << "; clamped to one pixel\n";
    x1 = std::max(x1, x0 + 1);
    y1 = std::max(y1, y0 + 1);
  }
  return {b.concept_id, x0, y0, x1 - x0, y1 - y0};
}

LossValue bbox_supervision_loss(const Tensor& probs,
                                std::span<const ConceptAnnotation> annotations,
                                int image_h, int image_w,
                                const DiscLossConfig& cfg) {
  check_batch(probs, annotations, static_cast<int>(cfg.heads.size()));
  const int N = probs.n();
  const int H = probs.h();
  const int W = probs.w();
  const int hw = H * W;
  LossValue out{0.0, Tensor::like(probs)};
  std::vector<char> inside(hw);
  for (int c = 0; c < probs.c(); ++c) {
    int n_pos = 0;
    for (int s = 0; s < N; ++s) n_pos += annotations[s].has(c) ? 1 : 0;
    const int n_neg = N - n_pos;
    const int k3 = cfg.heads[c].iar ? ratio_count(*cfg.heads[c].iar, hw) : 0;
    for (int s = 0; s < N; ++s) {
      const double* p = probs.plane(s, c);
      double* g = out.grad.plane(s, c);
      double d = 0.0;
      if (!annotations[s].has(c)) {
        if (k3 == 0) continue;
        const double scale = 1.0 / (static_cast<double>(k3) * n_neg);
        for (int i : topk_pixels(std::span<const double>(p, hw), k3,
                                 Rank::kHighest)) {
          out.value += scale * neg_log1m(p[i], &d);
          g[i] += scale * d;
        }
        continue;
      }
      std::fill(inside.begin(), inside.end(), 0);
      std::vector<char> active(hw, 0);
      for (const Box& raw : annotations[s].boxes) {
        if (raw.concept_id != c) continue;
        const Box b = resize_box(raw, image_h, image_w, H, W);
        std::vector<int> idx;
        std::vector<double> vals;
        for (int i = b.y; i < b.y + b.h; ++i) {
          for (int j = b.x; j < b.x + b.w; ++j) {
            inside[i * W + j] = 1;
            idx.push_back(i * W + j);
            vals.push_back(p[i * W + j]);
          }
        }
        const int half = (static_cast<int>(idx.size()) + 1) / 2;
        for (int r : topk_pixels(vals, half, Rank::kHighest)) active[idx[r]] = 1;
      }
      const int n_active = static_cast<int>(std::count(active.begin(), active.end(), 1));
      const int n_out = static_cast<int>(std::count(inside.begin(), inside.end(), 0));
      for (int i = 0; i < hw; ++i) {
        if (active[i]) {
          const double scale = 2.0 / (static_cast<double>(n_active) * n_pos);
          out.value += scale * neg_log(p[i], &d);
          g[i] += scale * d;
        } else if (!inside[i]) {
          const double scale = 1.0 / (static_cast<double>(n_out) * n_pos);
          out.value += scale * neg_log1m(p[i], &d);
          g[i] += scale * d;
        }
      }
    }
  }
  return out;
}

double combine_losses(double task, std::span<const double> per_lap,
                      std::span<const double> per_pair,
                      const LossWeights& weights) {
  if (!(weights.task >= 0.0 && weights.per_lap >= 0.0 &&
        weights.per_pair >= 0.0)) {
    throw ArgumentError("loss weights must be finite and non-negative");
  }
  double total = weights.task * task;
  for (double v : per_lap) total += weights.per_lap * v;
  for (double v : per_pair) total += weights.per_pair * v;
  return total;
}

LossValue softmax_cross_entropy(const Tensor& logits,
                                std::span<const int> labels) {
  const int N = logits.n();
  const int K = logits.c() * logits.h() * logits.w();
  if (N == 0 || static_cast<int>(labels.size()) != N) {
    throw ArgumentError("cross-entropy needs one label per sample");
  }
  LossValue out{0.0, Tensor::like(logits)};
  for (int n = 0; n < N; ++n) {
    const double* z = logits.sample(n);
    double* g = out.grad.sample(n);
    const double m = *std::max_element(z, z + K);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += std::exp(z[k] - m);
    const int y = labels[n];
    if (y < 0 || y >= K) throw ArgumentError("label out of range");
    out.value += (std::log(sum) + m - z[y]) / N;
    for (int k = 0; k < K; ++k) {
      g[k] = (std::exp(z[k] - m) / sum - (k == y ? 1.0 : 0.0)) / N;
    }
  }
  return out;
}

}  // namespace lap
