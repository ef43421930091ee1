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

#include "lap/lap_pool.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "lap/errors.hpp"

namespace lap {
namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// y[n] = W x[n] + b for a 1x1 convolution with W (out, in, 1, 1).
Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int out = w.n();
  const int in = w.c();
  const int hw = x.h() * x.w();
  Tensor y(x.n(), out, x.h(), x.w());
  ConstMatMap wm(w.data(), out, in);
  for (int n = 0; n < x.n(); ++n) {
    ConstMatMap xm(x.sample(n), in, hw);
    MatMap ym(y.sample(n), out, hw);
    ym.noalias() = wm * xm;
    for (int o = 0; o < out; ++o) ym.row(o).array() += b[o];
  }
  return y;
}

// Accumulates dW, db and optionally dx for conv1x1.
void conv1x1_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                      Tensor& dw, Tensor& db, Tensor* dx) {
  const int out = w.n();
  const int in = w.c();
  const int hw = x.h() * x.w();
  ConstMatMap wm(w.data(), out, in);
  MatMap dwm(dw.data(), out, in);
  for (int n = 0; n < x.n(); ++n) {
    ConstMatMap xm(x.sample(n), in, hw);
    ConstMatMap dym(dy.sample(n), out, hw);
    dwm.noalias() += dym * xm.transpose();
    for (int o = 0; o < out; ++o) db[o] += dym.row(o).sum();
    if (dx != nullptr) {
      MatMap dxm(dx->sample(n), in, hw);
      dxm.noalias() += wm.transpose() * dym;
    }
  }
}

struct Range {
  int begin;
  int end;
};

std::vector<Range> kernel_ranges(int size, int kernel, int stride, int pad,
                                 int out) {
  std::vector<Range> r(out);
  for (int i = 0; i < out; ++i) {
    r[i].begin = i * stride - pad;
    r[i].end = r[i].begin + kernel;
  }
  return r;
}

std::vector<Range> adaptive_ranges(int size, int out) {
  std::vector<Range> r(out);
  for (int i = 0; i < out; ++i) {
    r[i].begin = (i * size) / out;
    r[i].end = ((i + 1) * size + out - 1) / out;
  }
  return r;
}

void check_pool_inputs(const Tensor& x, const Tensor& scores) {
  if (scores.n() != x.n() || scores.c() != 1 || scores.h() != x.h() ||
      scores.w() != x.w()) {
    throw GeometryError("score map " + scores.shape_str() +
                        " does not match features " + x.shape_str());
  }
}

// Shared forward over arbitrary separable window ranges. Out-of-image
// positions carry feature 0 and score 0.
Tensor pool_windows(const Tensor& x, const Tensor& scores,
                    const std::vector<Range>& rows,
                    const std::vector<Range>& cols, double alpha,
                    double epsilon) {
  const int C = x.c();
  const int H = x.h();
  const int W = x.w();
  const double a2 = alpha * alpha;
  Tensor out(x.n(), C, static_cast<int>(rows.size()),
             static_cast<int>(cols.size()));
  std::vector<double> v;
  std::vector<double> wt;
  for (int n = 0; n < x.n(); ++n) {
    const double* s = scores.plane(n, 0);
    for (std::size_t oi = 0; oi < rows.size(); ++oi) {
      for (std::size_t oj = 0; oj < cols.size(); ++oj) {
        const Range r = rows[oi];
        const Range c = cols[oj];
        v.clear();
        for (int i = r.begin; i < r.end; ++i) {
          for (int j = c.begin; j < c.end; ++j) {
            const bool inside = i >= 0 && i < H && j >= 0 && j < W;
            v.push_back(inside ? s[i * W + j] : 0.0);
          }
        }
        const double m = *std::max_element(v.begin(), v.end());
        wt.resize(v.size());
        double total = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
          const double d = m - v[k];
          wt[k] = std::exp(-a2 * d * d) * v[k] + epsilon;
          total += wt[k];
        }
        for (int ch = 0; ch < C; ++ch) {
          const double* xp = x.plane(n, ch);
          double acc = 0.0;
          std::size_t k = 0;
          for (int i = r.begin; i < r.end; ++i) {
            for (int j = c.begin; j < c.end; ++j, ++k) {
              if (i >= 0 && i < H && j >= 0 && j < W) {
                acc += wt[k] * xp[i * W + j];
              }
            }
          }
          out.at(n, ch, static_cast<int>(oi), static_cast<int>(oj)) =
              acc / total;
        }
      }
    }
  }
  return out;
}

LapPoolGrads pool_windows_backward(const Tensor& x, const Tensor& scores,
                                   const std::vector<Range>& rows,
                                   const std::vector<Range>& cols,
                                   double alpha, double epsilon,
                                   const Tensor& dout) {
  const int C = x.c();
  const int H = x.h();
  const int W = x.w();
  const double a2 = alpha * alpha;
  LapPoolGrads g{Tensor::like(x), Tensor::like(scores), 0.0};
  std::vector<double> v, gauss, wt, dw, o(C);
  for (int n = 0; n < x.n(); ++n) {
    const double* s = scores.plane(n, 0);
    double* ds = g.dscores.plane(n, 0);
    for (std::size_t oi = 0; oi < rows.size(); ++oi) {
      for (std::size_t oj = 0; oj < cols.size(); ++oj) {
        const Range r = rows[oi];
        const Range c = cols[oj];
        v.clear();
        for (int i = r.begin; i < r.end; ++i) {
          for (int j = c.begin; j < c.end; ++j) {
            const bool inside = i >= 0 && i < H && j >= 0 && j < W;
            v.push_back(inside ? s[i * W + j] : 0.0);
          }
        }
        const std::size_t K = v.size();
        const auto arg = static_cast<std::size_t>(
            std::max_element(v.begin(), v.end()) - v.begin());
        const double m = v[arg];
        gauss.resize(K);
        wt.resize(K);
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double d = m - v[k];
          gauss[k] = std::exp(-a2 * d * d);
          wt[k] = gauss[k] * v[k] + epsilon;
          total += wt[k];
        }
        for (int ch = 0; ch < C; ++ch) {
          const double* xp = x.plane(n, ch);
          double acc = 0.0;
          std::size_t k = 0;
          for (int i = r.begin; i < r.end; ++i) {
            for (int j = c.begin; j < c.end; ++j, ++k) {
              if (i >= 0 && i < H && j >= 0 && j < W) {
                acc += wt[k] * xp[i * W + j];
              }
            }
          }
          o[ch] = acc / total;
        }
        // dL/dw_k = sum_c dO_c (x_ck - O_c) / total
        dw.assign(K, 0.0);
        for (int ch = 0; ch < C; ++ch) {
          const double go =
              dout.at(n, ch, static_cast<int>(oi), static_cast<int>(oj));
          if (go == 0.0) continue;
          const double* xp = x.plane(n, ch);
          double* dxp = g.dx.plane(n, ch);
          std::size_t k = 0;
          for (int i = r.begin; i < r.end; ++i) {
            for (int j = c.begin; j < c.end; ++j, ++k) {
              const bool inside = i >= 0 && i < H && j >= 0 && j < W;
              const double xv = inside ? xp[i * W + j] : 0.0;
              dw[k] += go * (xv - o[ch]) / total;
              if (inside) dxp[i * W + j] += go * wt[k] / total;
            }
          }
        }
        double dm = 0.0;
        std::size_t k = 0;
        for (int i = r.begin; i < r.end; ++i) {
          for (int j = c.begin; j < c.end; ++j, ++k) {
            const double d = m - v[k];
            const double gv = gauss[k] * v[k];
            dm += dw[k] * gv * (-2.0 * a2 * d);
            g.dalpha += dw[k] * gv * (-2.0 * alpha * d * d);
            if (i >= 0 && i < H && j >= 0 && j < W) {
              ds[i * W + j] += dw[k] * gauss[k] * (1.0 + 2.0 * a2 * d * v[k]);
            }
          }
        }
        const int ai = r.begin + static_cast<int>(arg) / (c.end - c.begin);
        const int aj = c.begin + static_cast<int>(arg) % (c.end - c.begin);
        if (ai >= 0 && ai < H && aj >= 0 && aj < W) ds[ai * W + aj] += dm;
      }
    }
  }
  return g;
}

}  // namespace

void KernelSpec::validate() const {
  if (kernel_h < 1 || kernel_w < 1 || stride_h < 1 || stride_w < 1 ||
      padding < 0) {
    throw GeometryError("invalid kernel spec: kernel " +
                        std::to_string(kernel_h) + "x" +
                        std::to_string(kernel_w) + ", stride " +
                        std::to_string(stride_h) + "x" +
                        std::to_string(stride_w) + ", padding " +
                        std::to_string(padding));
  }
}

int KernelSpec::out_h(int h) const {
  validate();
  if (h + 2 * padding < kernel_h) {
    throw GeometryError("kernel height " + std::to_string(kernel_h) +
                        " exceeds padded input height " +
                        std::to_string(h + 2 * padding));
  }
  return (h + 2 * padding - kernel_h) / stride_h + 1;
}

int KernelSpec::out_w(int w) const {
  validate();
  if (w + 2 * padding < kernel_w) {
    throw GeometryError("kernel width " + std::to_string(kernel_w) +
                        " exceeds padded input width " +
                        std::to_string(w + 2 * padding));
  }
  return (w + 2 * padding - kernel_w) / stride_w + 1;
}

const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::kMax:
      return "max";
    case Aggregation::kSum:
      return "sum";
    case Aggregation::kLinear:
      return "linear";
  }
  return "?";
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "max") return Aggregation::kMax;
  if (s == "sum") return Aggregation::kSum;
  if (s == "linear") return Aggregation::kLinear;
  throw ConfigError("unknown aggregation '" + s + "' (expected max|sum|linear)");
}

ConceptScorer::ConceptScorer(int in_channels, int heads, int hidden)
    : in_channels_(in_channels), heads_(heads), hidden_(hidden) {
  if (in_channels < 1 || heads < 1 || hidden < 0) {
    throw ConfigError("concept scorer needs in_channels >= 1, heads >= 1, "
                      "hidden >= 0");
  }
  if (hidden_ > 0) {
    params_.emplace_back("w1", Tensor(hidden_, in_channels_, 1, 1));
    params_.emplace_back("b1", Tensor(hidden_, 1, 1, 1));
    params_.emplace_back("w2", Tensor(heads_, hidden_, 1, 1));
    params_.emplace_back("b2", Tensor(heads_, 1, 1, 1));
  } else {
    params_.emplace_back("w", Tensor(heads_, in_channels_, 1, 1));
    params_.emplace_back("b", Tensor(heads_, 1, 1, 1));
  }
}

void ConceptScorer::init(std::mt19937_64& rng) {
  for (std::size_t i = 0; i < params_.size(); i += 2) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(params_[i].value.c()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : params_[i].value.values()) v = dist(rng);
    for (double& v : params_[i + 1].value.values()) v = dist(rng);
  }
}

void ConceptScorer::zero() {
  for (Param& p : params_) p.value.fill(0.0);
}

Tensor ConceptScorer::logits(const Tensor& x, Cache* cache) const {
  if (x.c() != in_channels_) {
    throw ConfigError("concept scorer expects " + std::to_string(in_channels_) +
                      " channels, got " + std::to_string(x.c()));
  }
  if (hidden_ == 0) return conv1x1(x, params_[0].value, params_[1].value);
  Tensor pre = conv1x1(x, params_[0].value, params_[1].value);
  Tensor act = pre;
  for (double& v : act.values()) v = std::max(v, 0.0);
  Tensor out = conv1x1(act, params_[2].value, params_[3].value);
  if (cache != nullptr) {
    cache->hidden_pre = std::move(pre);
    cache->hidden_act = std::move(act);
  }
  return out;
}

void ConceptScorer::backward(const Tensor& x, const Cache& cache,
                             const Tensor& dlogits, Tensor* dx) {
  if (hidden_ == 0) {
    conv1x1_backward(x, params_[0].value, dlogits, params_[0].grad,
                     params_[1].grad, dx);
    return;
  }
  Tensor dact = Tensor::like(cache.hidden_act);
  conv1x1_backward(cache.hidden_act, params_[2].value, dlogits,
                   params_[2].grad, params_[3].grad, &dact);
  for (std::size_t i = 0; i < dact.size(); ++i) {
    if (cache.hidden_pre[i] <= 0.0) dact[i] = 0.0;
  }
  conv1x1_backward(x, params_[0].value, dact, params_[0].grad, params_[1].grad,
                   dx);
}

ScoringParams::ScoringParams(int in_channels, int heads, int hidden,
                             Aggregation agg, double alpha_init, double eps)
    : scorer(in_channels, heads, hidden),
      aggregation(agg),
      agg_weight("agg_weight", Tensor(1, heads, 1, 1, 1.0 / heads)),
      agg_bias("agg_bias", Tensor(1, 1, 1, 1)),
      alpha("alpha", Tensor(1, 1, 1, 1, alpha_init)),
      epsilon(eps) {
  if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
}

std::vector<Param*> ScoringParams::params() {
  std::vector<Param*> out;
  for (Param& p : scorer.params()) out.push_back(&p);
  if (aggregation == Aggregation::kLinear) {
    out.push_back(&agg_weight);
    out.push_back(&agg_bias);
  }
  out.push_back(&alpha);
  return out;
}

std::vector<const Param*> ScoringParams::params() const {
  std::vector<const Param*> out;
  for (const Param& p : scorer.params()) out.push_back(&p);
  if (aggregation == Aggregation::kLinear) {
    out.push_back(&agg_weight);
    out.push_back(&agg_bias);
  }
  out.push_back(&alpha);
  return out;
}

ConceptMaps score_pixels(const Tensor& x, const ScoringParams& params,
                         ScoreCache* cache) {
  if (!x.all_finite()) throw NumericError("non-finite activation in LAP input");
  ConceptMaps maps;
  maps.per_concept = params.scorer.logits(x, cache ? &cache->scorer : nullptr);
  for (double& v : maps.per_concept.values()) v = sigmoid(v);
  const int heads = params.heads();
  const int hw = x.h() * x.w();
  maps.aggregated = Tensor(x.n(), 1, x.h(), x.w());
  for (int n = 0; n < x.n(); ++n) {
    double* s = maps.aggregated.plane(n, 0);
    for (int k = 0; k < hw; ++k) {
      double acc = params.aggregation == Aggregation::kMax
                       ? -std::numeric_limits<double>::infinity()
                       : 0.0;
      for (int c = 0; c < heads; ++c) {
        const double p = maps.per_concept.plane(n, c)[k];
        switch (params.aggregation) {
          case Aggregation::kMax:
            acc = std::max(acc, p);
            break;
          case Aggregation::kSum:
            acc += p;
            break;
          case Aggregation::kLinear:
            acc += params.agg_weight.value[c] * p;
            break;
        }
      }
      if (params.aggregation == Aggregation::kLinear) {
        acc = sigmoid(acc + params.agg_bias.value[0]);
      }
      s[k] = acc;
    }
  }
  return maps;
}

void score_pixels_backward(const Tensor& x, ScoringParams& params,
                           const ScoreCache& cache, const ConceptMaps& maps,
                           const Tensor& d_per_concept,
                           const Tensor& d_aggregated, Tensor* dx) {
  const int heads = params.heads();
  const int hw = x.h() * x.w();
  Tensor dp = d_per_concept.empty() ? Tensor::like(maps.per_concept)
                                    : d_per_concept;
  if (!d_aggregated.empty()) {
    for (int n = 0; n < x.n(); ++n) {
      const double* ds = d_aggregated.plane(n, 0);
      const double* s = maps.aggregated.plane(n, 0);
      for (int k = 0; k < hw; ++k) {
        if (ds[k] == 0.0) continue;
        switch (params.aggregation) {
          case Aggregation::kMax: {
            int best = 0;
            for (int c = 1; c < heads; ++c) {
              if (maps.per_concept.plane(n, c)[k] >
                  maps.per_concept.plane(n, best)[k]) {
                best = c;
              }
            }
            dp.plane(n, best)[k] += ds[k];
            break;
          }
          case Aggregation::kSum:
            for (int c = 0; c < heads; ++c) dp.plane(n, c)[k] += ds[k];
            break;
          case Aggregation::kLinear: {
            const double dz = ds[k] * s[k] * (1.0 - s[k]);
            for (int c = 0; c < heads; ++c) {
              dp.plane(n, c)[k] += dz * params.agg_weight.value[c];
              params.agg_weight.grad[c] += dz * maps.per_concept.plane(n, c)[k];
            }
            params.agg_bias.grad[0] += dz;
            break;
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < dp.size(); ++i) {
    const double p = maps.per_concept[i];
    dp[i] *= p * (1.0 - p);
  }
  params.scorer.backward(x, cache.scorer, dp, dx);
}

std::vector<double> normalize_window(std::span<const double> v, double alpha,
                                     double epsilon) {
  std::vector<double> out(v.size());
  if (v.empty()) return out;
  const double m = *std::max_element(v.begin(), v.end());
  const double a2 = alpha * alpha;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double d = m - v[k];
    out[k] = std::exp(-a2 * d * d) * v[k] + epsilon;
  }
  return out;
}

Tensor lap_pool(const Tensor& x, const Tensor& scores, const KernelSpec& kernel,
                double alpha, double epsilon) {
  check_pool_inputs(x, scores);
  const int oh = kernel.out_h(x.h());
  const int ow = kernel.out_w(x.w());
  return pool_windows(
      x, scores,
      kernel_ranges(x.h(), kernel.kernel_h, kernel.stride_h, kernel.padding, oh),
      kernel_ranges(x.w(), kernel.kernel_w, kernel.stride_w, kernel.padding, ow),
      alpha, epsilon);
}

LapPoolGrads lap_pool_backward(const Tensor& x, const Tensor& scores,
                               const KernelSpec& kernel, double alpha,
                               double epsilon, const Tensor& dout) {
  check_pool_inputs(x, scores);
  const int oh = kernel.out_h(x.h());
  const int ow = kernel.out_w(x.w());
  return pool_windows_backward(
      x, scores,
      kernel_ranges(x.h(), kernel.kernel_h, kernel.stride_h, kernel.padding, oh),
      kernel_ranges(x.w(), kernel.kernel_w, kernel.stride_w, kernel.padding, ow),
      alpha, epsilon, dout);
}

namespace {
void check_adaptive(const Tensor& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1 || out_h > x.h() || out_w > x.w()) {
    throw GeometryError("adaptive output " + std::to_string(out_h) + "x" +
                        std::to_string(out_w) + " invalid for input " +
                        std::to_string(x.h()) + "x" + std::to_string(x.w()));
  }
}
}  // namespace

Tensor adaptive_lap_pool(const Tensor& x, const Tensor& scores, int out_h,
                         int out_w, double alpha, double epsilon) {
  check_pool_inputs(x, scores);
  check_adaptive(x, out_h, out_w);
  return pool_windows(x, scores, adaptive_ranges(x.h(), out_h),
                      adaptive_ranges(x.w(), out_w), alpha, epsilon);
}

LapPoolGrads adaptive_lap_pool_backward(const Tensor& x, const Tensor& scores,
                                        int out_h, int out_w, double alpha,
                                        double epsilon, const Tensor& dout) {
  check_pool_inputs(x, scores);
  check_adaptive(x, out_h, out_w);
  return pool_windows_backward(x, scores, adaptive_ranges(x.h(), out_h),
                               adaptive_ranges(x.w(), out_w), alpha, epsilon,
                               dout);
}

LapResult lap_forward(const Tensor& x, const KernelSpec& kernel,
                      const ScoringParams& params, ScoreCache* cache) {
  LapResult r;
  r.maps = score_pixels(x, params, cache);
  r.out = lap_pool(x, r.maps.aggregated, kernel, params.alpha_value(),
                   params.epsilon);
  return r;
}

LapResult adaptive_lap(const Tensor& x, int out_h, int out_w,
                       const ScoringParams& params, ScoreCache* cache) {
  check_adaptive(x, out_h, out_w);
  LapResult r;
  r.maps = score_pixels(x, params, cache);
  r.out = adaptive_lap_pool(x, r.maps.aggregated, out_h, out_w,
                            params.alpha_value(), params.epsilon);
  return r;
}

namespace {
Tensor finish_backward(const Tensor& x, ScoringParams& params,
                       const ScoreCache& cache, const LapResult& fwd,
                       LapPoolGrads g, const Tensor& d_per_concept) {
  params.alpha.grad[0] += g.dalpha;
  score_pixels_backward(x, params, cache, fwd.maps, d_per_concept, g.dscores,
                        &g.dx);
  return std::move(g.dx);
}
}  // namespace

Tensor lap_forward_backward(const Tensor& x, const KernelSpec& kernel,
                            ScoringParams& params, const ScoreCache& cache,
                            const LapResult& fwd, const Tensor& dout,
                            const Tensor& d_per_concept) {
  LapPoolGrads g = lap_pool_backward(x, fwd.maps.aggregated, kernel,
                                     params.alpha_value(), params.epsilon, dout);
  return finish_backward(x, params, cache, fwd, std::move(g), d_per_concept);
}

Tensor adaptive_lap_backward(const Tensor& x, int out_h, int out_w,
                             ScoringParams& params, const ScoreCache& cache,
                             const LapResult& fwd, const Tensor& dout,
                             const Tensor& d_per_concept) {
  LapPoolGrads g =
      adaptive_lap_pool_backward(x, fwd.maps.aggregated, out_h, out_w,
                                 params.alpha_value(), params.epsilon, dout);
  return finish_backward(x, params, cache, fwd, std::move(g), d_per_concept);
}

}  // namespace lap
