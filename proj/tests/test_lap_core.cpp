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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "lap/errors.hpp"
#include "lap/lap_pool.hpp"
#include "lap/layers.hpp"
#include "support/test_util.hpp"

namespace lap {
namespace {

using testing::dot;
using testing::fd_compare;
using testing::random_tensor;
using testing::sigmoid;

constexpr double kEps = 1e-4;

// Scalar reference: weighted average of one window, built straight from the
// normalization formula without sharing code with the library.
Tensor reference_pool(const Tensor& x, const Tensor& s, const KernelSpec& k,
                      double alpha) {
  const int oh = (x.h() + 2 * k.padding - k.kernel_h) / k.stride_h + 1;
  const int ow = (x.w() + 2 * k.padding - k.kernel_w) / k.stride_w + 1;
  Tensor out(x.n(), x.c(), oh, ow);
  for (int n = 0; n < x.n(); ++n) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        std::vector<double> v, w;
        std::vector<std::pair<int, int>> pos;
        for (int a = 0; a < k.kernel_h; ++a) {
          for (int b = 0; b < k.kernel_w; ++b) {
            const int y = i * k.stride_h - k.padding + a;
            const int xx = j * k.stride_w - k.padding + b;
            const bool inside = y >= 0 && y < x.h() && xx >= 0 && xx < x.w();
            v.push_back(inside ? s.at(n, 0, y, xx) : 0.0);
            pos.emplace_back(inside ? y : -1, xx);
          }
        }
        double m = v[0];
        for (double q : v) m = std::max(m, q);
        double total = 0.0;
        for (double q : v) {
          w.push_back(std::exp(-alpha * alpha * (m - q) * (m - q)) * q + kEps);
          total += w.back();
        }
        for (int c = 0; c < x.c(); ++c) {
          double acc = 0.0;
          for (std::size_t t = 0; t < v.size(); ++t) {
            if (pos[t].first >= 0) acc += w[t] * x.at(n, c, pos[t].first, pos[t].second);
          }
          out.at(n, c, i, j) = acc / total;
        }
      }
    }
  }
  return out;
}

Tensor avg_pool(const Tensor& x, const KernelSpec& k) {
  Pool2d p("p", Pool2d::Mode::kAvg, k.kernel_h, k.stride_h, k.padding);
  return p.forward(x);
}

ScoringParams random_params(int in, int heads, int hidden, Aggregation agg,
                            std::uint64_t seed) {
  ScoringParams p(in, heads, hidden, agg);
  std::mt19937_64 rng(seed);
  p.scorer.init(rng);
  return p;
}

// ------------------------------------------------------------ score_pixels

TEST(ScorePixels, ZeroScorerGivesOneHalf) {
  std::mt19937_64 rng(1);
  ScoringParams p(5, 3, 0, Aggregation::kSum);
  p.scorer.zero();
  const ConceptMaps m = score_pixels(random_tensor(2, 5, 4, 3, rng), p);
  for (double v : m.per_concept.values()) EXPECT_EQ(v, 0.5);
}

TEST(ScorePixels, SingleHeadMaxIsIdentity) {
  std::mt19937_64 rng(2);
  const ScoringParams p = random_params(4, 1, 0, Aggregation::kMax, 3);
  const ConceptMaps m = score_pixels(random_tensor(2, 4, 5, 5, rng), p);
  ASSERT_EQ(m.aggregated.size(), m.per_concept.size());
  for (std::size_t i = 0; i < m.aggregated.size(); ++i) {
    EXPECT_EQ(m.aggregated[i], m.per_concept[i]);
  }
}

TEST(ScorePixels, SumMatchesPerPixelReference) {
  std::mt19937_64 rng(3);
  const ScoringParams p = random_params(8, 3, 0, Aggregation::kSum, 4);
  const Tensor x = random_tensor(1, 8, 4, 4, rng);
  const ConceptMaps m = score_pixels(x, p);
  const Tensor& w = p.scorer.params()[0].value;
  const Tensor& b = p.scorer.params()[1].value;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double sum = 0.0;
      for (int h = 0; h < 3; ++h) {
        double z = b[h];
        for (int c = 0; c < 8; ++c) z += w.at(h, c, 0, 0) * x.at(0, c, i, j);
        const double prob = sigmoid(z);
        EXPECT_NEAR(m.per_concept.at(0, h, i, j), prob, 1e-14);
        sum += prob;
      }
      EXPECT_NEAR(m.aggregated.at(0, 0, i, j), sum, 1e-13);
    }
  }
}

TEST(ScorePixels, LinearAggregationStaysInUnitInterval) {
  std::mt19937_64 rng(4);
  ScoringParams p = random_params(3, 4, 2, Aggregation::kLinear, 5);
  p.agg_weight.value.fill(3.0);
  const ConceptMaps m = score_pixels(random_tensor(2, 3, 5, 5, rng, -3, 3), p);
  for (double v : m.aggregated.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(ScorePixels, ProbabilitiesStrictlyInsideUnitInterval) {
  std::mt19937_64 rng(5);
  const ScoringParams p = random_params(6, 2, 4, Aggregation::kMax, 6);
  const ConceptMaps m = score_pixels(random_tensor(3, 6, 7, 7, rng), p);
  for (double v : m.per_concept.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(ScorePixels, ChannelMismatchIsConfigError) {
  std::mt19937_64 rng(6);
  ScoringParams p(4, 1, 0, Aggregation::kMax);
  EXPECT_THROW(score_pixels(random_tensor(1, 3, 2, 2, rng), p), ConfigError);
}

TEST(ScorePixels, NonFiniteInputIsNumericError) {
  ScoringParams p(1, 1, 0, Aggregation::kMax);
  Tensor x(1, 1, 2, 2);
  x[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(score_pixels(x, p), NumericError);
}

// -------------------------------------------------------- normalize_window

TEST(NormalizeWindow, ZeroAlphaAddsEpsilonExactly) {
  const std::vector<double> v{0.1, 0.7, 0.35, 0.99};
  const std::vector<double> out = normalize_window(v, 0.0, kEps);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(out[i], v[i] + kEps);
}

TEST(NormalizeWindow, UniformWindowIsShiftedByEpsilon) {
  const std::vector<double> v(9, 0.42);
  for (double v_out : normalize_window(v, 7.0, kEps)) EXPECT_EQ(v_out, 0.42 + kEps);
}

TEST(NormalizeWindow, SharpAlphaSuppressesNonMaxima) {
  const std::vector<double> out = normalize_window(std::vector<double>{0.9, 0.1}, 1000.0, kEps);
  EXPECT_DOUBLE_EQ(out[0], 0.9 + kEps);
  EXPECT_NEAR(out[1], kEps, 1e-300);
}

TEST(NormalizeWindow, WeightsBoundedBelowAndMaximumDominates) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(6);
    for (double& q : v) q = u(rng);
    const double alpha = 10.0 * u(rng);
    const std::vector<double> out = normalize_window(v, alpha, kEps);
    const auto top = std::max_element(v.begin(), v.end()) - v.begin();
    EXPECT_EQ(out[top], v[top] + kEps);
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_GE(out[i], kEps);
      EXPECT_LE(out[i], out[top]);
    }
  }
}

// ----------------------------------------------------------------- lap_pool

TEST(LapPool, ConstantScoresReduceToAveragePooling) {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor(2, 3, 8, 6, rng);
  for (const KernelSpec& k : {KernelSpec::square(2, 2), KernelSpec::square(3, 1),
                              KernelSpec::square(3, 2)}) {
    const Tensor s(2, 1, 8, 6, 0.37);
    const Tensor a = lap_pool(x, s, k, 4.0, kEps);
    const Tensor b = avg_pool(x, k);
    ASSERT_TRUE(a.same_shape(b));
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_LE(std::abs(a[i] - b[i]), 1e-6 * std::max(1.0, std::abs(b[i])));
    }
  }
}

TEST(LapPool, SharpAlphaSelectsArgmaxFeatures) {
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor(1, 4, 2, 2, rng);
  Tensor s(1, 1, 2, 2, 0.05);
  s.at(0, 0, 1, 0) = 0.95;
  const Tensor out = lap_pool(x, s, KernelSpec::square(2, 2), 1000.0, kEps);
  for (int c = 0; c < 4; ++c) {
    // Three off-argmax weights of eps against 0.95 + eps, features in [-1, 1].
    EXPECT_NEAR(out.at(0, c, 0, 0), x.at(0, c, 1, 0), 3 * kEps * 2.0 / 0.95);
  }
}

TEST(LapPool, TwoByTwoWindowMatchesScalarLoop) {
  Tensor x(1, 1, 2, 2);
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  x[3] = 4;
  Tensor s(1, 1, 2, 2);
  s[0] = 0.2;
  s[1] = 0.9;
  s[2] = 0.6;
  s[3] = 0.4;
  const double alpha = 1.5;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double w = std::exp(-alpha * alpha * (0.9 - s[i]) * (0.9 - s[i])) * s[i] + kEps;
    num += w * x[i];
    den += w;
  }
  const Tensor out = lap_pool(x, s, KernelSpec::square(2, 2), alpha, kEps);
  EXPECT_NEAR(out[0], num / den, 1e-14);
}

TEST(LapPool, MatchesReferenceWithOverlapAndPadding) {
  std::mt19937_64 rng(10);
  const Tensor x = random_tensor(2, 3, 7, 9, rng);
  const Tensor s = random_tensor(2, 1, 7, 9, rng, 0.01, 0.99);
  for (const KernelSpec& k : {KernelSpec::square(3, 2, 1), KernelSpec{2, 3, 1, 2, 0},
                              KernelSpec::square(4, 3, 2)}) {
    const Tensor a = lap_pool(x, s, k, 3.0, kEps);
    const Tensor b = reference_pool(x, s, k, 3.0);
    ASSERT_TRUE(a.same_shape(b));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(LapPool, OutputIsConvexCombinationOfWindow) {
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor(2, 4, 9, 9, rng);
  const Tensor s = random_tensor(2, 1, 9, 9, rng, 0.01, 0.99);
  const KernelSpec k = KernelSpec::square(3, 2);
  const Tensor out = lap_pool(x, s, k, 5.0, kEps);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 4; ++c) {
      for (int i = 0; i < out.h(); ++i) {
        for (int j = 0; j < out.w(); ++j) {
          double lo = 1e300, hi = -1e300;
          for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
              const double v = x.at(n, c, 2 * i + a, 2 * j + b);
              lo = std::min(lo, v);
              hi = std::max(hi, v);
            }
          }
          EXPECT_GE(out.at(n, c, i, j), lo - 1e-12);
          EXPECT_LE(out.at(n, c, i, j), hi + 1e-12);
        }
      }
    }
  }
}

TEST(LapPool, ShapeContract) {
  for (int h : {4, 5, 9, 16}) {
    for (int kk : {1, 2, 3}) {
      for (int st : {1, 2, 3}) {
        for (int pad : {0, 1}) {
          if (pad >= kk) continue;
          const KernelSpec k = KernelSpec::square(kk, st, pad);
          const Tensor x(1, 2, h, h + 1);
          const Tensor s(1, 1, h, h + 1, 0.5);
          const Tensor out = lap_pool(x, s, k, 4.0, kEps);
          EXPECT_EQ(out.h(), (h + 2 * pad - kk) / st + 1);
          EXPECT_EQ(out.w(), (h + 1 + 2 * pad - kk) / st + 1);
        }
      }
    }
  }
}

TEST(LapPool, KernelLargerThanInputIsGeometryError) {
  const Tensor x(1, 1, 2, 2);
  const Tensor s(1, 1, 2, 2, 0.5);
  EXPECT_THROW(lap_pool(x, s, KernelSpec::square(3, 1), 4.0, kEps), GeometryError);
  EXPECT_THROW(KernelSpec::square(0, 1).validate(), GeometryError);
  EXPECT_THROW((KernelSpec{2, 2, 0, 1, 0}).validate(), GeometryError);
}

// -------------------------------------------------------------- lap_forward

TEST(LapForward, ZeroScorerIsAveragePooling) {
  std::mt19937_64 rng(12);
  ScoringParams p(3, 2, 0, Aggregation::kMax);
  p.scorer.zero();
  const Tensor x = random_tensor(2, 3, 6, 6, rng);
  const KernelSpec k = KernelSpec::square(2, 2);
  const LapResult r = lap_forward(x, k, p);
  const Tensor b = avg_pool(x, k);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(r.out[i], b[i], 1e-12);
}

TEST(LapForward, SinglePixelIsIdentity) {
  std::mt19937_64 rng(13);
  const ScoringParams p = random_params(5, 2, 0, Aggregation::kSum, 14);
  const Tensor x = random_tensor(3, 5, 1, 1, rng);
  const LapResult r = lap_forward(x, KernelSpec::square(1, 1), p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(r.out[i], x[i], 1e-15);
}

struct GradCase {
  const char* name;
  int heads;
  int hidden;
  Aggregation agg;
  KernelSpec kernel;
};

class LapForwardGrad : public ::testing::TestWithParam<GradCase> {};

TEST_P(LapForwardGrad, MatchesFiniteDifferences) {
  const GradCase gc = GetParam();
  std::mt19937_64 rng(15);
  Tensor x = random_tensor(2, 8, 6, 6, rng);
  ScoringParams p = random_params(8, gc.heads, gc.hidden, gc.agg, 16);
  p.alpha.value[0] = 2.5;
  if (gc.agg == Aggregation::kLinear) {
    p.agg_weight.value = random_tensor(1, gc.heads, 1, 1, rng);
    p.agg_bias.value[0] = 0.1;
  }
  const LapResult probe = lap_forward(x, gc.kernel, p);
  const Tensor r_out = random_tensor(2, 8, probe.out.h(), probe.out.w(), rng);
  const Tensor r_maps = random_tensor(2, gc.heads, 6, 6, rng);
  auto loss = [&] {
    const LapResult r = lap_forward(x, gc.kernel, p);
    return dot(r.out, r_out) + dot(r.maps.per_concept, r_maps);
  };
  ScoreCache cache;
  const LapResult fwd = lap_forward(x, gc.kernel, p, &cache);
  for (Param* q : p.params()) q->zero_grad();
  const Tensor dx = lap_forward_backward(x, gc.kernel, p, cache, fwd, r_out, r_maps);

  // Small step so ReLU and max kinks stay outside the central difference.
  const auto fx = fd_compare(x.values(), dx.values(), loss, 1e-6);
  EXPECT_LE(fx.worst, testing::kFdRelTol)
      << "x[" << fx.worst_index << "] analytic " << fx.analytic << " numeric " << fx.numeric;
  for (Param* q : p.params()) {
    const Tensor g = q->grad;
    const auto fp = fd_compare(q->value.values(), g.values(), loss, 1e-6);
    EXPECT_LE(fp.worst, testing::kFdRelTol)
        << q->name << "[" << fp.worst_index << "] analytic " << fp.analytic << " numeric "
        << fp.numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Cases, LapForwardGrad,
    ::testing::Values(GradCase{"sum", 3, 0, Aggregation::kSum, KernelSpec::square(2, 2)},
                      GradCase{"max", 2, 0, Aggregation::kMax, KernelSpec::square(2, 2)},
                      GradCase{"hidden", 2, 4, Aggregation::kSum, KernelSpec::square(3, 2, 1)},
                      GradCase{"linear", 3, 0, Aggregation::kLinear, KernelSpec::square(3, 1)}),
    [](const ::testing::TestParamInfo<GradCase>& i) { return i.param.name; });

// ------------------------------------------------------------- adaptive_lap

TEST(AdaptiveLap, GlobalConstantScoresAverage) {
  std::mt19937_64 rng(17);
  ScoringParams p(3, 1, 0, Aggregation::kMax);
  p.scorer.zero();
  const Tensor x = random_tensor(2, 3, 5, 7, rng);
  const LapResult r = adaptive_lap(x, 1, 1, p);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      double m = 0.0;
      for (int k = 0; k < 35; ++k) m += x.plane(n, c)[k];
      EXPECT_NEAR(r.out.at(n, c, 0, 0), m / 35.0, 1e-12);
    }
  }
}

TEST(AdaptiveLap, GlobalSharpScoreSelectsPixel) {
  std::mt19937_64 rng(18);
  const Tensor x = random_tensor(1, 2, 4, 4, rng);
  Tensor s(1, 1, 4, 4, 0.01);
  s.at(0, 0, 2, 3) = 0.999;
  const Tensor out = adaptive_lap_pool(x, s, 1, 1, 1000.0, kEps);
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(out.at(0, c, 0, 0), x.at(0, c, 2, 3), 20 * kEps);
}

TEST(AdaptiveLap, FullResolutionIsIdentity) {
  std::mt19937_64 rng(19);
  const ScoringParams p = random_params(3, 2, 0, Aggregation::kMax, 20);
  const Tensor x = random_tensor(2, 3, 4, 5, rng);
  const LapResult r = adaptive_lap(x, 4, 5, p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(r.out[i], x[i], 1e-15);
}

TEST(AdaptiveLap, UnevenRegionsMatchAdaptiveAveragePooling) {
  std::mt19937_64 rng(21);
  const Tensor x = random_tensor(1, 2, 5, 7, rng);
  const Tensor s(1, 1, 5, 7, 0.3);
  const Tensor a = adaptive_lap_pool(x, s, 2, 3, 4.0, kEps);
  AdaptiveAvgPool2d ref("r", 2, 3);
  const Tensor b = ref.forward(x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(AdaptiveLap, OutputLargerThanInputIsGeometryError) {
  const Tensor x(1, 1, 3, 3);
  const Tensor s(1, 1, 3, 3, 0.5);
  EXPECT_THROW(adaptive_lap_pool(x, s, 4, 1, 4.0, kEps), GeometryError);
}

TEST(AdaptiveLap, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(22);
  Tensor x = random_tensor(2, 3, 5, 7, rng);
  ScoringParams p = random_params(3, 2, 0, Aggregation::kSum, 23);
  const Tensor r_out = random_tensor(2, 3, 2, 3, rng);
  auto loss = [&] { return dot(adaptive_lap(x, 2, 3, p).out, r_out); };
  ScoreCache cache;
  const LapResult fwd = adaptive_lap(x, 2, 3, p, &cache);
  for (Param* q : p.params()) q->zero_grad();
  const Tensor dx = adaptive_lap_backward(x, 2, 3, p, cache, fwd, r_out, Tensor());
  EXPECT_LE(fd_compare(x.values(), dx.values(), loss).worst, testing::kFdRelTol);
  for (Param* q : p.params()) {
    const Tensor g = q->grad;
    EXPECT_LE(fd_compare(q->value.values(), g.values(), loss).worst, testing::kFdRelTol)
        << q->name;
  }
}

}  // namespace
}  // namespace lap
