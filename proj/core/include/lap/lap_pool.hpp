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

#ifndef LAP_LAP_POOL_HPP_
#define LAP_LAP_POOL_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lap/tensor.hpp"

namespace lap {

/// Sliding-window geometry. Output (i', j') reads the window whose top-left
/// corner is (i' * stride_h - padding, j' * stride_w - padding).
struct KernelSpec {
  int kernel_h = 2;
  int kernel_w = 2;
  int stride_h = 2;
  int stride_w = 2;
  int padding = 0;

  static KernelSpec square(int kernel, int stride, int padding = 0) {
    return {kernel, kernel, stride, stride, padding};
  }

  /// Throws GeometryError on non-positive sizes or negative padding.
  void validate() const;
  /// floor((size + 2 * pad - kernel) / stride) + 1 along each axis; throws
  /// GeometryError when the kernel does not fit the padded input.
  int out_h(int h) const;
  int out_w(int w) const;
  bool operator==(const KernelSpec&) const = default;
};

enum class Aggregation { kMax, kSum, kLinear };

const char* to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

/**
 * @brief Pixel-wise concept scorer: a stack of 1x1 convolutions mapping a
 * C-dim pixel feature to one logit per concept head.
 *
 * With `hidden == 0` it is a single C -> heads convolution, otherwise
 * C -> hidden -> ReLU -> heads.
 */
class ConceptScorer {
 public:
  struct Cache {
    Tensor hidden_pre;  // (N, hidden, H, W), empty when hidden == 0
    Tensor hidden_act;
  };

  ConceptScorer() = default;
  ConceptScorer(int in_channels, int heads, int hidden = 0);

  int in_channels() const { return in_channels_; }
  int heads() const { return heads_; }
  int hidden() const { return hidden_; }

  /// PyTorch-style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init.
  void init(std::mt19937_64& rng);
  void zero();

  Tensor logits(const Tensor& x, Cache* cache) const;
  /// Accumulates parameter gradients; adds the input gradient to `dx` when
  /// it is non-null.
  void backward(const Tensor& x, const Cache& cache, const Tensor& dlogits,
                Tensor* dx);

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

 private:
  int in_channels_ = 0;
  int heads_ = 0;
  int hidden_ = 0;
  std::vector<Param> params_;
};

/// Everything that turns features into normalized window weights.
struct ScoringParams {
  ConceptScorer scorer;
  Aggregation aggregation = Aggregation::kMax;
  Param agg_weight;  // (1, heads, 1, 1); used by kLinear only
  Param agg_bias;    // (1, 1, 1, 1)
  Param alpha;       // (1, 1, 1, 1); stored unconstrained, squared in use
  double epsilon = 1e-4;

  ScoringParams() = default;
  ScoringParams(int in_channels, int heads, int hidden, Aggregation agg,
                double alpha_init = 4.0, double eps = 1e-4);

  double alpha_value() const { return alpha.value[0]; }
  int heads() const { return scorer.heads(); }
  /// Trainable arrays in a stable order: scorer, aggregation, alpha.
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
};

/**
 * Per-concept importance probabilities (N, heads, H, W) together with the
 * aggregated score map (N, 1, H, W) that drives the pooling weights.
 */
struct ConceptMaps {
  Tensor per_concept;
  Tensor aggregated;
};

struct ScoreCache {
  ConceptScorer::Cache scorer;
};

/// sigmoid(S_C(x)) per head, then the configured aggregation.
ConceptMaps score_pixels(const Tensor& x, const ScoringParams& params,
                         ScoreCache* cache = nullptr);

/// Backward of score_pixels. Either upstream gradient may be empty.
/// Parameter gradients accumulate into `params`; the input gradient is added
/// into `dx` when non-null.
void score_pixels_backward(const Tensor& x, ScoringParams& params,
                           const ScoreCache& cache, const ConceptMaps& maps,
                           const Tensor& d_per_concept,
                           const Tensor& d_aggregated, Tensor* dx);

/// exp(-alpha^2 (max(v) - v)^2) * v + eps, with the max over `v` only.
std::vector<double> normalize_window(std::span<const double> v, double alpha,
                                     double epsilon);

/// Weighted average of each window with weights normalize_window(scores).
/// `scores` is (N, 1, H, W); positions in the padding read feature 0 and
/// score 0, i.e. weight epsilon.
Tensor lap_pool(const Tensor& x, const Tensor& scores, const KernelSpec& kernel,
                double alpha, double epsilon);

struct LapPoolGrads {
  Tensor dx;
  Tensor dscores;
  double dalpha = 0.0;
};

LapPoolGrads lap_pool_backward(const Tensor& x, const Tensor& scores,
                               const KernelSpec& kernel, double alpha,
                               double epsilon, const Tensor& dout);

/// Adaptive variant: output cell (i, j) reduces rows
/// [floor(i*H/out_h), ceil((i+1)*H/out_h)) and the analogous columns.
Tensor adaptive_lap_pool(const Tensor& x, const Tensor& scores, int out_h,
                         int out_w, double alpha, double epsilon);
LapPoolGrads adaptive_lap_pool_backward(const Tensor& x, const Tensor& scores,
                                        int out_h, int out_w, double alpha,
                                        double epsilon, const Tensor& dout);

struct LapResult {
  Tensor out;
  ConceptMaps maps;
};

/// score_pixels followed by lap_pool on the aggregated map.
LapResult lap_forward(const Tensor& x, const KernelSpec& kernel,
                      const ScoringParams& params,
                      ScoreCache* cache = nullptr);
LapResult adaptive_lap(const Tensor& x, int out_h, int out_w,
                       const ScoringParams& params,
                       ScoreCache* cache = nullptr);

/// Gradients of lap_forward / adaptive_lap. `d_per_concept` carries any
/// direct loss gradient on the concept maps and may be empty. Parameter
/// gradients accumulate into `params`; returns the input gradient.
Tensor lap_forward_backward(const Tensor& x, const KernelSpec& kernel,
                            ScoringParams& params, const ScoreCache& cache,
                            const LapResult& fwd, const Tensor& dout,
                            const Tensor& d_per_concept);
Tensor adaptive_lap_backward(const Tensor& x, int out_h, int out_w,
                             ScoringParams& params, const ScoreCache& cache,
                             const LapResult& fwd, const Tensor& dout,
                             const Tensor& d_per_concept);

}  // namespace lap

#endif  // LAP_LAP_POOL_HPP_
