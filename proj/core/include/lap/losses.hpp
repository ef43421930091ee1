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

#ifndef LAP_LOSSES_HPP_
#define LAP_LOSSES_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lap/tensor.hpp"

namespace lap {

/// Axis-aligned rectangle in pixel coordinates, tagged with its concept.
struct Box {
  int concept_id = 0;
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool operator==(const Box&) const = default;
};

/// Concepts present in one sample plus optional expert boxes.
struct ConceptAnnotation {
  std::string sample_id;
  std::vector<int> concepts;
  std::vector<Box> boxes;

  bool has(int concept_id) const;
  bool operator==(const ConceptAnnotation&) const = default;
};

/// Ratios for one concept head. An absent ratio disables its term.
struct HeadLossConfig {
  std::optional<double> min_ar;
  std::optional<double> max_ar;
  std::optional<double> iar;
};

struct DiscLossConfig {
  std::vector<HeadLossConfig> heads;
  double concordance_t = 0.1;
  /// Restrict the concordance loss to pixels high at l and low at l + 1.
  bool one_sided_concordance = false;

  /// Same ratios for every head.
  static DiscLossConfig uniform(int heads, std::optional<double> min_ar,
                                std::optional<double> max_ar,
                                std::optional<double> iar);
  /// Throws ConfigError on ratios outside (0, 1] or min_ar > max_ar.
  void validate() const;
};

/// Relative weights of the combined objective.
struct LossWeights {
  double task = 1.0;
  double per_lap = 0.25;
  double per_pair = 0.25;
};

/// Value plus gradient w.r.t. the probability tensor it was computed on.
struct LossValue {
  double value = 0.0;
  Tensor grad;
};

struct ConcordanceValue {
  double value = 0.0;
  Tensor grad_shallow;
  Tensor grad_deep;
};

enum class Rank { kHighest, kLowest };

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

/// ceil(ratio * count), robust to representation error in the product.
int ratio_count(double ratio, int count);

/// Flat row-major indices of the k extremal values, in rank order. Ties
/// keep row-major order.
std::vector<int> topk_pixels(std::span<const double> values, int k, Rank dir);

/**
 * Concept-discrimination loss of one LAP over a batch.
 *
 * `probs` is the (N, heads, H, W) concept probability tensor; pixel sets are
 * ranked on `selector_probs` (same shape) or on `probs` when the selector
 * tensor is empty. Concepts missing from the batch contribute nothing.
 */
LossValue concept_discrimination_loss(
    const Tensor& probs, const Tensor& selector_probs,
    std::span<const ConceptAnnotation> annotations, const DiscLossConfig& cfg);

/// Training objective of the discriminative scorer: the MinAR-style and
/// IAR-style terms over every pixel, without the factor 2.
LossValue discriminative_selector_loss(
    const Tensor& selector_probs, std::span<const ConceptAnnotation> annotations,
    const DiscLossConfig& cfg);

/// Nearest-neighbour upsampling of (N, C, h, w) to (N, C, H, W).
Tensor upsample_nearest(const Tensor& t, int H, int W);

/**
 * Jensen-Shannon style agreement between consecutive LAPs. The deeper map
 * is upsampled (nearest) to the shallower resolution; only pixels whose
 * probabilities differ by more than `t` count. Mean over samples and heads.
 */
ConcordanceValue concordance_loss(const Tensor& shallow, const Tensor& deep,
                                  double t, bool one_sided = false);

/// Box scaled from image to map resolution, rounded outward, at least one
/// pixel, clipped to the map.
Box resize_box(const Box& b, int image_h, int image_w, int map_h, int map_w);

/**
 * Full supervision from boxes: the top half of each box's pixels are pushed
 * up (factor 2, as the MinAR term), every out-of-box pixel is pushed down,
 * and negatives get the IAR term of their head.
 */
LossValue bbox_supervision_loss(const Tensor& probs,
                                std::span<const ConceptAnnotation> annotations,
                                int image_h, int image_w,
                                const DiscLossConfig& cfg);

double combine_losses(double task, std::span<const double> per_lap,
                      std::span<const double> per_pair,
                      const LossWeights& weights);

/// Mean softmax cross-entropy over the batch; `grad` is w.r.t. the logits.
LossValue softmax_cross_entropy(const Tensor& logits,
                                std::span<const int> labels);

}  // namespace lap

#endif  // LAP_LOSSES_HPP_
