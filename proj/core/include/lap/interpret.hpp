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

#ifndef LAP_INTERPRET_HPP_
#define LAP_INTERPRET_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "lap/grid.hpp"
#include "lap/lap_pool.hpp"
#include "lap/network.hpp"

namespace lap {

/// Copies plane (n, c) of a tensor into a Map2d.
Map2d plane_map(const Tensor& t, int n, int c);

/// Maps of one LAP for one sample.
struct StackLevel {
  std::vector<Map2d> concepts;  // one per head
  Map2d aggregated;
  /// Relates this level's pixels to the next (deeper) level's pixels.
  KernelSpec kernel;
};

/**
 * @brief Per-LAP maps of one sample, ordered shallow to deep.
 *
 * Level l pixel (y, x) belongs to level l+1 pixel
 * (clamp(floor((y + pad) / stride_h)), clamp(floor((x + pad) / stride_w))),
 * i.e. the window whose top-left corner is nearest. With non-overlapping
 * kernels that is exactly the pooling window.
 */
struct InterpretationStack {
  std::vector<StackLevel> levels;
  int input_h = 0;
  int input_w = 0;
  double decay_alpha = 0.8;

  int depth() const { return static_cast<int>(levels.size()); }
  int heads() const;
  /// Throws GeometryError when consecutive resolutions disagree with the
  /// kernels, ArgumentError on an empty stack or decay outside (0, 1].
  void validate() const;
};

struct Extraction {
  Tensor logits;
  std::vector<InterpretationStack> stacks;  // one per sample
};

/**
 * Runs one forward pass and captures every LAP's maps from it, so the maps
 * belong to exactly the returned logits. Throws UsageError when `net` has
 * no LAP.
 */
Extraction extract_stack(Network& net, const Tensor& x,
                         double decay_alpha = 0.8);

/// Parent index of child coordinate `y` along one axis.
int parent_index(int y, int stride, int padding, int parent_size);

/// Nearest-neighbour resize.
Map2d resize_nearest(const Map2d& m, int rows, int cols);

/**
 * Top-down integration of one concept over the stack. A level keeps its
 * own detail only below parents and windows that are active (value > 0.5);
 * elsewhere children inherit the parent value. Returned at input size.
 */
Map2d integrate_stack(const InterpretationStack& stack, int concept_id);

/// Same traversal, but each level adds its decayed probability to the
/// parent's running score without clipping. Returned at input size.
Map2d accumulated_scores(const InterpretationStack& stack, int concept_id);

/// Input pixels (row-major indices) ranked by accumulated_scores(),
/// highest first, ties by index; the first `k` are returned.
std::vector<int> integrate_topk_variant(const InterpretationStack& stack,
                                        int concept_id, int k);

/// True iff some pixel is strictly above 0.5.
bool lap_predict_presence(const Map2d& concept_map);

/// Index into `class_heads` with the largest probability sum; ties go to
/// the lowest index. Needs at least two heads.
int lap_predict_class(std::span<const Map2d> concept_maps,
                      std::span<const int> class_heads);

/// Per-head sum of probabilities.
std::vector<double> concept_size_features(std::span<const Map2d> concept_maps);

struct ProbeOptions {
  int hidden = 16;
  int epochs = 500;
  double lr = 0.01;
  std::uint64_t seed = 0;
};

/// Two-layer MLP over standardized concept-size features.
class FcProbe {
 public:
  std::vector<int> predict(const std::vector<std::vector<double>>& x) const;
  int classes() const { return classes_; }

 private:
  friend FcProbe fc_probe_train(const std::vector<std::vector<double>>&,
                                std::span<const int>, const ProbeOptions&);
  Eigen::VectorXd mean_, scale_;
  Eigen::MatrixXd w1_, w2_;
  Eigen::VectorXd b1_, b2_;
  int classes_ = 0;
};

/// Full-batch Adam on cross-entropy. Throws FittingError when fewer than
/// two classes are present.
FcProbe fc_probe_train(const std::vector<std::vector<double>>& features,
                       std::span<const int> labels,
                       const ProbeOptions& opts = {});

}  // namespace lap

#endif  // LAP_INTERPRET_HPP_
