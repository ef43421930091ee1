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

#ifndef LAP_EVALUATE_HPP_
#define LAP_EVALUATE_HPP_

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lap/grid.hpp"
#include "lap/network.hpp"

namespace lap {

/// Divides by the maximum. An all-zero (or empty) map comes back unchanged.
Map2d normalize_map(const Map2d& m);

struct RidgeOptions {
  double alpha = 0.01;
  double tol = 1e-3;
  int max_iter = 100;
};

struct LsqrResult {
  Eigen::VectorXd x;
  int iterations = 0;
};

/// Paige-Saunders LSQR for min ||A x - b||^2 + damp^2 ||x||^2, stopping on
/// atol = btol = tol or after max_iter iterations.
LsqrResult lsqr(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                double damp, double tol, int max_iter);

struct ThresholdFit {
  double threshold = 0.0;
  double coef = 0.0;
  double intercept = 0.0;
  int iterations = 0;
};

/**
 * Global binarization threshold for score maps: a ridge classifier
 * (targets -1/+1, balanced class weights, centred with an intercept, solved
 * with LSQR) separating in-mask from out-of-mask pixel scores. The
 * threshold is where its decision function is zero. Throws FittingError
 * when only one class of pixels is present.
 */
ThresholdFit fit_global_threshold(std::span<const Map2d> maps,
                                  std::span<const Mask2d> masks,
                                  const RidgeOptions& opts = {});

/// Pixels strictly above `threshold`.
Mask2d binarize(const Map2d& m, double threshold);
/// Exactly `area` highest pixels; ties resolved in row-major order.
Mask2d binarize_top_scored(const Map2d& m, int area);

/// |a & b| / |a | b|; 1.0 when both masks are empty.
double iou(const Mask2d& a, const Mask2d& b);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double sensitivity = 0.0;  // recall of class 1
  double specificity = 0.0;  // recall of class 0
  double balanced_accuracy = 0.0;
};

/// Binary metrics; a class absent from `labels` has recall 0.
ClassificationMetrics classification_metrics(std::span<const int> preds,
                                             std::span<const int> labels);
double balanced_accuracy(std::span<const int> preds,
                         std::span<const int> labels);

/// (agreement with labels, agreement with model predictions).
std::pair<double, double> predictivity_and_faithfulness(
    std::span<const int> lap_preds, std::span<const int> model_preds,
    std::span<const int> labels);

enum class CurveReference { kModelPrediction, kGroundTruth };

struct CurvePoint {
  double k = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;  // top-min(5, classes)
};

inline const std::vector<double> kDefaultKeepRatios{0.1, 0.3, 0.5, 0.7, 0.9};

/**
 * Keep-k% curve: for each ratio keep the ceil(k * H * W) top-scored pixels of
 * every image, zero the rest (all channels), re-run the model and compare
 * against the original predictions or against `labels`.
 */
std::vector<CurvePoint> faithfulness_curve(Network& net, const Tensor& images,
                                           std::span<const Map2d> scores,
                                           std::span<const double> ks,
                                           CurveReference ref,
                                           std::span<const int> labels = {});

}  // namespace lap

#endif  // LAP_EVALUATE_HPP_
