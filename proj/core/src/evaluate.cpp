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

#include "lap/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lap/errors.hpp"
#include "lap/losses.hpp"
#include "lap/surgery.hpp"

namespace lap {

Map2d normalize_map(const Map2d& m) {
  if (m.data.empty()) return m;
  const double mx = *std::max_element(m.data.begin(), m.data.end());
  if (!(mx > 0.0)) return m;
  Map2d out = m;
  for (double& v : out.data) v /= mx;
  return out;
}

LsqrResult lsqr(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                double damp, double tol, int max_iter) {
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  constexpr double kCtol = 1e-8;  // 1 / conlim with conlim = 1e8
  const double atol = tol;
  const double btol = tol;
  LsqrResult res;
  res.x = Eigen::VectorXd::Zero(A.cols());

  Eigen::VectorXd u = b;
  double beta = u.norm();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(A.cols());
  double alfa = 0.0;
  if (beta > 0.0) {
    u /= beta;
    v = A.transpose() * u;
    alfa = v.norm();
  }
  if (alfa > 0.0) v /= alfa;
  if (alfa * beta == 0.0) return res;

  Eigen::VectorXd w = v;
  double rhobar = alfa;
  double phibar = beta;
  const double bnorm = beta;
  const double dampsq = damp * damp;
  double anorm = 0.0, ddnorm = 0.0, res2 = 0.0, xxnorm = 0.0, z = 0.0;
  double cs2 = -1.0, sn2 = 0.0;

  for (int itn = 1; itn <= max_iter; ++itn) {
    res.iterations = itn;
    u = A * v - alfa * u;
    beta = u.norm();
    if (beta > 0.0) {
      u /= beta;
      anorm = std::sqrt(anorm * anorm + alfa * alfa + beta * beta + dampsq);
      v = A.transpose() * u - beta * v;
      alfa = v.norm();
      if (alfa > 0.0) v /= alfa;
    }
    const double rhobar1 = std::sqrt(rhobar * rhobar + dampsq);
    const double cs1 = rhobar / rhobar1;
    const double sn1 = damp / rhobar1;
    const double psi = sn1 * phibar;
    phibar = cs1 * phibar;

    const double rho = std::sqrt(rhobar1 * rhobar1 + beta * beta);
    const double cs = rhobar1 / rho;
    const double sn = beta / rho;
    const double theta = sn * alfa;
    rhobar = -cs * alfa;
    const double phi = cs * phibar;
    phibar = sn * phibar;
    const double tau = sn * phi;

    const Eigen::VectorXd dk = w / rho;
    res.x += (phi / rho) * w;
    w = v - (theta / rho) * w;
    ddnorm += dk.squaredNorm();

    const double delta = sn2 * rho;
    const double gambar = -cs2 * rho;
    const double rhs = phi - delta * z;
    const double zbar = rhs / gambar;
    const double xnorm = std::sqrt(xxnorm + zbar * zbar);
    const double gamma = std::sqrt(gambar * gambar + theta * theta);
    cs2 = gambar / gamma;
    sn2 = theta / gamma;
    z = rhs / gamma;
    xxnorm += z * z;

    const double acond = anorm * std::sqrt(ddnorm);
    res2 += psi * psi;
    const double rnorm = std::sqrt(phibar * phibar + res2);
    const double arnorm = alfa * std::abs(tau);

    const double test1 = rnorm / bnorm;
    const double test2 = arnorm / (anorm * rnorm + kEps);
    const double test3 = 1.0 / (acond + kEps);
    const double rtol = btol + atol * anorm * xnorm / bnorm;
    if (test3 <= kCtol || test2 <= atol || test1 <= rtol) break;
  }
  return res;
}

ThresholdFit fit_global_threshold(std::span<const Map2d> maps,
                                  std::span<const Mask2d> masks,
                                  const RidgeOptions& opts) {
  if (maps.size() != masks.size()) {
    throw ArgumentError("fit_global_threshold: maps and masks differ in count");
  }
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].rows != masks[i].rows || maps[i].cols != masks[i].cols) {
      throw ArgumentError("fit_global_threshold: map/mask shape mismatch");
    }
    for (std::size_t k = 0; k < maps[i].size(); ++k) {
      xs.push_back(maps[i].data[k]);
      ys.push_back(masks[i].data[k] ? 1.0 : -1.0);
    }
  }
  const auto n_pos = static_cast<double>(std::count(ys.begin(), ys.end(), 1.0));
  const double n_neg = static_cast<double>(ys.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) {
    throw FittingError("threshold fitting needs both in-mask and out-of-mask pixels");
  }
  // Balanced weighting: n / (classes * count).
  const double n = static_cast<double>(ys.size());
  const double w_pos = n / (2.0 * n_pos);
  const double w_neg = n / (2.0 * n_neg);
  double sw = 0.0, x_mean = 0.0, y_mean = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double wk = ys[k] > 0 ? w_pos : w_neg;
    sw += wk;
    x_mean += wk * xs[k];
    y_mean += wk * ys[k];
  }
  x_mean /= sw;
  y_mean /= sw;
  Eigen::MatrixXd A(xs.size(), 1);
  Eigen::VectorXd b(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = std::sqrt(ys[k] > 0 ? w_pos : w_neg);
    A(static_cast<Eigen::Index>(k), 0) = r * (xs[k] - x_mean);
    b(static_cast<Eigen::Index>(k)) = r * (ys[k] - y_mean);
  }
  const LsqrResult sol = lsqr(A, b, std::sqrt(opts.alpha), opts.tol, opts.max_iter);
  ThresholdFit fit;
  fit.coef = sol.x(0);
  fit.intercept = y_mean - x_mean * fit.coef;
  fit.iterations = sol.iterations;
  if (fit.coef == 0.0) {
    throw FittingError("pixel scores carry no information about the masks");
  }
  fit.threshold = -fit.intercept / fit.coef;
  return fit;
}

Mask2d binarize(const Map2d& m, double threshold) {
  Mask2d out(m.rows, m.cols);
  for (std::size_t k = 0; k < m.size(); ++k) out.data[k] = m.data[k] > threshold;
  return out;
}

Mask2d binarize_top_scored(const Map2d& m, int area) {
  if (area < 0 || static_cast<std::size_t>(area) > m.size()) {
    throw ArgumentError("area " + std::to_string(area) + " outside [0, " +
                        std::to_string(m.size()) + "]");
  }
  Mask2d out(m.rows, m.cols);
  for (int i : topk_pixels(m.data, area, Rank::kHighest)) out.data[i] = 1;
  return out;
}

double iou(const Mask2d& a, const Mask2d& b) {
  if (!a.same_shape(b)) throw ArgumentError("iou: mask shapes differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    inter += (a.data[k] && b.data[k]) ? 1 : 0;
    uni += (a.data[k] || b.data[k]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ClassificationMetrics classification_metrics(std::span<const int> preds,
                                             std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw ArgumentError("prediction and label counts differ");
  }
  std::size_t tp = 0, tn = 0, pos = 0, neg = 0, correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    correct += preds[i] == labels[i] ? 1 : 0;
    if (labels[i] == 1) {
      ++pos;
      tp += preds[i] == 1 ? 1 : 0;
    } else {
      ++neg;
      tn += preds[i] == labels[i] ? 1 : 0;
    }
  }
  ClassificationMetrics m;
  if (preds.empty()) return m;
  m.accuracy = static_cast<double>(correct) / preds.size();
  m.sensitivity = pos ? static_cast<double>(tp) / pos : 0.0;
  m.specificity = neg ? static_cast<double>(tn) / neg : 0.0;
  m.balanced_accuracy = 0.5 * (m.sensitivity + m.specificity);
  return m;
}

double balanced_accuracy(std::span<const int> preds,
                         std::span<const int> labels) {
  return classification_metrics(preds, labels).balanced_accuracy;
}

std::pair<double, double> predictivity_and_faithfulness(
    std::span<const int> lap_preds, std::span<const int> model_preds,
    std::span<const int> labels) {
  if (lap_preds.size() != model_preds.size() ||
      lap_preds.size() != labels.size()) {
    throw ArgumentError("predictivity/faithfulness inputs differ in length");
  }
  if (lap_preds.empty()) return {0.0, 0.0};
  std::size_t gt = 0, model = 0;
  for (std::size_t i = 0; i < lap_preds.size(); ++i) {
    gt += lap_preds[i] == labels[i] ? 1 : 0;
    model += lap_preds[i] == model_preds[i] ? 1 : 0;
  }
  const auto n = static_cast<double>(lap_preds.size());
  return {gt / n, model / n};
}

namespace {

// Indices of the top `k` logits, ties towards the lower class index.
bool in_top_k(const double* z, int classes, int k, int target) {
  int better = 0;
  for (int c = 0; c < classes; ++c) {
    if (z[c] > z[target] || (z[c] == z[target] && c < target)) ++better;
  }
  return better < k;
}

}  // namespace

std::vector<CurvePoint> faithfulness_curve(Network& net, const Tensor& images,
                                           std::span<const Map2d> scores,
                                           std::span<const double> ks,
                                           CurveReference ref,
                                           std::span<const int> labels) {
  if (ks.empty()) throw ArgumentError("faithfulness_curve: empty ratio list");
  for (double k : ks) {
    if (!(k > 0.0 && k <= 1.0)) {
      throw ArgumentError("faithfulness_curve: ratios must lie in (0, 1]");
    }
  }
  if (static_cast<int>(scores.size()) != images.n()) {
    throw ArgumentError("faithfulness_curve: one score map per image required");
  }
  for (const Map2d& s : scores) {
    if (s.rows != images.h() || s.cols != images.w()) {
      throw ArgumentError("faithfulness_curve: score map and image sizes differ");
    }
  }
  std::vector<int> reference;
  if (ref == CurveReference::kGroundTruth) {
    if (static_cast<int>(labels.size()) != images.n()) {
      throw ArgumentError("faithfulness_curve: labels required for ground truth");
    }
    reference.assign(labels.begin(), labels.end());
  } else {
    reference = argmax_classes(predict_logits(net, images));
  }
  std::vector<CurvePoint> curve;
  const int hw = images.h() * images.w();
  for (double k : ks) {
    const int keep = ratio_count(k, hw);
    Tensor masked = images;
    for (int n = 0; n < images.n(); ++n) {
      const Mask2d m = binarize_top_scored(scores[n], keep);
      for (int c = 0; c < images.c(); ++c) {
        double* p = masked.plane(n, c);
        for (int i = 0; i < hw; ++i) {
          if (!m.data[i]) p[i] = 0.0;
        }
      }
    }
    const Tensor logits = predict_logits(net, masked);
    const int classes = logits.c() * logits.h() * logits.w();
    const int top = std::min(5, classes);
    int hit1 = 0, hit5 = 0;
    for (int n = 0; n < images.n(); ++n) {
      hit1 += in_top_k(logits.sample(n), classes, 1, reference[n]) ? 1 : 0;
      hit5 += in_top_k(logits.sample(n), classes, top, reference[n]) ? 1 : 0;
    }
    curve.push_back({k, static_cast<double>(hit1) / images.n(),
                     static_cast<double>(hit5) / images.n()});
  }
  return curve;
}

}  // namespace lap
