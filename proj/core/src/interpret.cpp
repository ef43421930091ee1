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

#include "lap/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "lap/errors.hpp"
#include "lap/losses.hpp"

namespace lap {

Map2d plane_map(const Tensor& t, int n, int c) {
  Map2d m(t.h(), t.w());
  const double* p = t.plane(n, c);
  std::copy(p, p + m.size(), m.data.begin());
  return m;
}

int InterpretationStack::heads() const {
  return levels.empty() ? 0 : static_cast<int>(levels.front().concepts.size());
}

void InterpretationStack::validate() const {
  if (levels.empty()) throw ArgumentError("interpretation stack is empty");
  if (!(decay_alpha > 0.0 && decay_alpha <= 1.0)) {
    throw ArgumentError("decay factor must lie in (0, 1]");
  }
  if (input_h < 1 || input_w < 1) throw ArgumentError("input size must be positive");
  const int h = heads();
  if (h < 1) throw ArgumentError("stack level without concept maps");
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const StackLevel& lv = levels[l];
    if (static_cast<int>(lv.concepts.size()) != h) {
      throw GeometryError("level " + std::to_string(l) + " has " +
                          std::to_string(lv.concepts.size()) + " heads, expected " +
                          std::to_string(h));
    }
    for (const Map2d& m : lv.concepts) {
      if (!m.same_shape(lv.concepts.front()) || m.size() == 0) {
        throw GeometryError("level " + std::to_string(l) + " maps differ in shape");
      }
    }
    if (l + 1 == levels.size()) break;
    const Map2d& child = lv.concepts.front();
    const Map2d& parent = levels[l + 1].concepts.front();
    lv.kernel.validate();
    if (lv.kernel.out_h(child.rows) != parent.rows ||
        lv.kernel.out_w(child.cols) != parent.cols) {
      throw GeometryError("level " + std::to_string(l) + " (" +
                          std::to_string(child.rows) + "x" + std::to_string(child.cols) +
                          ") does not pool onto level " + std::to_string(l + 1) + " (" +
                          std::to_string(parent.rows) + "x" +
                          std::to_string(parent.cols) + ")");
    }
  }
}

namespace {

KernelSpec level_geometry(LapLayerBase& lap, int h, int w, int next_h,
                          int next_w) {
  try {
    const KernelSpec k = lap.window_geometry(lap.last_input().sample_shape());
    if (k.out_h(h) == next_h && k.out_w(w) == next_w) return k;
  } catch (const GeometryError&) {
  }
  // Something between the two LAPs changed the resolution; fall back to the
  // overall ratio when it is integral.
  if (h % next_h == 0 && w % next_w == 0) {
    const int sh = h / next_h;
    const int sw = w / next_w;
    return {sh, sw, sh, sw, 0};
  }
  throw GeometryError(lap.name() + ": " + std::to_string(h) + "x" +
                      std::to_string(w) + " maps do not tile the next LAP's " +
                      std::to_string(next_h) + "x" + std::to_string(next_w));
}

}  // namespace

Extraction extract_stack(Network& net, const Tensor& x, double decay_alpha) {
  const std::vector<LapLayerBase*> laps = net.lap_layers();
  if (laps.empty()) throw UsageError("network has no LAP layer to interpret");
  Extraction ex;
  ex.logits = net.forward(x);
  const int n = x.n();
  ex.stacks.resize(n);
  for (int s = 0; s < n; ++s) {
    InterpretationStack& st = ex.stacks[s];
    st.input_h = x.h();
    st.input_w = x.w();
    st.decay_alpha = decay_alpha;
    st.levels.resize(laps.size());
  }
  for (std::size_t l = 0; l < laps.size(); ++l) {
    const ConceptMaps& maps = laps[l]->maps();
    KernelSpec geom = KernelSpec::square(1, 1);
    if (l + 1 < laps.size()) {
      const Tensor& next = laps[l + 1]->maps().aggregated;
      geom = level_geometry(*laps[l], maps.aggregated.h(), maps.aggregated.w(),
                            next.h(), next.w());
    }
    for (int s = 0; s < n; ++s) {
      StackLevel& lv = ex.stacks[s].levels[l];
      lv.kernel = geom;
      lv.aggregated = plane_map(maps.aggregated, s, 0);
      for (int c = 0; c < maps.per_concept.c(); ++c) {
        lv.concepts.push_back(plane_map(maps.per_concept, s, c));
      }
    }
  }
  return ex;
}

int parent_index(int y, int stride, int padding, int parent_size) {
  const int p = (y + padding) / stride;
  return std::clamp(p, 0, parent_size - 1);
}

Map2d resize_nearest(const Map2d& m, int rows, int cols) {
  if (m.rows == rows && m.cols == cols) return m;
  Map2d out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const int si = static_cast<int>(static_cast<long long>(i) * m.rows / rows);
    for (int j = 0; j < cols; ++j) {
      const int sj = static_cast<int>(static_cast<long long>(j) * m.cols / cols);
      out.at(i, j) = m.at(si, sj);
    }
  }
  return out;
}

namespace {

void check_concept(const InterpretationStack& stack, int concept_id) {
  stack.validate();
  if (concept_id < 0 || concept_id >= stack.heads()) {
    throw ArgumentError("concept " + std::to_string(concept_id) + " outside [0, " +
                        std::to_string(stack.heads()) + ")");
  }
}

// Calls f(child_index, parent_index) for every pixel of level l.
template <typename F>
void for_each_child(const Map2d& child, const Map2d& parent, const KernelSpec& k,
                    F&& f) {
  for (int y = 0; y < child.rows; ++y) {
    const int py = parent_index(y, k.stride_h, k.padding, parent.rows);
    for (int x = 0; x < child.cols; ++x) {
      const int px = parent_index(x, k.stride_w, k.padding, parent.cols);
      f(static_cast<std::size_t>(y) * child.cols + x,
        static_cast<std::size_t>(py) * parent.cols + px);
    }
  }
}

}  // namespace

Map2d integrate_stack(const InterpretationStack& stack, int concept_id) {
  check_concept(stack, concept_id);
  const int L = stack.depth();
  Map2d r = stack.levels[L - 1].concepts[concept_id];
  double decay = 1.0;
  for (int l = L - 2; l >= 0; --l) {
    decay *= stack.decay_alpha;
    const Map2d& p = stack.levels[l].concepts[concept_id];
    const KernelSpec& k = stack.levels[l].kernel;
    std::vector<double> window_max(r.size(), -std::numeric_limits<double>::infinity());
    for_each_child(p, r, k, [&](std::size_t ci, std::size_t pi) {
      window_max[pi] = std::max(window_max[pi], p.data[ci]);
    });
    Map2d next(p.rows, p.cols);
    for_each_child(p, r, k, [&](std::size_t ci, std::size_t pi) {
      const double parent = r.data[pi];
      if (parent > 0.5 && window_max[pi] > 0.5) {
        const double own = p.data[ci] * decay;
        next.data[ci] = p.data[ci] > 0.5 ? std::max(parent, own) : own;
      } else {
        next.data[ci] = parent;
      }
    });
    r = std::move(next);
  }
  return resize_nearest(r, stack.input_h, stack.input_w);
}

Map2d accumulated_scores(const InterpretationStack& stack, int concept_id) {
  check_concept(stack, concept_id);
  const int L = stack.depth();
  Map2d a = stack.levels[L - 1].concepts[concept_id];
  double decay = 1.0;
  for (int l = L - 2; l >= 0; --l) {
    decay *= stack.decay_alpha;
    const Map2d& p = stack.levels[l].concepts[concept_id];
    Map2d next(p.rows, p.cols);
    for_each_child(p, a, stack.levels[l].kernel,
                   [&](std::size_t ci, std::size_t pi) {
                     next.data[ci] = a.data[pi] + p.data[ci] * decay;
                   });
    a = std::move(next);
  }
  return resize_nearest(a, stack.input_h, stack.input_w);
}

std::vector<int> integrate_topk_variant(const InterpretationStack& stack,
                                        int concept_id, int k) {
  const Map2d a = accumulated_scores(stack, concept_id);
  return topk_pixels(a.data, k, Rank::kHighest);
}

bool lap_predict_presence(const Map2d& concept_map) {
  return std::any_of(concept_map.data.begin(), concept_map.data.end(),
                     [](double v) { return v > 0.5; });
}

int lap_predict_class(std::span<const Map2d> concept_maps,
                      std::span<const int> class_heads) {
  if (class_heads.size() < 2) {
    throw ArgumentError("class prediction needs at least two heads");
  }
  int best = 0;
  double best_sum = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < class_heads.size(); ++i) {
    const int h = class_heads[i];
    if (h < 0 || h >= static_cast<int>(concept_maps.size())) {
      throw ArgumentError("class head " + std::to_string(h) + " out of range");
    }
    double sum = 0.0;
    for (double v : concept_maps[h].data) sum += v;
    if (sum > best_sum) {
      best_sum = sum;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<double> concept_size_features(std::span<const Map2d> concept_maps) {
  std::vector<double> f;
  f.reserve(concept_maps.size());
  for (const Map2d& m : concept_maps) {
    double s = 0.0;
    for (double v : m.data) s += v;
    f.push_back(s);
  }
  return f;
}

// ------------------------------------------------------------------ probe

namespace {

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& x,
                          Eigen::Index dims) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(x.size()), dims);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (static_cast<Eigen::Index>(x[i].size()) != dims) {
      throw ArgumentError("feature rows differ in length");
    }
    for (Eigen::Index j = 0; j < dims; ++j) m(static_cast<Eigen::Index>(i), j) = x[i][j];
  }
  return m;
}

struct AdamState {
  Eigen::MatrixXd m, v;
  explicit AdamState(const Eigen::MatrixXd& like)
      : m(Eigen::MatrixXd::Zero(like.rows(), like.cols())),
        v(Eigen::MatrixXd::Zero(like.rows(), like.cols())) {}
  template <typename P>
  void step(P& param, const Eigen::MatrixXd& g, double lr, int t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(b1, t);
    const double c2 = 1 - std::pow(b2, t);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

}  // namespace

std::vector<int> FcProbe::predict(const std::vector<std::vector<double>>& x) const {
  if (x.empty()) return {};
  Eigen::MatrixXd X = to_matrix(x, mean_.size());
  X = (X.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
  const Eigen::MatrixXd h =
      ((X * w1_.transpose()).rowwise() + b1_.transpose()).cwiseMax(0.0);
  const Eigen::MatrixXd z = (h * w2_.transpose()).rowwise() + b2_.transpose();
  std::vector<int> out(x.size());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index arg = 0;
    z.row(i).maxCoeff(&arg);
    out[i] = static_cast<int>(arg);
  }
  return out;
}

FcProbe fc_probe_train(const std::vector<std::vector<double>>& features,
                       std::span<const int> labels, const ProbeOptions& opts) {
  if (features.size() != labels.size()) {
    throw ArgumentError("feature and label counts differ");
  }
  if (features.empty()) throw FittingError("probe needs at least one sample");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw FittingError("probe needs two or more classes");
  if (*distinct.begin() < 0) throw ArgumentError("labels must be non-negative");

  FcProbe probe;
  probe.classes_ = *distinct.rbegin() + 1;
  const auto d = static_cast<Eigen::Index>(features.front().size());
  const Eigen::MatrixXd raw = to_matrix(features, d);
  const auto n = raw.rows();
  probe.mean_ = raw.colwise().mean().transpose();
  probe.scale_ = Eigen::VectorXd::Ones(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = (raw.col(j).array() - probe.mean_(j)).square().mean();
    if (var > 0.0) probe.scale_(j) = std::sqrt(var);
  }
  const Eigen::MatrixXd X =
      (raw.rowwise() - probe.mean_.transpose()).array().rowwise() /
      probe.scale_.transpose().array();

  std::mt19937_64 rng(opts.seed);
  auto uniform = [&rng](Eigen::Index r, Eigen::Index c, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
    }
    return m;
  };
  const Eigen::Index H = opts.hidden;
  const Eigen::Index K = probe.classes_;
  probe.w1_ = uniform(H, d, 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(d, 1))));
  probe.b1_ = uniform(H, 1, 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(d, 1))));
  probe.w2_ = uniform(K, H, 1.0 / std::sqrt(static_cast<double>(H)));
  probe.b2_ = Eigen::VectorXd::Zero(K);

  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, K);
  for (Eigen::Index i = 0; i < n; ++i) Y(i, labels[i]) = 1.0;

  AdamState s_w1(probe.w1_), s_b1(probe.b1_), s_w2(probe.w2_), s_b2(probe.b2_);
  for (int t = 1; t <= opts.epochs; ++t) {
    const Eigen::MatrixXd pre = (X * probe.w1_.transpose()).rowwise() + probe.b1_.transpose();
    const Eigen::MatrixXd h = pre.cwiseMax(0.0);
    Eigen::MatrixXd z = (h * probe.w2_.transpose()).rowwise() + probe.b2_.transpose();
    z = z.colwise() - z.rowwise().maxCoeff();
    Eigen::MatrixXd p = z.array().exp();
    p = p.array().colwise() / p.rowwise().sum().array();
    const Eigen::MatrixXd dz = (p - Y) / static_cast<double>(n);
    const Eigen::MatrixXd gw2 = dz.transpose() * h;
    const Eigen::MatrixXd gb2 = dz.colwise().sum().transpose();
    const Eigen::MatrixXd dh =
        (dz * probe.w2_).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd gw1 = dh.transpose() * X;
    const Eigen::MatrixXd gb1 = dh.colwise().sum().transpose();
    s_w2.step(probe.w2_, gw2, opts.lr, t);
    s_b2.step(probe.b2_, gb2, opts.lr, t);
    s_w1.step(probe.w1_, gw1, opts.lr, t);
    s_b1.step(probe.b1_, gb1, opts.lr, t);
  }
  return probe;
}

}  // namespace lap
