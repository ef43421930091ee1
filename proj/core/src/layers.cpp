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

#include "lap/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "lap/errors.hpp"

namespace lap {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void uniform_init(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
}

int conv_out(int size, int kernel, int stride, int pad) {
  if (size + 2 * pad < kernel) {
    throw GraphError("kernel " + std::to_string(kernel) +
                     " larger than padded input " +
                     std::to_string(size + 2 * pad));
  }
  return (size + 2 * pad - kernel) / stride + 1;
}

// col is (C*k*k, OH*OW), row-major.
void im2col(const double* x, int C, int H, int W, int k, int stride, int pad,
            int OH, int OW, double* col) {
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = col + ((c * k + ki) * k + kj) * OH * OW;
        for (int oi = 0; oi < OH; ++oi) {
          const int i = oi * stride - pad + ki;
          for (int oj = 0; oj < OW; ++oj) {
            const int j = oj * stride - pad + kj;
            row[oi * OW + oj] = (i >= 0 && i < H && j >= 0 && j < W)
                                    ? x[(c * H + i) * W + j]
                                    : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int C, int H, int W, int k, int stride, int pad,
            int OH, int OW, double* dx) {
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row = col + ((c * k + ki) * k + kj) * OH * OW;
        for (int oi = 0; oi < OH; ++oi) {
          const int i = oi * stride - pad + ki;
          if (i < 0 || i >= H) continue;
          for (int oj = 0; oj < OW; ++oj) {
            const int j = oj * stride - pad + kj;
            if (j >= 0 && j < W) dx[(c * H + i) * W + j] += row[oi * OW + oj];
          }
        }
      }
    }
  }
}

nlohmann::json kernel_json(const KernelSpec& k) {
  return {k.kernel_h, k.kernel_w, k.stride_h, k.stride_w, k.padding};
}

KernelSpec kernel_from_json(const nlohmann::json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(),
          j.at(3).get<int>(), j.at(4).get<int>()};
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in, int out, int kernel, int stride,
               int pad)
    : Layer(std::move(name)),
      in_(in),
      out_(out),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      weight_("weight", Tensor(out, in, kernel, kernel)),
      bias_("bias", Tensor(out, 1, 1, 1)) {
  if (in < 1 || out < 1 || kernel < 1 || stride < 1 || pad < 0) {
    throw ConfigError("invalid conv2d geometry for " + this->name());
  }
}

Shape3 Conv2d::output_shape(const Shape3& in) const {
  if (in.c != in_) {
    throw GraphError(name() + " expects " + std::to_string(in_) +
                     " channels, got " + std::to_string(in.c));
  }
  return {out_, conv_out(in.h, kernel_, stride_, pad_),
          conv_out(in.w, kernel_, stride_, pad_)};
}

Tensor Conv2d::forward(const Tensor& x) {
  const Shape3 os = output_shape(x.sample_shape());
  input_ = x;
  const int ckk = in_ * kernel_ * kernel_;
  const int ohw = os.h * os.w;
  Tensor y(x.n(), out_, os.h, os.w);
  std::vector<double> col(static_cast<std::size_t>(ckk) * ohw);
  ConstMatMap wm(weight_.value.data(), out_, ckk);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.sample(n), in_, x.h(), x.w(), kernel_, stride_, pad_, os.h, os.w,
           col.data());
    MatMap ym(y.sample(n), out_, ohw);
    ym.noalias() = wm * ConstMatMap(col.data(), ckk, ohw);
    for (int o = 0; o < out_; ++o) ym.row(o).array() += bias_.value[o];
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const Tensor& x = input_;
  const int ckk = in_ * kernel_ * kernel_;
  const int ohw = dy.h() * dy.w();
  Tensor dx = Tensor::like(x);
  std::vector<double> col(static_cast<std::size_t>(ckk) * ohw);
  std::vector<double> dcol(col.size());
  ConstMatMap wm(weight_.value.data(), out_, ckk);
  MatMap dwm(weight_.grad.data(), out_, ckk);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.sample(n), in_, x.h(), x.w(), kernel_, stride_, pad_, dy.h(),
           dy.w(), col.data());
    ConstMatMap dym(dy.sample(n), out_, ohw);
    ConstMatMap cm(col.data(), ckk, ohw);
    dwm.noalias() += dym * cm.transpose();
    for (int o = 0; o < out_; ++o) bias_.grad[o] += dym.row(o).sum();
    MatMap dcm(dcol.data(), ckk, ohw);
    dcm.noalias() = wm.transpose() * dym;
    col2im(dcol.data(), in_, x.h(), x.w(), kernel_, stride_, pad_, dy.h(),
           dy.w(), dx.sample(n));
  }
  return dx;
}

void Conv2d::collect_params(std::vector<NamedParam>& out) {
  add_param(out, weight_);
  add_param(out, bias_);
}

void Conv2d::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ * kernel_ * kernel_));
  uniform_init(weight_.value, bound, rng);
  uniform_init(bias_.value, bound, rng);
}

std::unique_ptr<Layer> Conv2d::clone() const {
  auto c = std::make_unique<Conv2d>(*this);
  c->input_ = Tensor();
  return c;
}

std::unique_ptr<Conv2d> Conv2d::with_stride(std::string name, int stride) const {
  auto c = std::make_unique<Conv2d>(std::move(name), in_, out_, kernel_, stride,
                                    pad_);
  c->weight_ = weight_;
  c->bias_ = bias_;
  return c;
}

nlohmann::json Conv2d::describe() const {
  return {{"kind", kind()}, {"name", name()},     {"in", in_},
          {"out", out_},    {"kernel", kernel_}, {"stride", stride_},
          {"pad", pad_}};
}

// ------------------------------------------------------------------ Relu

Tensor Relu::forward(const Tensor& x) {
  output_ = x;
  for (double& v : output_.values()) v = std::max(v, 0.0);
  return output_;
}

Tensor Relu::backward(const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (output_[i] <= 0.0) dx[i] = 0.0;
  }
  return dx;
}

std::unique_ptr<Layer> Relu::clone() const {
  return std::make_unique<Relu>(name());
}

nlohmann::json Relu::describe() const {
  return {{"kind", kind()}, {"name", name()}};
}

// ---------------------------------------------------------------- Pool2d

Pool2d::Pool2d(std::string name, Mode mode, int kernel, int stride, int pad)
    : Layer(std::move(name)),
      mode_(mode),
      kernel_(kernel),
      stride_(stride),
      pad_(pad) {
  if (kernel < 1 || stride < 1 || pad < 0) {
    throw ConfigError("invalid pooling geometry for " + this->name());
  }
}

Shape3 Pool2d::output_shape(const Shape3& in) const {
  return {in.c, conv_out(in.h, kernel_, stride_, pad_),
          conv_out(in.w, kernel_, stride_, pad_)};
}

Tensor Pool2d::forward(const Tensor& x) {
  in_shape_ = x.sample_shape();
  batch_ = x.n();
  const Shape3 os = output_shape(in_shape_);
  Tensor y(x.n(), os.c, os.h, os.w);
  if (mode_ == Mode::kMax) argmax_.assign(y.size(), -1);
  const double area = static_cast<double>(kernel_ * kernel_);
  std::size_t idx = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* xp = x.plane(n, c);
      for (int oi = 0; oi < os.h; ++oi) {
        for (int oj = 0; oj < os.w; ++oj, ++idx) {
          double best = -std::numeric_limits<double>::infinity();
          int best_k = -1;
          double sum = 0.0;
          for (int ki = 0; ki < kernel_; ++ki) {
            const int i = oi * stride_ - pad_ + ki;
            for (int kj = 0; kj < kernel_; ++kj) {
              const int j = oj * stride_ - pad_ + kj;
              if (i < 0 || i >= x.h() || j < 0 || j >= x.w()) continue;
              const double v = xp[i * x.w() + j];
              sum += v;
              if (v > best) {
                best = v;
                best_k = i * x.w() + j;
              }
            }
          }
          if (mode_ == Mode::kMax) {
            y[idx] = best;
            argmax_[idx] = best_k;
          } else {
            y[idx] = sum / area;
          }
        }
      }
    }
  }
  return y;
}

Tensor Pool2d::backward(const Tensor& dy) {
  Tensor dx(batch_, in_shape_.c, in_shape_.h, in_shape_.w);
  const double area = static_cast<double>(kernel_ * kernel_);
  std::size_t idx = 0;
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      double* dxp = dx.plane(n, c);
      for (int oi = 0; oi < dy.h(); ++oi) {
        for (int oj = 0; oj < dy.w(); ++oj, ++idx) {
          if (mode_ == Mode::kMax) {
            if (argmax_[idx] >= 0) dxp[argmax_[idx]] += dy[idx];
            continue;
          }
          for (int ki = 0; ki < kernel_; ++ki) {
            const int i = oi * stride_ - pad_ + ki;
            for (int kj = 0; kj < kernel_; ++kj) {
              const int j = oj * stride_ - pad_ + kj;
              if (i < 0 || i >= dx.h() || j < 0 || j >= dx.w()) continue;
              dxp[i * dx.w() + j] += dy[idx] / area;
            }
          }
        }
      }
    }
  }
  return dx;
}

std::unique_ptr<Layer> Pool2d::clone() const {
  return std::make_unique<Pool2d>(name(), mode_, kernel_, stride_, pad_);
}

nlohmann::json Pool2d::describe() const {
  return {{"kind", kind()},     {"name", name()},     {"kernel", kernel_},
          {"stride", stride_}, {"pad", pad_}};
}

// ----------------------------------------------------- AdaptiveAvgPool2d

AdaptiveAvgPool2d::AdaptiveAvgPool2d(std::string name, int out_h, int out_w)
    : Layer(std::move(name)), out_h_(out_h), out_w_(out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ConfigError("invalid adaptive pooling size for " + this->name());
  }
}

Shape3 AdaptiveAvgPool2d::output_shape(const Shape3& in) const {
  if (out_h_ > in.h || out_w_ > in.w) {
    throw GraphError(name() + ": adaptive output larger than input " +
                     in.str());
  }
  return {in.c, out_h_, out_w_};
}

Tensor AdaptiveAvgPool2d::forward(const Tensor& x) {
  in_shape_ = x.sample_shape();
  batch_ = x.n();
  output_shape(in_shape_);
  Tensor y(x.n(), x.c(), out_h_, out_w_);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* xp = x.plane(n, c);
      for (int oi = 0; oi < out_h_; ++oi) {
        const int r0 = oi * x.h() / out_h_;
        const int r1 = ((oi + 1) * x.h() + out_h_ - 1) / out_h_;
        for (int oj = 0; oj < out_w_; ++oj) {
          const int c0 = oj * x.w() / out_w_;
          const int c1 = ((oj + 1) * x.w() + out_w_ - 1) / out_w_;
          double sum = 0.0;
          for (int i = r0; i < r1; ++i) {
            for (int j = c0; j < c1; ++j) sum += xp[i * x.w() + j];
          }
          y.at(n, c, oi, oj) = sum / ((r1 - r0) * (c1 - c0));
        }
      }
    }
  }
  return y;
}

Tensor AdaptiveAvgPool2d::backward(const Tensor& dy) {
  Tensor dx(batch_, in_shape_.c, in_shape_.h, in_shape_.w);
  const int H = in_shape_.h;
  const int W = in_shape_.w;
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      double* dxp = dx.plane(n, c);
      for (int oi = 0; oi < out_h_; ++oi) {
        const int r0 = oi * H / out_h_;
        const int r1 = ((oi + 1) * H + out_h_ - 1) / out_h_;
        for (int oj = 0; oj < out_w_; ++oj) {
          const int c0 = oj * W / out_w_;
          const int c1 = ((oj + 1) * W + out_w_ - 1) / out_w_;
          const double g = dy.at(n, c, oi, oj) / ((r1 - r0) * (c1 - c0));
          for (int i = r0; i < r1; ++i) {
            for (int j = c0; j < c1; ++j) dxp[i * W + j] += g;
          }
        }
      }
    }
  }
  return dx;
}

std::unique_ptr<Layer> AdaptiveAvgPool2d::clone() const {
  return std::make_unique<AdaptiveAvgPool2d>(name(), out_h_, out_w_);
}

nlohmann::json AdaptiveAvgPool2d::describe() const {
  return {{"kind", kind()}, {"name", name()}, {"out", {out_h_, out_w_}}};
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in, int out)
    : Layer(std::move(name)),
      in_(in),
      out_(out),
      weight_("weight", Tensor(out, in, 1, 1)),
      bias_("bias", Tensor(out, 1, 1, 1)) {
  if (in < 1 || out < 1) throw ConfigError("invalid linear size for " + this->name());
}

Shape3 Linear::output_shape(const Shape3& in) const {
  if (in.c * in.h * in.w != in_) {
    throw GraphError(name() + " expects " + std::to_string(in_) +
                     " inputs, got " + in.str());
  }
  return {out_, 1, 1};
}

Tensor Linear::forward(const Tensor& x) {
  output_shape(x.sample_shape());
  input_ = x;
  Tensor y(x.n(), out_, 1, 1);
  ConstMatMap xm(x.data(), x.n(), in_);
  ConstMatMap wm(weight_.value.data(), out_, in_);
  MatMap ym(y.data(), x.n(), out_);
  ym.noalias() = xm * wm.transpose();
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < out_; ++o) ym(n, o) += bias_.value[o];
  }
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  Tensor dx = Tensor::like(input_);
  const int N = input_.n();
  ConstMatMap xm(input_.data(), N, in_);
  ConstMatMap wm(weight_.value.data(), out_, in_);
  ConstMatMap dym(dy.data(), N, out_);
  MatMap(weight_.grad.data(), out_, in_).noalias() += dym.transpose() * xm;
  for (int o = 0; o < out_; ++o) bias_.grad[o] += dym.col(o).sum();
  MatMap(dx.data(), N, in_).noalias() = dym * wm;
  return dx;
}

void Linear::collect_params(std::vector<NamedParam>& out) {
  add_param(out, weight_);
  add_param(out, bias_);
}

void Linear::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  uniform_init(weight_.value, bound, rng);
  uniform_init(bias_.value, bound, rng);
}

std::unique_ptr<Layer> Linear::clone() const {
  auto c = std::make_unique<Linear>(*this);
  c->input_ = Tensor();
  return c;
}

nlohmann::json Linear::describe() const {
  return {{"kind", kind()}, {"name", name()}, {"in", in_}, {"out", out_}};
}

// --------------------------------------------------------- ResidualBlock

ResidualBlock::ResidualBlock(std::string name,
                             std::vector<std::unique_ptr<Layer>> body,
                             std::unique_ptr<Conv2d> shortcut)
    : Layer(std::move(name)),
      body_(std::move(body)),
      shortcut_(std::move(shortcut)) {}

Shape3 ResidualBlock::output_shape(const Shape3& in) const {
  Shape3 s = in;
  for (const auto& l : body_) s = l->output_shape(s);
  const Shape3 skip = shortcut_ ? shortcut_->output_shape(in) : in;
  if (!(s == skip)) {
    throw GraphError(name() + ": body output " + s.str() +
                     " does not match shortcut " + skip.str());
  }
  return s;
}

Tensor ResidualBlock::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& l : body_) h = l->forward(h);
  Tensor skip = shortcut_ ? shortcut_->forward(x) : x;
  if (!h.same_shape(skip)) {
    throw GraphError(name() + ": residual shape mismatch " + h.shape_str() +
                     " vs " + skip.shape_str());
  }
  h += skip;
  for (double& v : h.values()) v = std::max(v, 0.0);
  output_ = h;
  return h;
}

Tensor ResidualBlock::backward(const Tensor& dy) {
  Tensor d = dy;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (output_[i] <= 0.0) d[i] = 0.0;
  }
  Tensor db = d;
  for (auto it = body_.rbegin(); it != body_.rend(); ++it) db = (*it)->backward(db);
  Tensor ds = shortcut_ ? shortcut_->backward(d) : d;
  db += ds;
  return db;
}

void ResidualBlock::collect_params(std::vector<NamedParam>& out) {
  for (auto& l : body_) l->collect_params(out);
  if (shortcut_) shortcut_->collect_params(out);
}

void ResidualBlock::init(std::mt19937_64& rng) {
  for (auto& l : body_) l->init(rng);
  if (shortcut_) shortcut_->init(rng);
}

std::unique_ptr<Layer> ResidualBlock::clone() const {
  std::vector<std::unique_ptr<Layer>> body;
  for (const auto& l : body_) body.push_back(l->clone());
  std::unique_ptr<Conv2d> sc;
  if (shortcut_) {
    sc.reset(static_cast<Conv2d*>(shortcut_->clone().release()));
  }
  return std::make_unique<ResidualBlock>(name(), std::move(body), std::move(sc));
}

nlohmann::json ResidualBlock::describe() const {
  nlohmann::json body = nlohmann::json::array();
  for (const auto& l : body_) body.push_back(l->describe());
  return {{"kind", kind()},
          {"name", name()},
          {"body", body},
          {"shortcut", shortcut_ ? shortcut_->describe() : nlohmann::json()}};
}

void ResidualBlock::for_each_child(const std::function<void(Layer&)>& fn) {
  for (auto& l : body_) {
    fn(*l);
    l->for_each_child(fn);
  }
  if (shortcut_) fn(*shortcut_);
}

// ------------------------------------------------------------------- LAP

nlohmann::json LapConfig::to_json() const {
  return {{"heads", heads},
          {"hidden", hidden},
          {"aggregation", to_string(aggregation)},
          {"alpha_init", alpha_init},
          {"epsilon", epsilon},
          {"selector", selector}};
}

LapConfig LapConfig::from_json(const nlohmann::json& j) {
  LapConfig c;
  c.heads = j.at("heads").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
  c.alpha_init = j.at("alpha_init").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.selector = j.at("selector").get<bool>();
  return c;
}

LapLayerBase::LapLayerBase(std::string name, int in_channels,
                           const LapConfig& cfg)
    : Layer(std::move(name)),
      in_channels_(in_channels),
      cfg_(cfg),
      scoring_(in_channels, cfg.heads, cfg.hidden, cfg.aggregation,
               cfg.alpha_init, cfg.epsilon),
      selector_(in_channels, cfg.heads, cfg.hidden, cfg.aggregation,
                cfg.alpha_init, cfg.epsilon) {}

void LapLayerBase::collect_params(std::vector<NamedParam>& out) {
  for (Param& p : scoring_.scorer.params()) {
    out.push_back({name() + ".scorer." + p.name, &p, name(), true});
  }
  if (cfg_.aggregation == Aggregation::kLinear) {
    add_param(out, scoring_.agg_weight, true);
    add_param(out, scoring_.agg_bias, true);
  }
  add_param(out, scoring_.alpha, true);
  if (cfg_.selector) {
    for (Param& p : selector_.scorer.params()) {
      out.push_back({name() + ".selector." + p.name, &p, name(), true});
    }
  }
}

void LapLayerBase::init(std::mt19937_64& rng) {
  scoring_.scorer.init(rng);
  if (cfg_.selector) selector_.scorer.init(rng);
}

const ConceptMaps& LapLayerBase::selector_maps() const {
  if (!cfg_.selector) {
    throw UsageError(name() + " has no discriminative selector");
  }
  return selector_maps_;
}

void LapLayerBase::add_concept_grad(const Tensor& g) { concept_grad_ += g; }

void LapLayerBase::add_selector_grad(const Tensor& g) {
  if (!cfg_.selector) {
    throw UsageError(name() + " has no discriminative selector");
  }
  selector_grad_ += g;
}

Tensor LapLayerBase::run_forward(const Tensor& x) {
  input_ = x;
  if (cfg_.selector) {
    // The selector sees the same features but is detached from them.
    selector_maps_ = score_pixels(x, selector_, &selector_cache_);
    selector_grad_ = Tensor::like(selector_maps_.per_concept);
  }
  concept_grad_ = Tensor(x.n(), cfg_.heads, x.h(), x.w());
  return x;
}

void LapLayerBase::finish_backward() {
  if (cfg_.selector) {
    score_pixels_backward(input_, selector_, selector_cache_, selector_maps_,
                          selector_grad_, Tensor(), nullptr);
  }
}

LapPool::LapPool(std::string name, int in_channels, const LapConfig& cfg,
                 const KernelSpec& kernel)
    : LapLayerBase(std::move(name), in_channels, cfg), kernel_(kernel) {
  kernel_.validate();
}

Shape3 LapPool::output_shape(const Shape3& in) const {
  if (in.c != in_channels_) {
    throw GraphError(name() + " expects " + std::to_string(in_channels_) +
                     " channels, got " + std::to_string(in.c));
  }
  try {
    return {in.c, kernel_.out_h(in.h), kernel_.out_w(in.w)};
  } catch (const GeometryError& e) {
    throw GraphError(name() + ": " + e.what());
  }
}

Tensor LapPool::forward(const Tensor& x) {
  run_forward(x);
  fwd_ = lap_forward(x, kernel_, scoring_, &cache_);
  return fwd_.out;
}

Tensor LapPool::backward(const Tensor& dy) {
  Tensor dx = lap_forward_backward(input_, kernel_, scoring_, cache_, fwd_, dy,
                                   concept_grad_);
  finish_backward();
  return dx;
}

std::unique_ptr<Layer> LapPool::clone() const {
  auto c = std::make_unique<LapPool>(name(), in_channels_, cfg_, kernel_);
  c->scoring_ = scoring_;
  c->selector_ = selector_;
  return c;
}

nlohmann::json LapPool::describe() const {
  return {{"kind", kind()},
          {"name", name()},
          {"in", in_channels_},
          {"config", cfg_.to_json()},
          {"kernel", kernel_json(kernel_)}};
}

AdaptiveLapPool::AdaptiveLapPool(std::string name, int in_channels,
                                 const LapConfig& cfg, int out_h, int out_w)
    : LapLayerBase(std::move(name), in_channels, cfg),
      out_h_(out_h),
      out_w_(out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ConfigError("invalid adaptive LAP size for " + this->name());
  }
}

Shape3 AdaptiveLapPool::output_shape(const Shape3& in) const {
  if (in.c != in_channels_) {
    throw GraphError(name() + " expects " + std::to_string(in_channels_) +
                     " channels, got " + std::to_string(in.c));
  }
  if (out_h_ > in.h || out_w_ > in.w) {
    throw GraphError(name() + ": adaptive output larger than input " + in.str());
  }
  return {in.c, out_h_, out_w_};
}

Tensor AdaptiveLapPool::forward(const Tensor& x) {
  run_forward(x);
  fwd_ = adaptive_lap(x, out_h_, out_w_, scoring_, &cache_);
  return fwd_.out;
}

Tensor AdaptiveLapPool::backward(const Tensor& dy) {
  Tensor dx = adaptive_lap_backward(input_, out_h_, out_w_, scoring_, cache_,
                                    fwd_, dy, concept_grad_);
  finish_backward();
  return dx;
}

std::unique_ptr<Layer> AdaptiveLapPool::clone() const {
  auto c = std::make_unique<AdaptiveLapPool>(name(), in_channels_, cfg_, out_h_,
                                             out_w_);
  c->scoring_ = scoring_;
  c->selector_ = selector_;
  return c;
}

nlohmann::json AdaptiveLapPool::describe() const {
  return {{"kind", kind()},
          {"name", name()},
          {"in", in_channels_},
          {"config", cfg_.to_json()},
          {"out", {out_h_, out_w_}}};
}

KernelSpec AdaptiveLapPool::window_geometry(const Shape3& in) const {
  if (in.h % out_h_ != 0 || in.w % out_w_ != 0) {
    throw GeometryError(name() + ": adaptive windows over " + in.str() +
                        " are not uniform");
  }
  const int kh = in.h / out_h_;
  const int kw = in.w / out_w_;
  return {kh, kw, kh, kw, 0};
}

// --------------------------------------------------------------- factory

std::unique_ptr<Layer> layer_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const std::string name = j.at("name").get<std::string>();
  if (kind == "conv2d") {
    return std::make_unique<Conv2d>(name, j.at("in"), j.at("out"),
                                    j.at("kernel"), j.at("stride"), j.at("pad"));
  }
  if (kind == "relu") return std::make_unique<Relu>(name);
  if (kind == "maxpool" || kind == "avgpool") {
    return std::make_unique<Pool2d>(
        name, kind == "maxpool" ? Pool2d::Mode::kMax : Pool2d::Mode::kAvg,
        j.at("kernel"), j.at("stride"), j.at("pad"));
  }
  if (kind == "adaptive_avgpool") {
    return std::make_unique<AdaptiveAvgPool2d>(name, j.at("out").at(0),
                                               j.at("out").at(1));
  }
  if (kind == "linear") {
    return std::make_unique<Linear>(name, j.at("in"), j.at("out"));
  }
  if (kind == "residual") {
    std::vector<std::unique_ptr<Layer>> body;
    for (const auto& b : j.at("body")) body.push_back(layer_from_json(b));
    std::unique_ptr<Conv2d> sc;
    if (!j.at("shortcut").is_null()) {
      sc.reset(static_cast<Conv2d*>(layer_from_json(j.at("shortcut")).release()));
    }
    return std::make_unique<ResidualBlock>(name, std::move(body), std::move(sc));
  }
  if (kind == "lap") {
    return std::make_unique<LapPool>(name, j.at("in"),
                                     LapConfig::from_json(j.at("config")),
                                     kernel_from_json(j.at("kernel")));
  }
  if (kind == "adaptive_lap") {
    return std::make_unique<AdaptiveLapPool>(
        name, j.at("in"), LapConfig::from_json(j.at("config")),
        j.at("out").at(0), j.at("out").at(1));
  }
  throw ParseError("unknown layer kind '" + kind + "'");
}

}  // namespace lap
