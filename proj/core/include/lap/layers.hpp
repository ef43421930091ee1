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

#ifndef LAP_LAYERS_HPP_
#define LAP_LAYERS_HPP_

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lap/lap_pool.hpp"
#include "lap/tensor.hpp"

namespace lap {

/// A parameter together with its fully qualified name ("block1.conv.weight").
struct NamedParam {
  std::string name;
  Param* param;
  std::string owner;  // name of the owning layer
  bool lap_owned;     // true for scorer/aggregation/alpha/selector params
};

/**
 * @brief One node of a sequential layer graph with a hand-written backward.
 *
 * forward() caches whatever backward() needs; backward() must be called at
 * most once after each forward() and accumulates parameter gradients.
 */
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual std::string kind() const = 0;
  virtual Shape3 output_shape(const Shape3& in) const = 0;

  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;

  virtual void collect_params(std::vector<NamedParam>& out) { (void)out; }
  virtual void init(std::mt19937_64& rng) { (void)rng; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual nlohmann::json describe() const = 0;
  /// Visits nested layers, depth first. Leaves visit nothing.
  virtual void for_each_child(const std::function<void(Layer&)>& fn) {
    (void)fn;
  }

 protected:
  void add_param(std::vector<NamedParam>& out, Param& p, bool lap = false) {
    out.push_back({name_ + "." + p.name, &p, name_, lap});
  }

 private:
  std::string name_;
};

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int in, int out, int kernel, int stride = 1,
         int pad = 0);

  std::string kind() const override { return "conv2d"; }
  Shape3 output_shape(const Shape3& in) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<NamedParam>& out) override;
  void init(std::mt19937_64& rng) override;
  std::unique_ptr<Layer> clone() const override;
  nlohmann::json describe() const override;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  /// Copy with a different stride and name; weights are shared by value.
  std::unique_ptr<Conv2d> with_stride(std::string name, int stride) const;

 private:
  int in_, out_, kernel_, stride_, pad_;
  Param weight_;
  Param bias_;
  Tensor input_;
};

class Relu : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "relu"; }
  Shape3 output_shape(const Shape3& in) const override { return in; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  std::unique_ptr<Layer> clone() const override;
  nlohmann::json describe() const override;

 private:
  Tensor output_;
};

/// Max or average pooling over a sliding window. Average pooling counts
/// padded positions in the divisor.
class Pool2d : public Layer {
 public:
  enum class Mode { kMax, kAvg };
  Pool2d(std::string name, Mode mode, int kernel, int stride, int pad = 0);

  std::string kind() const override {
    return mode_ == Mode::kMax ? "maxpool" : "avgpool";
  }
  Shape3 output_shape(const Shape3& in) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  std::unique_ptr<Layer> clone() const override;
  nlohmann::json describe() const override;

  Mode mode() const { return mode_; }
  KernelSpec kernel() const { return KernelSpec::square(kernel_, stride_, pad_); }

 private:
  Mode mode_;
  int kernel_, stride_, pad_;
  Shape3 in_shape_;
  int batch_ = 0;
  std::vector<int> argmax_;
};

class AdaptiveAvgPool2d : public Layer {
 public:
  AdaptiveAvgPool2d(std::string name, int out_h, int out_w);

  std::string kind() const override { return "adaptive_avgpool"; }
  Shape3 output_shape(const Shape3& in) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  std::unique_ptr<Layer> clone() const override;
  nlohmann::json describe() const override;

  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }

 private:
  int out_h_, out_w_;
  Shape3 in_shape_;
  int batch_ = 0;
};

/// Fully connected layer over the flattened C*H*W sample; output is
/// (N, out, 1, 1).
class Linear : public Layer {
 public:
  Linear(std::string name, int in, int out);

  std::string kind() const override { return "linear"; }
  Shape3 output_shape(const Shape3& in) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<NamedParam>& out) override;
  void init(std::mt19937_64& rng) override;
  std::unique_ptr<Layer> clone() const override;
  nlohmann::json describe() const override;

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  int in_, out_;
  Param weight_;
  Param bias_;
  Tensor input_;
};

/// relu(body(x) + shortcut(x)); the shortcut is identity when absent.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(std::string name, std::vector<std::unique_ptr<Layer>> body,
                std::unique_ptr<Conv2d> shortcut = nullptr);

  std::string kind() const override { return "residual"; }
  Shape3 output_shape(const Shape3& in) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<NamedParam>& out) override;
  void init(std::mt19937_64& rng) override;
  std::unique_ptr<Layer> clone() const override;
  nlohmann::json describe() const override;
  void for_each_child(const std::function<void(Layer&)>& fn) override;

  std::vector<std::unique_ptr<Layer>>& body() { return body_; }
  Conv2d* shortcut() { return shortcut_.get(); }

 private:
  std::vector<std::unique_ptr<Layer>> body_;
  std::unique_ptr<Conv2d> shortcut_;
  Tensor output_;
};

/// Hyper-parameters of one LAP module.
struct LapConfig {
  int heads = 1;
  int hidden = 0;
  Aggregation aggregation = Aggregation::kMax;
  double alpha_init = 4.0;
  double epsilon = 1e-4;
  /// Adds a detached discriminative scorer of identical architecture.
  bool selector = true;

  nlohmann::json to_json() const;
  static LapConfig from_json(const nlohmann::json& j);
};

/**
 * @brief Shared state of the fixed-kernel and adaptive LAP layers.
 *
 * After forward() the concept maps of the last batch stay available.
 * Loss code adds gradients w.r.t. those maps through add_concept_grad() /
 * add_selector_grad() before Network::backward(). Selector gradients never
 * reach the layer input.
 */
class LapLayerBase : public Layer {
 public:
  LapLayerBase(std::string name, int in_channels, const LapConfig& cfg);

  void collect_params(std::vector<NamedParam>& out) override;
  void init(std::mt19937_64& rng) override;

  const LapConfig& config() const { return cfg_; }
  int in_channels() const { return in_channels_; }
  ScoringParams& scoring() { return scoring_; }
  const ScoringParams& scoring() const { return scoring_; }
  bool has_selector() const { return cfg_.selector; }
  ScoringParams& selector() { return selector_; }

  /// Maps from the last forward pass.
  const ConceptMaps& maps() const { return fwd_.maps; }
  const ConceptMaps& selector_maps() const;
  const Tensor& last_input() const { return input_; }

  void add_concept_grad(const Tensor& g);
  void add_selector_grad(const Tensor& g);

  /// Fixed window geometry used to relate this map to the next LAP's map.
  virtual KernelSpec window_geometry(const Shape3& in) const = 0;

 protected:
  Tensor run_forward(const Tensor& x);
  void finish_backward();

  int in_channels_;
  LapConfig cfg_;
  ScoringParams scoring_;
  ScoringParams selector_;
  Tensor input_;
  ScoreCache cache_;
  LapResult fwd_;
  ScoreCache selector_cache_;
  ConceptMaps selector_maps_;
  Tensor concept_grad_;
  Tensor selector_grad_;
};

class LapPool : public LapLayerBase {
 public:
  LapPool(std::string name, int in_channels, const LapConfig& cfg,
          const KernelSpec& kernel);

  std::string kind() const override { return "lap"; }
  Shape3 output_shape(const Shape3& in) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  std::unique_ptr<Layer> clone() const override;
  nlohmann::json describe() const override;
  KernelSpec window_geometry(const Shape3&) const override { return kernel_; }

  const KernelSpec& kernel() const { return kernel_; }

 private:
  KernelSpec kernel_;
};

class AdaptiveLapPool : public LapLayerBase {
 public:
  AdaptiveLapPool(std::string name, int in_channels, const LapConfig& cfg,
                  int out_h, int out_w);

  std::string kind() const override { return "adaptive_lap"; }
  Shape3 output_shape(const Shape3& in) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& dy) override;
  std::unique_ptr<Layer> clone() const override;
  nlohmann::json describe() const override;
  /// Only meaningful when the input divides evenly into the output grid.
  KernelSpec window_geometry(const Shape3& in) const override;

  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }

 private:
  int out_h_, out_w_;
};

/// Rebuilds a layer (and its children) from describe() output. Parameters
/// are zero; load them separately.
std::unique_ptr<Layer> layer_from_json(const nlohmann::json& j);

}  // namespace lap

#endif  // LAP_LAYERS_HPP_
