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

#ifndef LAP_NETWORK_HPP_
#define LAP_NETWORK_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lap/layers.hpp"
#include "lap/tensor.hpp"

namespace lap {

/**
 * @brief The layer graph: a flat ordered list of layers, where residual
 * blocks are composites holding their own body.
 *
 * The network owns its layers; copies are deep (parameters included).
 */
class Network {
 public:
  explicit Network(Shape3 input = {});
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  Network& add(std::unique_ptr<Layer> layer);
  template <typename T, typename... Args>
  T& emplace(Args&&... args) {
    auto l = std::make_unique<T>(std::forward<Args>(args)...);
    T& ref = *l;
    add(std::move(l));
    return ref;
  }

  const Shape3& input_shape() const { return input_; }
  /// Chains output_shape() through every layer; throws GraphError.
  Shape3 output_shape() const;
  /// Input shape seen by each top-level layer, in order.
  std::vector<Shape3> layer_input_shapes() const;

  Tensor forward(const Tensor& x);
  /// Backpropagates from the output gradient; returns the input gradient.
  Tensor backward(const Tensor& dy);

  std::vector<NamedParam> params();
  std::size_t parameter_count();
  void zero_grad();
  /// Deterministic initialization of every parameter from `seed`.
  void init(std::uint64_t seed);

  /// LAP layers in forward order, descending into residual blocks.
  std::vector<LapLayerBase*> lap_layers();
  /// Finds a layer by name at any depth; nullptr when absent.
  Layer* find(const std::string& name);

  std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  nlohmann::json describe() const;
  static Network from_description(const nlohmann::json& j);

 private:
  Shape3 input_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Architecture of the desk-scale classifier: three conv blocks, the first
/// two ending in a 2x2/2 pool, the last in a global average pool, then a
/// linear head.
struct SimpleCnnSpec {
  int image_size = 64;
  int in_channels = 1;
  std::vector<int> channels{8, 16, 16};
  int classes = 2;
  /// "max" or "avg" for the two downsampling pools.
  std::string pool = "max";
};

/// Layer names: block{1,2,3}.conv, block{1,2,3}.relu, block{1,2}.pool,
/// block3.gap, head.
Network make_simple_cnn(const SimpleCnnSpec& spec);

}  // namespace lap

#endif  // LAP_NETWORK_HPP_
