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

#include "lap/network.hpp"

#include <random>

#include "lap/errors.hpp"

namespace lap {

Network::Network(Shape3 input) : input_(input) {}

Network::Network(const Network& other) : input_(other.input_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Network& Network::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Shape3 Network::output_shape() const {
  Shape3 s = input_;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

std::vector<Shape3> Network::layer_input_shapes() const {
  std::vector<Shape3> out;
  Shape3 s = input_;
  for (const auto& l : layers_) {
    out.push_back(s);
    s = l->output_shape(s);
  }
  return out;
}

Tensor Network::forward(const Tensor& x) {
  if (!(x.sample_shape() == input_)) {
    throw GraphError("network expects input " + input_.str() + ", got " +
                     x.sample_shape().str());
  }
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h);
  return h;
}

Tensor Network::backward(const Tensor& dy) {
  Tensor d = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    d = (*it)->backward(d);
  }
  return d;
}

std::vector<NamedParam> Network::params() {
  std::vector<NamedParam> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (const NamedParam& p : params()) n += p.param->value.size();
  return n;
}

void Network::zero_grad() {
  for (NamedParam& p : params()) p.param->zero_grad();
}

void Network::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& l : layers_) l->init(rng);
}

std::vector<LapLayerBase*> Network::lap_layers() {
  std::vector<LapLayerBase*> out;
  auto visit = [&out](Layer& l) {
    if (auto* lap = dynamic_cast<LapLayerBase*>(&l)) out.push_back(lap);
  };
  for (auto& l : layers_) {
    visit(*l);
    l->for_each_child(visit);
  }
  return out;
}

Layer* Network::find(const std::string& name) {
  Layer* found = nullptr;
  auto visit = [&](Layer& l) {
    if (found == nullptr && l.name() == name) found = &l;
  };
  for (auto& l : layers_) {
    visit(*l);
    l->for_each_child(visit);
  }
  return found;
}

nlohmann::json Network::describe() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) layers.push_back(l->describe());
  return {{"input", {input_.c, input_.h, input_.w}}, {"layers", layers}};
}

Network Network::from_description(const nlohmann::json& j) {
  const auto& in = j.at("input");
  Network net({in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()});
  for (const auto& l : j.at("layers")) net.add(layer_from_json(l));
  net.output_shape();
  return net;
}

Network make_simple_cnn(const SimpleCnnSpec& spec) {
  if (spec.channels.size() != 3) {
    throw ConfigError("simple CNN needs exactly three channel widths");
  }
  if (spec.pool != "max" && spec.pool != "avg") {
    throw ConfigError("pool must be max or avg, got '" + spec.pool + "'");
  }
  const auto mode = spec.pool == "max" ? Pool2d::Mode::kMax : Pool2d::Mode::kAvg;
  Network net({spec.in_channels, spec.image_size, spec.image_size});
  int in = spec.in_channels;
  for (int b = 0; b < 3; ++b) {
    const std::string block = "block" + std::to_string(b + 1);
    net.emplace<Conv2d>(block + ".conv", in, spec.channels[b], 3, 1, 1);
    net.emplace<Relu>(block + ".relu");
    if (b < 2) {
      net.emplace<Pool2d>(block + ".pool", mode, 2, 2, 0);
    } else {
      net.emplace<AdaptiveAvgPool2d>(block + ".gap", 1, 1);
    }
    in = spec.channels[b];
  }
  net.emplace<Linear>("head", in, spec.classes);
  net.output_shape();
  return net;
}

}  // namespace lap
