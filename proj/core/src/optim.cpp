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

#include "lap/optim.hpp"

#include <cmath>

#include "lap/errors.hpp"

namespace lap {

void Optimizer::step(const std::vector<NamedParam>& params) {
  const double lr = current_lr();
  ++step_;
  for (const NamedParam& p : params) update(*p.param, lr);
}

Adam::Adam(double lr, double decay, double beta1, double beta2, double eps)
    : Optimizer(lr, decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::update(Param& p, double lr) {
  auto it = moments_.find(&p);
  if (it == moments_.end()) {
    it = moments_
             .emplace(&p, std::make_pair(Tensor::like(p.value),
                                         Tensor::like(p.value)))
             .first;
  }
  Tensor& m = it->second.first;
  Tensor& v = it->second.second;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad[i];
    m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
    v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
    p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
  }
}

Sgd::Sgd(double lr, double decay, double momentum)
    : Optimizer(lr, decay), momentum_(momentum) {}

void Sgd::update(Param& p, double lr) {
  auto it = velocity_.find(&p);
  if (it == velocity_.end()) {
    it = velocity_.emplace(&p, Tensor::like(p.value)).first;
  }
  Tensor& vel = it->second;
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    vel[i] = momentum_ * vel[i] + p.grad[i];
    p.value[i] -= lr * vel[i];
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, double lr,
                                          double decay) {
  if (!(lr > 0.0) || decay < 0.0) {
    throw ConfigError("learning rate must be positive and decay non-negative");
  }
  if (kind == "adam") return std::make_unique<Adam>(lr, decay);
  if (kind == "sgd") return std::make_unique<Sgd>(lr, decay);
  throw ConfigError("unknown optimizer '" + kind + "' (expected adam|sgd)");
}

}  // namespace lap
