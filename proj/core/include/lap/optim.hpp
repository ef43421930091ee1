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

#ifndef LAP_OPTIM_HPP_
#define LAP_OPTIM_HPP_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lap/layers.hpp"

namespace lap {

/// First-order optimizer over a fixed list of parameters. The learning rate
/// decays as lr / (1 + decay * step).
class Optimizer {
 public:
  Optimizer(double lr, double decay) : lr_(lr), decay_(decay) {}
  virtual ~Optimizer() = default;
  void step(const std::vector<NamedParam>& params);
  double current_lr() const { return lr_ / (1.0 + decay_ * step_); }

 protected:
  virtual void update(Param& p, double lr) = 0;
  long step_ = 0;

 private:
  double lr_;
  double decay_;
};

class Adam : public Optimizer {
 public:
  Adam(double lr, double decay = 0.0, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

 protected:
  void update(Param& p, double lr) override;

 private:
  double beta1_, beta2_, eps_;
  std::map<const Param*, std::pair<Tensor, Tensor>> moments_;
};

class Sgd : public Optimizer {
 public:
  Sgd(double lr, double decay = 0.0, double momentum = 0.0);

 protected:
  void update(Param& p, double lr) override;

 private:
  double momentum_;
  std::map<const Param*, Tensor> velocity_;
};

/// "adam" or "sgd"; throws ConfigError otherwise.
std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, double lr,
                                          double decay);

}  // namespace lap

#endif  // LAP_OPTIM_HPP_
