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

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "lap/errors.hpp"
#include "lap/network.hpp"
#include "lap/surgery.hpp"
#include "lap/synth_data.hpp"
#include "support/test_util.hpp"

namespace lap {
namespace {

using testing::random_tensor;

Network desk_cnn(const std::string& pool = "max", int size = 16) {
  SimpleCnnSpec spec;
  spec.image_size = size;
  spec.pool = pool;
  Network net = make_simple_cnn(spec);
  net.init(5);
  return net;
}

PlacementSpec two_laps() {
  PlacementSpec spec;
  spec.placements = {{"block1.pool", LapConfig{}, std::nullopt},
                     {"block2.pool", LapConfig{}, std::nullopt}};
  spec.seed = 9;
  return spec;
}

std::map<std::string, Tensor> snapshot(Network& net, bool lap_owned) {
  std::map<std::string, Tensor> out;
  for (const NamedParam& p : net.params()) {
    if (p.lap_owned == lap_owned) out[p.name] = p.param->value;
  }
  return out;
}

void expect_identical(const std::map<std::string, Tensor>& a,
                      const std::map<std::string, Tensor>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, t] : a) {
    ASSERT_TRUE(b.count(name)) << name;
    const Tensor& u = b.at(name);
    ASSERT_TRUE(t.same_shape(u)) << name;
    for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(t[i], u[i]) << name << "[" << i << "]";
  }
}

// Conv(stride 2) network for the strided replacement mode.
Network strided_net(int size) {
  Network net({1, size, size});
  net.emplace<Conv2d>("down", 1, 4, 3, 2, 1);
  net.emplace<Relu>("relu");
  net.emplace<AdaptiveAvgPool2d>("gap", 1, 1);
  net.emplace<Linear>("head", 4, 2);
  net.init(3);
  return net;
}

LabeledData tiny_data(std::uint64_t seed, int n) {
  SynthSpec s;
  s.image_size = 16;
  s.n_train = n;
  s.n_val = 2;
  s.n_test = 2;
  s.radius_min = 2;
  s.radius_max = 3;
  s.seed = seed;
  const SynthDataset ds = generate(s);
  return to_labeled(ds.train, fit_normalization(ds.train));
}

TrainOptions weak_options(std::uint64_t seed) {
  TrainOptions o;
  o.batch_size = 8;
  o.seed = seed;
  o.disc = {DiscLossConfig::uniform(1, 0.05, 0.1, 0.05)};
  return o;
}

// ---------------------------------------------------------- extension

TEST(ExtendArchitecture, EmptySpecLeavesGraphUnchanged) {
  Network base = desk_cnn();
  Network ext = extend_architecture(base, PlacementSpec{});
  EXPECT_EQ(ext.describe(), base.describe());
  expect_identical(snapshot(base, false), snapshot(ext, false));
  EXPECT_TRUE(snapshot(ext, true).empty());
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(2, 1, 16, 16, rng);
  const Tensor a = base.forward(x);
  const Tensor b = ext.forward(x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(ExtendArchitecture, ConstantScorerMatchesAveragePoolVariant) {
  Network base = desk_cnn("max");
  Network avg = desk_cnn("avg");
  expect_identical(snapshot(base, false), snapshot(avg, false));
  Network ext = extend_architecture(base, two_laps());
  for (LapLayerBase* l : ext.lap_layers()) l->scoring().scorer.zero();
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor(3, 1, 16, 16, rng);
  const Tensor a = ext.forward(x);
  const Tensor b = avg.forward(x);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-9 * std::max(1.0, std::abs(b[i])));
  }
}

TEST(ExtendArchitecture, PoolKeepsNameAndOutputShape) {
  Network base = desk_cnn();
  Network ext = extend_architecture(base, two_laps());
  ASSERT_EQ(ext.lap_layers().size(), 2u);
  EXPECT_EQ(ext.lap_layers()[0]->name(), "block1.pool");
  EXPECT_EQ(ext.lap_layers()[1]->name(), "block2.pool");
  EXPECT_EQ(ext.output_shape(), base.output_shape());
  const auto a = base.layer_input_shapes();
  const auto b = ext.layer_input_shapes();
  EXPECT_EQ(a, b);
}

TEST(ExtendArchitecture, StridedConvBecomesStrideOneConvPlusLap) {
  Network base = strided_net(8);
  PlacementSpec spec;
  spec.placements = {{"down", LapConfig{}, std::nullopt}};
  Network ext = extend_architecture(base, spec);
  auto* conv = dynamic_cast<Conv2d*>(ext.find("down"));
  ASSERT_NE(conv, nullptr);
  EXPECT_EQ(conv->stride(), 1);
  auto* lap = dynamic_cast<LapPool*>(ext.find("down.lap"));
  ASSERT_NE(lap, nullptr);
  EXPECT_EQ(lap->kernel(), KernelSpec::square(2, 2));
  const Shape3 before = base.layer_input_shapes()[1];
  const Shape3 after = ext.layer_input_shapes()[2];
  EXPECT_EQ(before, after);
  EXPECT_EQ(ext.output_shape(), base.output_shape());
  expect_identical(snapshot(base, false), snapshot(ext, false));
}

TEST(ExtendArchitecture, AdaptivePoolBecomesAdaptiveLap) {
  Network base = desk_cnn();
  PlacementSpec spec;
  spec.placements = {{"block3.gap", LapConfig{}, std::nullopt}};
  Network ext = extend_architecture(base, spec);
  auto* lap = dynamic_cast<AdaptiveLapPool*>(ext.find("block3.gap"));
  ASSERT_NE(lap, nullptr);
  EXPECT_EQ(lap->out_h(), 1);
  EXPECT_EQ(ext.output_shape(), base.output_shape());
}

TEST(ExtendArchitecture, BadTargetsAreSpecErrors) {
  Network base = desk_cnn();
  PlacementSpec missing;
  missing.placements = {{"block9.pool", LapConfig{}, std::nullopt}};
  EXPECT_THROW(extend_architecture(base, missing), SpecError);
  PlacementSpec relu;
  relu.placements = {{"block1.relu", LapConfig{}, std::nullopt}};
  EXPECT_THROW(extend_architecture(base, relu), SpecError);
  PlacementSpec wrong_mode;
  wrong_mode.placements = {{"block1.pool", LapConfig{}, ReplaceMode::kStridedConv}};
  EXPECT_THROW(extend_architecture(base, wrong_mode), SpecError);
}

TEST(ExtendArchitecture, ShapeBreakIsGraphError) {
  // 7x7: stride-2 conv gives 4x4, stride-1 conv + 2x2/2 window gives 3x3.
  Network base = strided_net(7);
  PlacementSpec spec;
  spec.placements = {{"down", LapConfig{}, std::nullopt}};
  EXPECT_THROW(extend_architecture(base, spec), GraphError);
}

TEST(ExtendArchitecture, AddedParametersAreLapOwnedOnly) {
  Network base = desk_cnn();
  Network ext = extend_architecture(base, two_laps());
  std::size_t lap_params = 0;
  for (const NamedParam& p : ext.params()) {
    if (p.lap_owned) lap_params += p.param->value.size();
  }
  EXPECT_GT(lap_params, 0u);
  EXPECT_EQ(ext.parameter_count(), base.parameter_count() + lap_params);
  std::set<std::string> a, b;
  for (const NamedParam& p : base.params()) a.insert(p.name);
  for (const NamedParam& p : ext.params()) {
    if (!p.lap_owned) b.insert(p.name);
  }
  EXPECT_EQ(a, b);
}

TEST(ExtendArchitecture, UpstreamActivationsUnchanged) {
  Network base = desk_cnn();
  Network ext = extend_architecture(base, two_laps());
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor(2, 1, 16, 16, rng);
  ext.forward(x);
  Tensor h = x;
  for (auto& layer : base.layers()) {
    if (layer->name() == "block1.pool") break;
    h = layer->forward(h);
  }
  const Tensor& seen = ext.lap_layers()[0]->last_input();
  ASSERT_TRUE(seen.same_shape(h));
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(seen[i], h[i]);
}

TEST(ExtendArchitecture, SourceGraphIsNotModified) {
  Network base = desk_cnn();
  const auto before = base.describe();
  const auto params = snapshot(base, false);
  extend_architecture(base, two_laps());
  EXPECT_EQ(base.describe(), before);
  expect_identical(params, snapshot(base, false));
}

// ---------------------------------------------------------------- stages

TEST(SelectParams, Patterns) {
  Network ext = extend_architecture(desk_cnn(), two_laps());
  const std::vector<std::string> lap{"lap"};
  for (const NamedParam& p : select_params(ext, lap)) EXPECT_TRUE(p.lap_owned) << p.name;
  const std::vector<std::string> head{"head"};
  const auto h = select_params(ext, head);
  ASSERT_EQ(h.size(), 2u);
  for (const NamedParam& p : h) EXPECT_EQ(p.owner, "head");
  const std::vector<std::string> all{"all"};
  EXPECT_EQ(select_params(ext, all).size(), ext.params().size());
  // A prefix must end at a name boundary.
  const std::vector<std::string> partial{"bloc"};
  EXPECT_THROW(select_params(ext, partial), ConfigError);
  const std::vector<std::string> none{};
  EXPECT_THROW(select_params(ext, none), ConfigError);
}

TEST(PlugInRecipe, LapOnlyThenBlockAndHead) {
  const auto stages = plug_in_recipe("block2", "head", 3, 2);
  ASSERT_EQ(stages.size(), 2u);
  EXPECT_EQ(stages[0].trainable, std::vector<std::string>{"lap"});
  EXPECT_EQ(stages[0].epochs, 3);
  EXPECT_EQ(stages[1].trainable, (std::vector<std::string>{"block2", "head"}));
  EXPECT_EQ(stages[1].epochs, 2);
}

TEST(StagedTraining, FrozenBackboneIsBitIdentical) {
  Network net = extend_architecture(desk_cnn(), two_laps());
  const LabeledData data = tiny_data(11, 16);
  const auto backbone = snapshot(net, false);
  const auto lap_before = snapshot(net, true);
  const std::vector<Stage> stages{{"lap", {"lap"}, "adam", 1e-2, 0.0, 2}};
  staged_training(net, stages, data, weak_options(1));
  expect_identical(backbone, snapshot(net, false));
  bool moved = false;
  for (const auto& [name, t] : snapshot(net, true)) {
    for (std::size_t i = 0; i < t.size(); ++i) moved |= t[i] != lap_before.at(name)[i];
  }
  EXPECT_TRUE(moved);
}

TEST(StagedTraining, HeadOnlyStageFreezesEverythingElse) {
  Network net = extend_architecture(desk_cnn(), two_laps());
  const LabeledData data = tiny_data(12, 16);
  std::map<std::string, Tensor> rest;
  for (const NamedParam& p : net.params()) {
    if (p.owner != "head") rest[p.name] = p.param->value;
  }
  const std::vector<Stage> stages{{"head", {"head"}, "sgd", 1e-2, 0.0, 1}};
  staged_training(net, stages, data, weak_options(2));
  std::map<std::string, Tensor> after;
  for (const NamedParam& p : net.params()) {
    if (p.owner != "head") after[p.name] = p.param->value;
  }
  expect_identical(rest, after);
}

TEST(StagedTraining, EmptyTrainableSetIsConfigError) {
  Network net = desk_cnn();
  const LabeledData data = tiny_data(13, 8);
  const std::vector<Stage> stages{{"x", {"lap"}, "adam", 1e-3, 0.0, 1}};
  TrainOptions o = weak_options(3);
  o.supervision = Supervision::kNone;
  EXPECT_THROW(staged_training(net, stages, data, o), ConfigError);
}

TEST(StagedTraining, TwoStageRecipeRunsEndToEnd) {
  Network net = extend_architecture(desk_cnn(), two_laps());
  const LabeledData train = tiny_data(14, 16);
  const LabeledData val = tiny_data(15, 8);
  const auto stages = plug_in_recipe("block2", "head", 1, 1);
  const TrainReport r = staged_training(net, stages, train, weak_options(4), &val);
  ASSERT_EQ(r.epochs.size(), 2u);
  EXPECT_EQ(r.epochs[0].stage, 0);
  EXPECT_EQ(r.epochs[1].stage, 1);
  for (const EpochLog& e : r.epochs) {
    EXPECT_TRUE(std::isfinite(e.total_loss));
    EXPECT_GE(e.val_balanced_accuracy, 0.0);
  }
}

TEST(StagedTraining, LapOnlyTaskLossMostlyNonIncreasing) {
  constexpr int kSeeds = 10;
  int monotone = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    Network net = extend_architecture(desk_cnn("max", 16), two_laps());
    const LabeledData data = tiny_data(100 + seed, 32);
    const std::vector<Stage> stages{{"lap", {"lap"}, "adam", 1e-3, 0.0, 4}};
    const TrainReport r = staged_training(net, stages, data, weak_options(seed));
    bool ok = true;
    for (std::size_t e = 1; e < r.epochs.size(); ++e) {
      ok &= r.epochs[e].task_loss <= r.epochs[e - 1].task_loss;
    }
    monotone += ok ? 1 : 0;
  }
  EXPECT_GE(monotone, 9) << monotone << " of " << kSeeds << " seeds non-increasing";
}

TEST(ForwardBackward, ReportsPerLapAndPairLosses) {
  Network net = extend_architecture(desk_cnn(), two_laps());
  const LabeledData data = tiny_data(16, 8);
  const StepLosses s = forward_backward(net, data, weak_options(5));
  EXPECT_EQ(s.per_lap.size(), 2u);
  EXPECT_EQ(s.per_pair.size(), 1u);
  EXPECT_NEAR(s.total, combine_losses(s.task, s.per_lap, s.per_pair, LossWeights{}), 1e-12);
}

}  // namespace
}  // namespace lap
