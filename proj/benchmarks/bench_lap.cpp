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

#include <random>

#include <benchmark/benchmark.h>

#include "lap/interpret.hpp"
#include "lap/lap_pool.hpp"

namespace {

lap::Tensor random_input(int n, int c, int size, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  lap::Tensor t(n, c, size, size);
  for (double& v : t.values()) v = d(rng);
  return t;
}

// args: channels, spatial size
void BM_LapForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int size = static_cast<int>(state.range(1));
  std::mt19937_64 rng(1);
  const lap::Tensor x = random_input(16, c, size, rng);
  lap::ScoringParams sp(c, 2, 0, lap::Aggregation::kMax);
  sp.scorer.init(rng);
  const lap::KernelSpec k = lap::KernelSpec::square(2, 2);
  for (auto _ : state) benchmark::DoNotOptimize(lap::lap_forward(x, k, sp));
  state.SetItemsProcessed(state.iterations() * x.size());
}
BENCHMARK(BM_LapForward)->Args({16, 32})->Args({32, 16})->Args({64, 8});

void BM_LapForwardBackward(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const lap::Tensor x = random_input(16, 16, 32, rng);
  lap::ScoringParams sp(16, 2, 8, lap::Aggregation::kSum);
  sp.scorer.init(rng);
  const lap::KernelSpec k = lap::KernelSpec::square(2, 2);
  for (auto _ : state) {
    lap::ScoreCache cache;
    const lap::LapResult r = lap::lap_forward(x, k, sp, &cache);
    benchmark::DoNotOptimize(
        lap::lap_forward_backward(x, k, sp, cache, r, r.out, r.maps.per_concept));
  }
}
BENCHMARK(BM_LapForwardBackward);

lap::InterpretationStack make_stack(int input, int depth) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  lap::InterpretationStack s;
  s.input_h = s.input_w = input;
  for (int l = 0, size = input / 2; l < depth; ++l, size /= 2) {
    lap::StackLevel level;
    level.aggregated = lap::Map2d(size, size);
    for (double& v : level.aggregated.data) v = u(rng);
    level.concepts = {level.aggregated};
    level.kernel = lap::KernelSpec::square(2, 2);
    s.levels.push_back(std::move(level));
  }
  return s;
}

// args: input size
void BM_IntegrateStack(benchmark::State& state) {
  const lap::InterpretationStack s = make_stack(static_cast<int>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(lap::integrate_stack(s, 0));
}
BENCHMARK(BM_IntegrateStack)->Arg(64)->Arg(128)->Arg(256);

void BM_TopkVariant(benchmark::State& state) {
  const int input = static_cast<int>(state.range(0));
  const lap::InterpretationStack s = make_stack(input, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lap::integrate_topk_variant(s, 0, input * input / 10));
  }
}
BENCHMARK(BM_TopkVariant)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
