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

#ifndef LAP_APP_PIPELINE_HPP_
#define LAP_APP_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "app/config.hpp"
#include "lap/interpret.hpp"
#include "lap/network.hpp"

namespace lap::app {

struct Dataset {
  SynthSplit train, val, test;
  Normalization norm;  // fitted on train
};

Dataset generate_dataset(const AppConfig& cfg);
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

/// Desk-scale CNN from [model], LAPs placed on lap_targets. With
/// base_checkpoint the backbone weights come from that file instead of
/// being initialized from `seed`.
Network build_model(const AppConfig& cfg, std::uint64_t seed);

TrainOptions train_options(const AppConfig& cfg, std::uint64_t seed, bool verbose);

struct TrainOutcome {
  Network net;
  TrainReport report;
};

TrainOutcome train_model(const AppConfig& cfg, const Dataset& ds, std::uint64_t seed,
                         bool verbose = false);

/// Runs `net` over `data` in chunks and hands every sample's stack and
/// predicted class to `fn`. Stacks are not kept.
void for_each_stack(
    Network& net, const LabeledData& data, double decay_alpha,
    const std::function<void(int index, const InterpretationStack&, int pred)>& fn);

struct LapMetrics {
  double presence_predictivity = 0.0;
  double presence_faithfulness = 0.0;
  double probe_predictivity = 0.0;
  double probe_faithfulness = 0.0;
};

struct CurveRow {
  double k = 0.0;
  double lap = 0.0;         // images predicted as the concept's class
  double random = 0.0;
  double lap_all = 0.0;     // every test image
  double random_all = 0.0;
};

struct EvalReport {
  ClassificationMetrics test;
  std::vector<LapMetrics> laps;
  int positives = 0;
  double threshold = 0.0;
  int threshold_iterations = 0;
  double iou_threshold = 0.0;
  double iou_top_scored = 0.0;
  double iou_random = 0.0;
  int curve_images = 0;
  std::vector<CurveRow> curve;
  /// Only with external maps.
  bool has_external = false;
  double external_iou_top_scored = 0.0;
  std::vector<CurvePoint> external_curve;
};

/**
 * Classification metrics on the test split; with LAPs also per-LAP
 * predictivity/faithfulness, the global threshold (fit on validation
 * positives), IoU on test positives and keep-k curves. `external` holds
 * optional third-party score maps for the test split.
 */
EvalReport evaluate_model(Network& net, const AppConfig& cfg, const Dataset& ds,
                          std::uint64_t seed,
                          const std::vector<Map2d>* external = nullptr);

/// Flat "key = value" text, one metric per line, fixed formatting.
std::string format_report(const EvalReport& r);
/// Header: k,lap_top1,random_top1,lap_top1_all,random_top1_all
std::string format_curve_csv(const EvalReport& r);

/// Generate, train and evaluate in memory; returns format_report().
std::string run_pipeline(const AppConfig& cfg);

}  // namespace lap::app

#endif  // LAP_APP_PIPELINE_HPP_
