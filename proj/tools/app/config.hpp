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

#ifndef LAP_APP_CONFIG_HPP_
#define LAP_APP_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lap/evaluate.hpp"
#include "lap/losses.hpp"
#include "lap/surgery.hpp"
#include "lap/synth_data.hpp"

namespace lap::app {

struct ModelSection {
  std::vector<int> channels;
  std::string pool;                  // "max" | "avg"
  std::vector<std::string> lap_targets;
  LapConfig lap;
  std::optional<std::filesystem::path> base_checkpoint;
};

struct LossSection {
  Supervision supervision = Supervision::kWeak;
  DiscLossConfig disc;
  bool concordance = true;
  LossWeights weights;
};

struct TrainSection {
  int batch_size = 32;
  std::vector<Stage> stages;
};

struct InterpretSection {
  double decay_alpha = 0.8;
  int concept_id = 0;
  int png_count = 0;
};

/// Every key of the schema is required; see README for the table.
struct AppConfig {
  std::uint64_t seed = 0;
  SynthSpec data;
  ModelSection model;
  LossSection loss;
  TrainSection train;
  InterpretSection interpret;
  RidgeOptions ridge;
  std::vector<double> keep_ratios;

  /// The same config without LAPs and auxiliary losses: the vanilla twin.
  AppConfig vanilla_twin() const;
};

/// Throws ConfigError listing every missing, unknown or invalid key.
AppConfig parse_config(std::istream& in, const std::string& source);
AppConfig load_config(const std::filesystem::path& path);

}  // namespace lap::app

#endif  // LAP_APP_CONFIG_HPP_
