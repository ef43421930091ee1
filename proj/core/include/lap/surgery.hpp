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

#ifndef LAP_SURGERY_HPP_
#define LAP_SURGERY_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lap/layers.hpp"
#include "lap/losses.hpp"
#include "lap/network.hpp"

namespace lap {

enum class ReplaceMode {
  kPool,          // max/avg pool -> LAP with the pool's geometry
  kStridedConv,   // stride-s conv -> stride-1 conv + s x s / s LAP
  kAdaptivePool,  // adaptive pool -> adaptive LAP
};

struct Placement {
  std::string target;
  LapConfig config;
  /// Inferred from the target's kind when absent.
  std::optional<ReplaceMode> mode;
};

struct PlacementSpec {
  std::vector<Placement> placements;
  /// Seeds the new scorers; placement i draws from seed + i.
  std::uint64_t seed = 0;
};

/**
 * @brief Returns a copy of `g` with each target replaced by a LAP.
 *
 * Pools keep their name; for strided convolutions the conv keeps its name
 * (now stride 1) and the LAP is inserted right after it as
 * "<target>.lap". Every other parameter is copied value for value. Throws
 * SpecError for missing or non-replaceable targets and GraphError when the
 * network output shape would change.
 */
Network extend_architecture(const Network& g, const PlacementSpec& spec);

/// One phase of training over a subset of parameters.
struct Stage {
  std::string name;
  /// Patterns: "all", "lap" (every LAP-owned parameter) or a layer-name
  /// prefix such as "block3" or "head".
  std::vector<std::string> trainable;
  std::string optimizer = "adam";
  double lr = 1e-3;
  double decay = 0.0;
  int epochs = 1;
};

/// The plug-into-a-trained-model recipe: LAP parameters alone, then the
/// containing block and the classifier head.
std::vector<Stage> plug_in_recipe(const std::string& containing_block,
                                  const std::string& head, int lap_epochs,
                                  int finetune_epochs);

/// Parameters selected by `patterns`; throws ConfigError when none match.
std::vector<NamedParam> select_params(Network& net,
                                      std::span<const std::string> patterns);

enum class Supervision { kNone, kWeak, kFull };

struct LabeledData {
  Tensor images;  // (N, C, H, W), already normalized
  std::vector<int> labels;
  std::vector<ConceptAnnotation> annotations;

  int size() const { return images.n(); }
  LabeledData subset(std::span<const int> indices) const;
};

struct TrainOptions {
  int batch_size = 32;
  std::uint64_t seed = 0;
  Supervision supervision = Supervision::kWeak;
  /// One entry shared by every LAP, or one entry per LAP.
  std::vector<DiscLossConfig> disc;
  LossWeights weights;
  bool concordance = true;
  /// Print one line per epoch to stderr.
  bool verbose = false;
};

struct EpochLog {
  int stage = 0;
  int epoch = 0;
  double task_loss = 0.0;
  double total_loss = 0.0;
  double val_balanced_accuracy = -1.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  double best_val_balanced_accuracy = -1.0;
  /// Index into `epochs`, -1 when the initial parameters were kept.
  int best_epoch = -1;
};

/// Loss terms for one forward pass, after weighting.
struct StepLosses {
  double task = 0.0;
  std::vector<double> per_lap;
  std::vector<double> per_pair;
  double total = 0.0;
};

/**
 * Forward + backward for one batch: task cross-entropy, per-LAP knowledge
 * injection and concordance between consecutive LAPs. Leaves gradients in
 * the network parameters; does not step any optimizer.
 */
StepLosses forward_backward(Network& net, const LabeledData& batch,
                            const TrainOptions& opts);

/**
 * Runs `stages` in order. Parameters outside a stage's trainable set are
 * never modified. With `val`, the parameters of the epoch with the best
 * validation balanced accuracy are restored at the end.
 */
TrainReport staged_training(Network& net, std::span<const Stage> stages,
                            const LabeledData& train, const TrainOptions& opts,
                            const LabeledData* val = nullptr);

/// Logits for every sample, evaluated in chunks of `batch`.
Tensor predict_logits(Network& net, const Tensor& images, int batch = 64);
std::vector<int> argmax_classes(const Tensor& logits);

}  // namespace lap

#endif  // LAP_SURGERY_HPP_
