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

#include "lap/surgery.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "lap/errors.hpp"
#include "lap/evaluate.hpp"
#include "lap/optim.hpp"

namespace lap {
namespace {

ReplaceMode infer_mode(Layer& l) {
  const std::string k = l.kind();
  if (k == "maxpool" || k == "avgpool") return ReplaceMode::kPool;
  if (k == "adaptive_avgpool") return ReplaceMode::kAdaptivePool;
  if (k == "conv2d" && static_cast<Conv2d&>(l).stride() > 1) {
    return ReplaceMode::kStridedConv;
  }
  throw SpecError("layer '" + l.name() + "' of kind " + k +
                  " cannot be replaced by a LAP");
}

struct Rewriter {
  const std::map<std::string, std::pair<std::size_t, const Placement*>>& targets;
  std::uint64_t seed;

  std::unique_ptr<LapLayerBase> make_lap(Layer& old, const Placement& p,
                                         std::size_t index, const Shape3& in,
                                         std::vector<std::unique_ptr<Layer>>* extra) {
    std::unique_ptr<LapLayerBase> lap;
    switch (*p.mode) {
      case ReplaceMode::kPool: {
        auto& pool = static_cast<Pool2d&>(old);
        lap = std::make_unique<LapPool>(old.name(), in.c, p.config, pool.kernel());
        break;
      }
      case ReplaceMode::kAdaptivePool: {
        auto& pool = static_cast<AdaptiveAvgPool2d&>(old);
        lap = std::make_unique<AdaptiveLapPool>(old.name(), in.c, p.config,
                                                pool.out_h(), pool.out_w());
        break;
      }
      case ReplaceMode::kStridedConv: {
        auto& conv = static_cast<Conv2d&>(old);
        const int s = conv.stride();
        extra->push_back(conv.with_stride(conv.name(), 1));
        lap = std::make_unique<LapPool>(old.name() + ".lap", conv.out_channels(),
                                        p.config, KernelSpec::square(s, s, 0));
        break;
      }
    }
    std::mt19937_64 rng(seed + index);
    lap->init(rng);
    return lap;
  }

  void rewrite(std::vector<std::unique_ptr<Layer>>& layers, Shape3 in) {
    std::vector<std::unique_ptr<Layer>> out;
    Shape3 s = in;
    for (auto& l : layers) {
      auto it = targets.find(l->name());
      if (it != targets.end()) {
        const Shape3 expected = l->output_shape(s);
        std::vector<std::unique_ptr<Layer>> extra;
        auto lap = make_lap(*l, *it->second.second, it->second.first, s, &extra);
        for (auto& e : extra) {
          s = e->output_shape(s);
          out.push_back(std::move(e));
        }
        s = lap->output_shape(s);
        if (!(s == expected)) {
          throw GraphError("replacing '" + l->name() + "' changes its output from " +
                           expected.str() + " to " + s.str());
        }
        out.push_back(std::move(lap));
        continue;
      }
      if (auto* block = dynamic_cast<ResidualBlock*>(l.get())) {
        rewrite(block->body(), s);
      }
      s = l->output_shape(s);
      out.push_back(std::move(l));
    }
    layers = std::move(out);
  }
};

double batch_metric_mean(double sum, int count) {
  return count > 0 ? sum / count : 0.0;
}

}  // namespace

Network extend_architecture(const Network& g, const PlacementSpec& spec) {
  Network out(g);
  const Shape3 original = g.output_shape();
  std::vector<Placement> resolved = spec.placements;
  std::map<std::string, std::pair<std::size_t, const Placement*>> targets;
  for (std::size_t i = 0; i < resolved.size(); ++i) {
    Placement& p = resolved[i];
    Layer* l = out.find(p.target);
    if (l == nullptr) throw SpecError("no layer named '" + p.target + "'");
    const ReplaceMode inferred = infer_mode(*l);
    if (p.mode && *p.mode != inferred) {
      throw SpecError("replacement mode does not match kind of '" + p.target +
                      "' (" + l->kind() + ")");
    }
    p.mode = inferred;
    if (!targets.emplace(p.target, std::make_pair(i, &p)).second) {
      throw SpecError("layer '" + p.target + "' targeted twice");
    }
  }
  if (targets.empty()) return out;
  Rewriter rw{targets, spec.seed};
  rw.rewrite(out.layers(), out.input_shape());
  const Shape3 now = out.output_shape();
  if (!(now == original)) {
    throw GraphError("surgery changed the network output from " +
                     original.str() + " to " + now.str());
  }
  return out;
}

std::vector<Stage> plug_in_recipe(const std::string& containing_block,
                                  const std::string& head, int lap_epochs,
                                  int finetune_epochs) {
  Stage lap_only{"lap-only", {"lap"}, "adam", 1e-4, 1e-6, lap_epochs};
  Stage finetune{"finetune", {containing_block, head}, "sgd", 1e-3, 1e-6,
                 finetune_epochs};
  return {lap_only, finetune};
}

std::vector<NamedParam> select_params(Network& net,
                                      std::span<const std::string> patterns) {
  std::vector<NamedParam> out;
  std::set<const Param*> seen;
  for (const NamedParam& p : net.params()) {
    bool match = false;
    for (const std::string& pat : patterns) {
      if (pat == "all" || (pat == "lap" && p.lap_owned) ||
          p.name == pat ||
          (p.name.size() > pat.size() && p.name.compare(0, pat.size(), pat) == 0 &&
           p.name[pat.size()] == '.')) {
        match = true;
        break;
      }
    }
    if (match && seen.insert(p.param).second) out.push_back(p);
  }
  if (out.empty()) {
    std::string joined;
    for (const std::string& pat : patterns) joined += (joined.empty() ? "" : ",") + pat;
    throw ConfigError("stage trainable set [" + joined + "] matches no parameters");
  }
  return out;
}

LabeledData LabeledData::subset(std::span<const int> indices) const {
  LabeledData d;
  d.images = images.gather(indices);
  for (int i : indices) {
    d.labels.push_back(labels[i]);
    d.annotations.push_back(annotations[i]);
  }
  return d;
}

StepLosses forward_backward(Network& net, const LabeledData& batch,
                            const TrainOptions& opts) {
  StepLosses losses;
  net.zero_grad();
  Tensor logits = net.forward(batch.images);
  LossValue ce = softmax_cross_entropy(logits, batch.labels);
  losses.task = ce.value;
  Tensor dlogits = ce.grad;
  dlogits *= opts.weights.task;

  std::vector<LapLayerBase*> laps = net.lap_layers();
  if (opts.supervision != Supervision::kNone && !laps.empty()) {
    if (opts.disc.empty() ||
        (opts.disc.size() != 1 && opts.disc.size() != laps.size())) {
      throw ConfigError("need one loss config shared or one per LAP (" +
                        std::to_string(laps.size()) + " LAPs)");
    }
    for (std::size_t i = 0; i < laps.size(); ++i) {
      LapLayerBase& lap = *laps[i];
      const DiscLossConfig& cfg = opts.disc.size() == 1 ? opts.disc[0] : opts.disc[i];
      const Tensor& probs = lap.maps().per_concept;
      LossValue term;
      if (opts.supervision == Supervision::kWeak) {
        const Tensor sel = lap.has_selector() ? lap.selector_maps().per_concept
                                              : Tensor();
        term = concept_discrimination_loss(probs, sel, batch.annotations, cfg);
        if (lap.has_selector()) {
          LossValue s = discriminative_selector_loss(sel, batch.annotations, cfg);
          s.grad *= opts.weights.per_lap;
          lap.add_selector_grad(s.grad);
        }
      } else {
        term = bbox_supervision_loss(probs, batch.annotations,
                                     batch.images.h(), batch.images.w(), cfg);
      }
      losses.per_lap.push_back(term.value);
      term.grad *= opts.weights.per_lap;
      lap.add_concept_grad(term.grad);
    }
    if (opts.concordance && opts.supervision == Supervision::kWeak) {
      for (std::size_t i = 0; i + 1 < laps.size(); ++i) {
        const DiscLossConfig& cfg =
            opts.disc.size() == 1 ? opts.disc[0] : opts.disc[i];
        ConcordanceValue js = concordance_loss(
            laps[i]->maps().per_concept, laps[i + 1]->maps().per_concept,
            cfg.concordance_t, cfg.one_sided_concordance);
        losses.per_pair.push_back(js.value);
        js.grad_shallow *= opts.weights.per_pair;
        js.grad_deep *= opts.weights.per_pair;
        laps[i]->add_concept_grad(js.grad_shallow);
        laps[i + 1]->add_concept_grad(js.grad_deep);
      }
    }
  }
  losses.total = combine_losses(losses.task, losses.per_lap, losses.per_pair,
                                opts.weights);
  net.backward(dlogits);
  return losses;
}

Tensor predict_logits(Network& net, const Tensor& images, int batch) {
  if (images.n() == 0) return Tensor();
  Tensor out;
  for (int b = 0; b < images.n(); b += batch) {
    Tensor logits = net.forward(images.slice(b, std::min(images.n(), b + batch)));
    if (out.empty()) out = Tensor(images.n(), logits.c(), logits.h(), logits.w());
    std::copy(logits.data(), logits.data() + logits.size(),
              out.data() + static_cast<std::size_t>(b) * logits.c() *
                               logits.h() * logits.w());
  }
  return out;
}

std::vector<int> argmax_classes(const Tensor& logits) {
  std::vector<int> out(logits.n());
  const int K = logits.c() * logits.h() * logits.w();
  for (int n = 0; n < logits.n(); ++n) {
    const double* z = logits.sample(n);
    out[n] = static_cast<int>(std::max_element(z, z + K) - z);
  }
  return out;
}

TrainReport staged_training(Network& net, std::span<const Stage> stages,
                            const LabeledData& train, const TrainOptions& opts,
                            const LabeledData* val) {
  if (train.size() == 0) throw ArgumentError("empty training set");
  if (opts.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  TrainReport report;
  std::vector<Tensor> best;
  auto snapshot = [&net] {
    std::vector<Tensor> v;
    for (const NamedParam& p : net.params()) v.push_back(p.param->value);
    return v;
  };
  if (val != nullptr) {
    report.best_val_balanced_accuracy = balanced_accuracy(
        argmax_classes(predict_logits(net, val->images)), val->labels);
    best = snapshot();
  }
  // Resolve every stage up front so configuration errors surface early.
  std::vector<std::vector<NamedParam>> trainable;
  for (const Stage& st : stages) trainable.push_back(select_params(net, st.trainable));

  std::vector<int> order(train.size());
  for (std::size_t si = 0; si < stages.size(); ++si) {
    const Stage& st = stages[si];
    auto opt = make_optimizer(st.optimizer, st.lr, st.decay);
    for (int epoch = 0; epoch < st.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(opts.seed * 1000003ULL + si * 1009ULL + epoch);
      std::shuffle(order.begin(), order.end(), rng);
      EpochLog log{static_cast<int>(si), epoch, 0.0, 0.0, -1.0};
      int batches = 0;
      for (int b = 0; b < train.size(); b += opts.batch_size) {
        const int e = std::min(train.size(), b + opts.batch_size);
        LabeledData batch = train.subset(std::span<const int>(order).subspan(b, e - b));
        StepLosses l = forward_backward(net, batch, opts);
        opt->step(trainable[si]);
        log.task_loss += l.task;
        log.total_loss += l.total;
        ++batches;
      }
      log.task_loss = batch_metric_mean(log.task_loss, batches);
      log.total_loss = batch_metric_mean(log.total_loss, batches);
      if (val != nullptr) {
        log.val_balanced_accuracy = balanced_accuracy(
            argmax_classes(predict_logits(net, val->images)), val->labels);
        if (log.val_balanced_accuracy > report.best_val_balanced_accuracy) {
          report.best_val_balanced_accuracy = log.val_balanced_accuracy;
          report.best_epoch = static_cast<int>(report.epochs.size());
          best = snapshot();
        }
      }
      if (opts.verbose) {
        std::fprintf(stderr,
                     "[%s] epoch %d: task %.4f total %.4f val BA %.4f\n",
                     st.name.c_str(), epoch + 1, log.task_loss, log.total_loss,
                     log.val_balanced_accuracy);
      }
      report.epochs.push_back(log);
    }
  }
  if (val != nullptr) {
    std::vector<NamedParam> params = net.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].param->value = best[i];
  }
  return report;
}

}  // namespace lap
