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

#include "app/pipeline.hpp"

#include <algorithm>
#include <random>

#include <fmt/format.h>

#include "lap/errors.hpp"
#include "lap/evaluate.hpp"
#include "lap/io.hpp"

namespace lap::app {

namespace {

constexpr int kChunk = 50;
// The disc concept marks class 1.
constexpr int kConceptClass = 1;

std::vector<Map2d> random_maps(int count, int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Map2d> maps;
  for (int i = 0; i < count; ++i) {
    Map2d m(rows, cols);
    for (double& v : m.data) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    maps.push_back(std::move(m));
  }
  return maps;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

int mask_area(const Mask2d& m) {
  int a = 0;
  for (auto v : m.data) a += v ? 1 : 0;
  return a;
}

}  // namespace

Dataset generate_dataset(const AppConfig& cfg) {
  SynthSpec spec = cfg.data;
  spec.seed = cfg.seed;
  SynthDataset s = generate(spec);
  Dataset ds{std::move(s.train), std::move(s.val), std::move(s.test), {}};
  ds.norm = fit_normalization(ds.train);
  return ds;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  save_split(dir, ds.train);
  save_split(dir, ds.val);
  save_split(dir, ds.test);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.train = load_split(dir, "train");
  ds.val = load_split(dir, "val");
  ds.test = load_split(dir, "test");
  ds.norm = fit_normalization(ds.train);
  return ds;
}

Network build_model(const AppConfig& cfg, std::uint64_t seed) {
  Network base;
  if (cfg.model.base_checkpoint) {
    base = load_checkpoint(*cfg.model.base_checkpoint).net;
  } else {
    SimpleCnnSpec spec;
    spec.image_size = cfg.data.image_size;
    spec.channels = cfg.model.channels;
    spec.pool = cfg.model.pool;
    base = make_simple_cnn(spec);
    base.init(seed);
  }
  if (cfg.model.lap_targets.empty()) return base;
  PlacementSpec ps;
  ps.seed = seed + 101;
  for (const std::string& t : cfg.model.lap_targets) {
    ps.placements.push_back({t, cfg.model.lap, std::nullopt});
  }
  return extend_architecture(base, ps);
}

TrainOptions train_options(const AppConfig& cfg, std::uint64_t seed, bool verbose) {
  TrainOptions o;
  o.batch_size = cfg.train.batch_size;
  o.seed = seed;
  o.supervision = cfg.loss.supervision;
  o.disc = {cfg.loss.disc};
  o.weights = cfg.loss.weights;
  o.concordance = cfg.loss.concordance;
  o.verbose = verbose;
  return o;
}

TrainOutcome train_model(const AppConfig& cfg, const Dataset& ds, std::uint64_t seed,
                         bool verbose) {
  TrainOutcome out{build_model(cfg, seed), {}};
  const LabeledData train = to_labeled(ds.train, ds.norm);
  const LabeledData val = to_labeled(ds.val, ds.norm);
  out.report = staged_training(out.net, cfg.train.stages, train,
                               train_options(cfg, seed, verbose), &val);
  return out;
}

void for_each_stack(
    Network& net, const LabeledData& data, double decay_alpha,
    const std::function<void(int, const InterpretationStack&, int)>& fn) {
  for (int b = 0; b < data.size(); b += kChunk) {
    const Tensor x = data.images.slice(b, std::min(data.size(), b + kChunk));
    const Extraction ex = extract_stack(net, x, decay_alpha);
    const std::vector<int> preds = argmax_classes(ex.logits);
    for (int i = 0; i < x.n(); ++i) fn(b + i, ex.stacks[i], preds[i]);
  }
}

EvalReport evaluate_model(Network& net, const AppConfig& cfg, const Dataset& ds,
                          std::uint64_t seed, const std::vector<Map2d>* external) {
  EvalReport rep;
  const LabeledData test = to_labeled(ds.test, ds.norm);
  const int n_laps = static_cast<int>(net.lap_layers().size());
  const int concept_id = cfg.interpret.concept_id;
  const double decay = cfg.interpret.decay_alpha;

  std::vector<int> preds;
  if (n_laps == 0) {
    preds = argmax_classes(predict_logits(net, test.images));
    rep.test = classification_metrics(preds, test.labels);
    return rep;
  }

  // Test pass: predictions, presence rule, probe features, maps.
  preds.resize(test.size());
  std::vector<std::vector<int>> presence(n_laps, std::vector<int>(test.size()));
  std::vector<std::vector<std::vector<double>>> test_feats(n_laps);
  std::vector<Map2d> integrated(test.size()), accumulated(test.size());
  for_each_stack(net, test, decay, [&](int i, const InterpretationStack& st, int pred) {
    preds[i] = pred;
    for (int l = 0; l < n_laps; ++l) {
      presence[l][i] = lap_predict_presence(st.levels[l].concepts[concept_id]) ? 1 : 0;
      test_feats[l].push_back(concept_size_features(st.levels[l].concepts));
    }
    integrated[i] = normalize_map(integrate_stack(st, concept_id));
    accumulated[i] = accumulated_scores(st, concept_id);
  });
  rep.test = classification_metrics(preds, test.labels);

  // Probe features on the training split.
  const LabeledData train = to_labeled(ds.train, ds.norm);
  std::vector<std::vector<std::vector<double>>> train_feats(n_laps);
  for_each_stack(net, train, decay, [&](int, const InterpretationStack& st, int) {
    for (int l = 0; l < n_laps; ++l) {
      train_feats[l].push_back(concept_size_features(st.levels[l].concepts));
    }
  });
  for (int l = 0; l < n_laps; ++l) {
    LapMetrics m;
    std::tie(m.presence_predictivity, m.presence_faithfulness) =
        predictivity_and_faithfulness(presence[l], preds, test.labels);
    ProbeOptions po;
    po.seed = seed + static_cast<std::uint64_t>(l);
    const FcProbe probe = fc_probe_train(train_feats[l], train.labels, po);
    const std::vector<int> probe_preds = probe.predict(test_feats[l]);
    std::tie(m.probe_predictivity, m.probe_faithfulness) =
        predictivity_and_faithfulness(probe_preds, preds, test.labels);
    rep.laps.push_back(m);
  }

  // Global threshold from validation positives.
  const LabeledData val = to_labeled(ds.val, ds.norm);
  std::vector<Map2d> fit_maps;
  std::vector<Mask2d> fit_masks;
  for_each_stack(net, val, decay, [&](int i, const InterpretationStack& st, int) {
    if (ds.val.samples[i].label != kConceptClass) return;
    fit_maps.push_back(normalize_map(integrate_stack(st, concept_id)));
    fit_masks.push_back(ds.val.samples[i].mask);
  });
  const ThresholdFit fit = fit_global_threshold(fit_maps, fit_masks, cfg.ridge);
  rep.threshold = fit.threshold;
  rep.threshold_iterations = fit.iterations;

  const int rows = test.images.h(), cols = test.images.w();
  const std::vector<Map2d> rnd = random_maps(test.size(), rows, cols, seed ^ 0x5eedULL);
  std::vector<double> iou_t, iou_top, iou_rnd, iou_ext;
  for (int i = 0; i < test.size(); ++i) {
    const SynthSample& s = ds.test.samples[i];
    if (s.label != kConceptClass) continue;
    const int area = mask_area(s.mask);
    iou_t.push_back(iou(binarize(integrated[i], fit.threshold), s.mask));
    iou_top.push_back(iou(binarize_top_scored(accumulated[i], area), s.mask));
    iou_rnd.push_back(iou(binarize_top_scored(rnd[i], area), s.mask));
    if (external) iou_ext.push_back(iou(binarize_top_scored((*external)[i], area), s.mask));
  }
  rep.positives = static_cast<int>(iou_t.size());
  rep.iou_threshold = mean(iou_t);
  rep.iou_top_scored = mean(iou_top);
  rep.iou_random = mean(iou_rnd);

  // Keep-k curves. The concept map designates class 1, so the headline curve
  // runs over images the model assigns to it.
  std::vector<int> chosen;
  for (int i = 0; i < test.size(); ++i) {
    if (preds[i] == kConceptClass) chosen.push_back(i);
  }
  rep.curve_images = static_cast<int>(chosen.size());
  const auto ks = cfg.keep_ratios;
  const auto ref = CurveReference::kModelPrediction;
  const auto lap_all = faithfulness_curve(net, test.images, accumulated, ks, ref);
  const auto rnd_all = faithfulness_curve(net, test.images, rnd, ks, ref);
  std::vector<CurvePoint> lap_sub(ks.size()), rnd_sub(ks.size());
  if (!chosen.empty()) {
    const Tensor sub = test.images.gather(chosen);
    std::vector<Map2d> a, r;
    for (int i : chosen) {
      a.push_back(accumulated[i]);
      r.push_back(rnd[i]);
    }
    lap_sub = faithfulness_curve(net, sub, a, ks, ref);
    rnd_sub = faithfulness_curve(net, sub, r, ks, ref);
  }
  for (std::size_t j = 0; j < ks.size(); ++j) {
    rep.curve.push_back({ks[j], lap_sub[j].top1, rnd_sub[j].top1, lap_all[j].top1,
                         rnd_all[j].top1});
  }

  if (external) {
    if (static_cast<int>(external->size()) != test.size()) {
      throw ArgumentError("external maps: expected " + std::to_string(test.size()) +
                          " maps, got " + std::to_string(external->size()));
    }
    rep.has_external = true;
    rep.external_iou_top_scored = mean(iou_ext);
    rep.external_curve = faithfulness_curve(net, test.images, *external, ks, ref);
  }
  return rep;
}

std::string format_report(const EvalReport& r) {
  std::string out;
  auto put = [&out](const std::string& key, double v) {
    out += fmt::format("{} = {:.6f}\n", key, v);
  };
  auto put_int = [&out](const std::string& key, long v) {
    out += fmt::format("{} = {}\n", key, v);
  };
  put("test.accuracy", r.test.accuracy);
  put("test.balanced_accuracy", r.test.balanced_accuracy);
  put("test.sensitivity", r.test.sensitivity);
  put("test.specificity", r.test.specificity);
  put_int("lap.count", static_cast<long>(r.laps.size()));
  for (std::size_t l = 0; l < r.laps.size(); ++l) {
    const std::string p = fmt::format("lap{}.", l + 1);
    put(p + "predictivity", r.laps[l].presence_predictivity);
    put(p + "faithfulness", r.laps[l].presence_faithfulness);
    put(p + "probe_predictivity", r.laps[l].probe_predictivity);
    put(p + "probe_faithfulness", r.laps[l].probe_faithfulness);
  }
  if (r.laps.empty()) return out;
  put_int("localization.positives", r.positives);
  put("localization.threshold", r.threshold);
  put_int("localization.threshold_iterations", r.threshold_iterations);
  put("localization.iou_threshold", r.iou_threshold);
  put("localization.iou_top_scored", r.iou_top_scored);
  put("localization.iou_random_top_scored", r.iou_random);
  put_int("curve.images", r.curve_images);
  for (const CurveRow& row : r.curve) {
    const std::string p = fmt::format("curve.k{:.2f}.", row.k);
    put(p + "lap_top1", row.lap);
    put(p + "random_top1", row.random);
    put(p + "lap_top1_all", row.lap_all);
    put(p + "random_top1_all", row.random_all);
  }
  if (r.has_external) {
    put("external.iou_top_scored", r.external_iou_top_scored);
    for (const CurvePoint& pt : r.external_curve) {
      put(fmt::format("external.curve.k{:.2f}.top1", pt.k), pt.top1);
    }
  }
  return out;
}

std::string format_curve_csv(const EvalReport& r) {
  std::string out = "k,lap_top1,random_top1,lap_top1_all,random_top1_all\n";
  for (const CurveRow& row : r.curve) {
    out += fmt::format("{:.2f},{:.6f},{:.6f},{:.6f},{:.6f}\n", row.k, row.lap, row.random,
                       row.lap_all, row.random_all);
  }
  return out;
}

std::string run_pipeline(const AppConfig& cfg) {
  const Dataset ds = generate_dataset(cfg);
  TrainOutcome t = train_model(cfg, ds, cfg.seed);
  const EvalReport rep = evaluate_model(t.net, cfg, ds, cfg.seed);
  std::string out = fmt::format("seed = {}\n", cfg.seed);
  out += fmt::format("train.best_val_balanced_accuracy = {:.6f}\n",
                     t.report.best_val_balanced_accuracy);
  out += fmt::format("train.best_epoch = {}\n", t.report.best_epoch + 1);
  return out + format_report(rep);
}

}  // namespace lap::app
