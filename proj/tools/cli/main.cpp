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

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "app/config.hpp"
#include "app/pipeline.hpp"
#include "lap/errors.hpp"
#include "lap/io.hpp"

namespace fs = std::filesystem;
using namespace lap;
using namespace lap::app;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string device = "cpu";
  std::string data;
};

void add_common(CLI::App* cmd, Common& c, bool needs_data) {
  cmd->add_option("--config", c.config, "configuration file")->required();
  cmd->add_option("--seed", c.seed, "overrides [run] seed");
  cmd->add_option("--device", c.device, "compute device (only cpu)");
  if (needs_data) {
    cmd->add_option("--data", c.data, "dataset directory (default: $LAP_DATA_DIR)");
  }
}

AppConfig resolve(const Common& c) {
  if (c.device != "cpu") throw UsageError("unsupported device '" + c.device + "'");
  AppConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.data.seed = cfg.seed;
  return cfg;
}

fs::path data_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("LAP_DATA_DIR"); env && *env) return env;
  throw UsageError("no dataset directory: pass --data or set LAP_DATA_DIR");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

Normalization checkpoint_norm(const Checkpoint& ck, const Dataset& ds) {
  if (!ck.meta.contains("norm_mean")) return ds.norm;
  return {ck.meta.at("norm_mean").get<double>(), ck.meta.at("norm_std").get<double>()};
}

int cmd_generate(const Common& c, const std::string& out_flag) {
  const AppConfig cfg = resolve(c);
  const fs::path out = out_flag.empty() ? data_dir("") : fs::path(out_flag);
  const Dataset ds = generate_dataset(cfg);
  write_dataset(out, ds);
  fmt::print("wrote {} / {} / {} samples to {}\n", ds.train.samples.size(),
             ds.val.samples.size(), ds.test.samples.size(), out.string());
  return 0;
}

int cmd_train(const Common& c, const std::string& out, const std::string& resume) {
  AppConfig cfg = resolve(c);
  const Dataset ds = read_dataset(data_dir(c.data));
  int epochs = 0;
  for (const Stage& st : cfg.train.stages) epochs += st.epochs;
  if (epochs == 0) {
    std::fprintf(stderr, "warning: no training epochs configured; writing the "
                         "initialized model\n");
  }
  Network net = resume.empty() ? build_model(cfg, cfg.seed) : load_checkpoint(resume).net;
  const LabeledData train = to_labeled(ds.train, ds.norm);
  const LabeledData val = to_labeled(ds.val, ds.norm);
  const TrainReport rep = staged_training(net, cfg.train.stages, train,
                                          train_options(cfg, cfg.seed, true), &val);
  nlohmann::json meta{{"seed", cfg.seed},
                      {"best_val_balanced_accuracy", rep.best_val_balanced_accuracy},
                      {"best_epoch", rep.best_epoch + 1},
                      {"norm_mean", ds.norm.mean},
                      {"norm_std", ds.norm.std}};
  save_checkpoint(out, net, meta);
  fmt::print("best validation balanced accuracy {:.4f} (epoch {}); checkpoint {}\n",
             rep.best_val_balanced_accuracy, rep.best_epoch + 1, out);
  return 0;
}

int cmd_interpret(const Common& c, const std::string& ckpt, const std::string& split_name,
                  const fs::path& out) {
  const AppConfig cfg = resolve(c);
  Checkpoint ck = load_checkpoint(ckpt);
  Dataset ds = read_dataset(data_dir(c.data));
  const SynthSplit* split = split_name == "train" ? &ds.train
                            : split_name == "val" ? &ds.val
                            : split_name == "test" ? &ds.test
                                                   : nullptr;
  if (!split) throw UsageError("unknown split '" + split_name + "'");
  const LabeledData data = to_labeled(*split, checkpoint_norm(ck, ds));
  const int n_laps = static_cast<int>(ck.net.lap_layers().size());
  if (n_laps == 0) throw UsageError("checkpoint has no LAP layer to interpret");

  std::vector<std::vector<double>> level_values(n_laps);
  std::vector<std::vector<std::uint32_t>> level_dims(n_laps);
  std::vector<Map2d> integrated, accumulated;
  std::string preds = "# sample_id predicted label\n";
  const int concept_id = cfg.interpret.concept_id;
  for_each_stack(ck.net, data, cfg.interpret.decay_alpha,
                 [&](int i, const InterpretationStack& st, int pred) {
                   for (int l = 0; l < n_laps; ++l) {
                     const StackLevel& lv = st.levels[l];
                     for (const Map2d& m : lv.concepts) {
                       level_values[l].insert(level_values[l].end(), m.data.begin(),
                                              m.data.end());
                     }
                     level_dims[l] = {static_cast<std::uint32_t>(data.size()),
                                      static_cast<std::uint32_t>(lv.concepts.size()),
                                      static_cast<std::uint32_t>(lv.concepts[0].rows),
                                      static_cast<std::uint32_t>(lv.concepts[0].cols)};
                   }
                   integrated.push_back(integrate_stack(st, concept_id));
                   accumulated.push_back(accumulated_scores(st, concept_id));
                   preds += fmt::format("{} {} {}\n", split->samples[i].id, pred,
                                        split->samples[i].label);
                   if (i < cfg.interpret.png_count) {
                     const std::string id = std::to_string(split->samples[i].id);
                     const Map2d& img = split->samples[i].image;
                     const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
                     write_png(out / "png" / (id + ".image.png"), img, *lo,
                               *hi > *lo ? *hi : *lo + 1.0);
                     write_png(out / "png" / (id + ".integrated.png"), integrated.back());
                   }
                 });
  for (int l = 0; l < n_laps; ++l) {
    write_lapm(out / fmt::format("lap{}.concepts.lapm", l + 1), level_dims[l],
               level_values[l]);
  }
  write_maps(out / "integrated.lapm", integrated);
  write_maps(out / "accumulated.lapm", accumulated);
  write_text(out / "predictions.txt", preds);
  fmt::print("wrote maps of {} samples from {} LAPs to {}\n", data.size(), n_laps,
             out.string());
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& ckpt, const std::string& maps,
                 const fs::path& out) {
  const AppConfig cfg = resolve(c);
  Checkpoint ck = load_checkpoint(ckpt);
  Dataset ds = read_dataset(data_dir(c.data));
  ds.norm = checkpoint_norm(ck, ds);
  std::optional<std::vector<Map2d>> external;
  if (!maps.empty()) external = read_maps(maps);
  const EvalReport rep = evaluate_model(ck.net, cfg, ds, cfg.seed,
                                        external ? &*external : nullptr);
  const std::string text = fmt::format("seed = {}\n", cfg.seed) + format_report(rep);
  write_text(out, text);
  if (!rep.curve.empty()) {
    fs::path csv = out;
    csv.replace_extension(".curve.csv");
    write_text(csv, format_curve_csv(rep));
  }
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LAP toolkit: attention pooling, knowledge injection, interpretation"};
  app.require_subcommand(1);

  Common gen_c, train_c, interp_c, eval_c;
  std::string gen_out, train_out, train_resume, interp_ckpt, interp_split = "test",
                                                              interp_out, eval_ckpt,
                                                              eval_maps, eval_out;

  auto* gen = app.add_subcommand("generate", "write the synthetic dataset");
  add_common(gen, gen_c, false);
  gen->add_option("--out", gen_out, "output directory (default: $LAP_DATA_DIR)");

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train, train_c, true);
  train->add_option("--out", train_out, "checkpoint to write")->required();
  train->add_option("--checkpoint", train_resume, "resume from this checkpoint");

  auto* interp = app.add_subcommand("interpret", "export LAP and integrated maps");
  add_common(interp, interp_c, true);
  interp->add_option("--checkpoint", interp_ckpt, "trained checkpoint")->required();
  interp->add_option("--split", interp_split, "train, val or test");
  interp->add_option("--out", interp_out, "output directory")->required();

  auto* eval = app.add_subcommand("evaluate", "write the metrics report");
  add_common(eval, eval_c, true);
  eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  eval->add_option("--maps", eval_maps, "external score maps for the test split (LAPM)");
  eval->add_option("--out", eval_out, "report path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(gen_c, gen_out);
    if (*train) return cmd_train(train_c, train_out, train_resume);
    if (*interp) return cmd_interpret(interp_c, interp_ckpt, interp_split, interp_out);
    if (*eval) return cmd_evaluate(eval_c, eval_ckpt, eval_maps, eval_out);
  } catch (const IntegrityError& e) {
    std::fprintf(stderr, "integrity error: %s\n", e.what());
    return 3;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
