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

#include "app/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "lap/errors.hpp"

namespace lap::app {

namespace pt = boost::property_tree;

namespace {

// Reads typed keys section by section, collecting every problem so the
// error lists them all at once.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::string raw(const std::string& section, const std::string& key) {
    seen_[section].insert(key);
    const auto sec = tree_.find(section);
    if (sec == tree_.not_found()) {
      missing_.push_back(section + "." + key);
      return {};
    }
    const auto it = sec->second.find(key);
    if (it == sec->second.not_found()) {
      missing_.push_back(section + "." + key);
      return {};
    }
    return boost::trim_copy(it->second.data());
  }

  template <typename T>
  T get(const std::string& section, const std::string& key) {
    const std::string s = raw(section, key);
    if (s.empty()) return T{};
    try {
      return convert<T>(s);
    } catch (const std::exception&) {
      invalid(section, key, "cannot parse '" + s + "'");
      return T{};
    }
  }

  std::vector<std::string> list(const std::string& section, const std::string& key) {
    const std::string s = raw(section, key);
    std::vector<std::string> out;
    if (s.empty() || s == "-") return out;
    boost::split(out, s, boost::is_any_of(","));
    for (std::string& item : out) boost::trim(item);
    return out;
  }

  template <typename T>
  std::vector<T> typed_list(const std::string& section, const std::string& key) {
    std::vector<T> out;
    for (const std::string& item : list(section, key)) {
      try {
        out.push_back(convert<T>(item));
      } catch (const std::exception&) {
        invalid(section, key, "cannot parse list item '" + item + "'");
      }
    }
    return out;
  }

  void invalid(const std::string& section, const std::string& key,
               const std::string& why) {
    problems_.push_back(section + "." + key + ": " + why);
  }

  void require(bool ok, const std::string& section, const std::string& key,
               const std::string& why) {
    if (!ok) invalid(section, key, why);
  }

  void finish(const std::string& source) {
    for (const auto& [section, keys] : tree_) {
      if (!seen_.count(section)) {
        unknown_.push_back("[" + section + "]");
        continue;
      }
      for (const auto& kv : keys) {
        if (!seen_[section].count(kv.first)) unknown_.push_back(section + "." + kv.first);
      }
    }
    if (missing_.empty() && unknown_.empty() && problems_.empty()) return;
    std::ostringstream msg;
    msg << source << ": invalid configuration";
    if (!missing_.empty()) msg << "\n  missing keys: " << boost::join(missing_, ", ");
    if (!unknown_.empty()) msg << "\n  unknown keys: " << boost::join(unknown_, ", ");
    for (const std::string& p : problems_) msg << "\n  " << p;
    throw ConfigError(msg.str());
  }

 private:
  template <typename T>
  static T convert(const std::string& s) {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true") return true;
      if (s == "false") return false;
      throw std::invalid_argument("bool");
    } else {
      std::istringstream in(s);
      T v{};
      in >> v;
      if (in.fail() || !in.eof()) throw std::invalid_argument("number");
      return v;
    }
  }

  const pt::ptree& tree_;
  std::map<std::string, std::set<std::string>> seen_;
  std::vector<std::string> missing_, unknown_, problems_;
};

std::vector<std::optional<double>> ratio_list(Reader& r, const std::string& key,
                                              int heads) {
  std::vector<std::optional<double>> out;
  for (const std::string& item : r.list("loss", key)) {
    if (item == "none") {
      out.emplace_back();
      continue;
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.emplace_back(v);
    } catch (const std::exception&) {
      r.invalid("loss", key, "cannot parse ratio '" + item + "'");
      out.emplace_back();
    }
  }
  if (out.empty()) out.assign(heads, std::nullopt);
  if (out.size() == 1 && heads > 1) out.assign(heads, out.front());
  if (static_cast<int>(out.size()) != heads) {
    r.invalid("loss", key, "expected 1 or " + std::to_string(heads) + " entries");
    out.resize(heads);
  }
  return out;
}

}  // namespace

AppConfig AppConfig::vanilla_twin() const {
  AppConfig c = *this;
  c.model.lap_targets.clear();
  c.model.base_checkpoint.reset();
  c.loss.supervision = Supervision::kNone;
  for (Stage& st : c.train.stages) {
    std::vector<std::string> kept;
    for (const std::string& t : st.trainable) {
      if (t != "lap") kept.push_back(t);
    }
    st.trainable = kept.empty() ? std::vector<std::string>{"all"} : kept;
  }
  return c;
}

AppConfig parse_config(std::istream& in, const std::string& source) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  Reader r(tree);
  AppConfig c;

  c.seed = r.get<std::uint64_t>("run", "seed");

  SynthSpec& d = c.data;
  d.image_size = r.get<int>("data", "image_size");
  d.n_train = r.get<int>("data", "n_train");
  d.n_val = r.get<int>("data", "n_val");
  d.n_test = r.get<int>("data", "n_test");
  d.background_mean = r.get<double>("data", "background_mean");
  d.texture_amplitude = r.get<double>("data", "texture_amplitude");
  d.max_frequency = r.get<int>("data", "max_frequency");
  d.noise_std = r.get<double>("data", "noise_std");
  d.radius_min = r.get<int>("data", "radius_min");
  d.radius_max = r.get<int>("data", "radius_max");
  d.contrast = r.get<double>("data", "contrast");
  d.seed = c.seed;
  try {
    d.validate();
  } catch (const SpecError& e) {
    r.invalid("data", "*", e.what());
  }

  ModelSection& m = c.model;
  m.channels = r.typed_list<int>("model", "channels");
  r.require(m.channels.size() == 3, "model", "channels", "expected three widths");
  m.pool = r.get<std::string>("model", "pool");
  r.require(m.pool == "max" || m.pool == "avg", "model", "pool", "expected max or avg");
  m.lap_targets = r.list("model", "lap_targets");
  m.lap.heads = r.get<int>("model", "heads");
  r.require(m.lap.heads >= 1, "model", "heads", "must be >= 1");
  m.lap.hidden = r.get<int>("model", "hidden");
  r.require(m.lap.hidden >= 0, "model", "hidden", "must be >= 0");
  const std::string agg = r.get<std::string>("model", "aggregation");
  try {
    if (!agg.empty()) m.lap.aggregation = aggregation_from_string(agg);
  } catch (const Error& e) {
    r.invalid("model", "aggregation", e.what());
  }
  m.lap.alpha_init = r.get<double>("model", "alpha_init");
  m.lap.epsilon = r.get<double>("model", "epsilon");
  r.require(m.lap.epsilon > 0.0, "model", "epsilon", "must be > 0");
  m.lap.selector = r.get<bool>("model", "selector");
  const std::string base = r.get<std::string>("model", "base_checkpoint");
  if (!base.empty() && base != "-") m.base_checkpoint = base;

  LossSection& l = c.loss;
  const std::string sup = r.get<std::string>("loss", "supervision");
  if (sup == "none") {
    l.supervision = Supervision::kNone;
  } else if (sup == "weak") {
    l.supervision = Supervision::kWeak;
  } else if (sup == "full") {
    l.supervision = Supervision::kFull;
  } else if (!sup.empty()) {
    r.invalid("loss", "supervision", "expected none, weak or full");
  }
  const int heads = std::max(1, m.lap.heads);
  const auto min_ar = ratio_list(r, "min_ar", heads);
  const auto max_ar = ratio_list(r, "max_ar", heads);
  const auto iar = ratio_list(r, "iar", heads);
  for (int h = 0; h < heads; ++h) l.disc.heads.push_back({min_ar[h], max_ar[h], iar[h]});
  l.concordance = r.get<bool>("loss", "concordance");
  l.disc.concordance_t = r.get<double>("loss", "concordance_t");
  l.disc.one_sided_concordance = r.get<bool>("loss", "one_sided_concordance");
  try {
    l.disc.validate();
  } catch (const ConfigError& e) {
    r.invalid("loss", "*", e.what());
  }
  l.weights.task = r.get<double>("loss", "weight_task");
  l.weights.per_lap = r.get<double>("loss", "weight_per_lap");
  l.weights.per_pair = r.get<double>("loss", "weight_per_pair");

  c.train.batch_size = r.get<int>("train", "batch_size");
  r.require(c.train.batch_size >= 1, "train", "batch_size", "must be >= 1");
  const std::vector<std::string> stage_names = r.list("train", "stages");
  r.require(!stage_names.empty(), "train", "stages", "at least one stage required");
  for (const std::string& name : stage_names) {
    Stage st;
    st.name = name;
    st.trainable = r.list(name, "trainable");
    r.require(!st.trainable.empty(), name, "trainable", "empty trainable set");
    st.optimizer = r.get<std::string>(name, "optimizer");
    r.require(st.optimizer == "adam" || st.optimizer == "sgd", name, "optimizer",
              "expected adam or sgd");
    st.lr = r.get<double>(name, "lr");
    r.require(st.lr > 0.0, name, "lr", "must be > 0");
    st.decay = r.get<double>(name, "decay");
    r.require(st.decay >= 0.0, name, "decay", "must be >= 0");
    st.epochs = r.get<int>(name, "epochs");
    r.require(st.epochs >= 0, name, "epochs", "must be >= 0");
    c.train.stages.push_back(st);
  }

  c.interpret.decay_alpha = r.get<double>("interpret", "decay_alpha");
  r.require(c.interpret.decay_alpha > 0.0 && c.interpret.decay_alpha <= 1.0, "interpret",
            "decay_alpha", "must lie in (0, 1]");
  c.interpret.concept_id = r.get<int>("interpret", "concept");
  r.require(c.interpret.concept_id >= 0 && c.interpret.concept_id < heads, "interpret",
            "concept", "must index a head");
  c.interpret.png_count = r.get<int>("interpret", "png_count");

  c.ridge.alpha = r.get<double>("evaluate", "ridge_alpha");
  c.ridge.tol = r.get<double>("evaluate", "ridge_tol");
  c.ridge.max_iter = r.get<int>("evaluate", "ridge_max_iter");
  c.keep_ratios = r.typed_list<double>("evaluate", "keep_ratios");
  r.require(!c.keep_ratios.empty(), "evaluate", "keep_ratios", "empty list");
  for (double k : c.keep_ratios) {
    r.require(k > 0.0 && k <= 1.0, "evaluate", "keep_ratios", "ratios must lie in (0, 1]");
  }

  r.finish(source);
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

}  // namespace lap::app
