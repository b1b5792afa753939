// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include "dlhb/experiment_config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dlhb {

namespace {

using nlohmann::json;

// Walks one JSON object, tracking the dotted key path for error messages
// and rejecting keys that were never read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError(where(key) + ": unknown key");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  Section sub(const std::string& key) { return Section(j_.at(key), where(key)); }

  void read(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(where(key) + ": expected a non-negative integer");
    out = v.get<std::size_t>();
  }

  void read(const std::string& key, std::uint64_t& out, int) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void read(const std::string& key, double& out) {
    if (!has(key)) return;
    out = number(j_.at(key), where(key));
  }

  void read(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    out = v.get<bool>();
  }

  void read(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    out = v.get<std::string>();
  }

  void read(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(where(key) + ": expected a list");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], where(key) + "[" + std::to_string(i) + "]"));
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  // Numbers, or the strings "inf" / "-inf" for the no-corruption sentinel.
  static double number(const json& v, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
      if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    throw ConfigError(where + ": expected a number");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_channel(Section s, ChannelConfig& c) {
  s.read("n_tx", c.n_tx);
  s.read("n_rx", c.n_rx);
  s.read("n_subcarriers", c.n_subcarriers);
  s.read("n_clusters", c.n_clusters);
  s.read("n_rays", c.n_rays);
  s.read("cp_len", c.cp_len);
  s.read("symbol_period", c.symbol_period);
  s.read("angle_spread_deg", c.angle_spread_deg);
  s.read("ray_delay_span", c.ray_delay_span);
}

void read_link(Section s, LinkParams& link) {
  double snr_db = link.snr_db();
  double noise_var = link.noise_var;
  std::size_t n_streams = link.n_streams;
  s.read("snr_db", snr_db);
  s.read("noise_var", noise_var);
  s.read("n_streams", n_streams);
  if (!std::isfinite(snr_db)) throw ConfigError(s.where("snr_db") + ": must be finite");
  if (!(noise_var > 0.0)) throw ConfigError(s.where("noise_var") + ": must be > 0");
  link = LinkParams::from_snr_db(snr_db, n_streams, noise_var);
}

void read_mo(Section s, MoSettings& mo) {
  s.read("outer_iters", mo.outer_iters);
  s.read("inner_iters", mo.inner_iters);
  s.read("grad_tol", mo.grad_tol);
  s.read("obj_tol", mo.obj_tol);
  s.read("step_init", mo.step_init);
  s.read("seed", mo.seed, 0);
}

}  // namespace

DatasetConfig ExperimentConfig::dataset_config() const {
  DatasetConfig d = dataset;
  d.channel = channel;
  d.channel.seed = seed;
  d.link = link;
  d.n_rf = n_rf;
  d.seed = seed;
  return d;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

CnnConfig ExperimentConfig::cnn_config() const { return CnnConfig::for_dims(dims(), conv_filters, fc_units, dropout_p); }

void ExperimentConfig::validate() const {
  auto wrap = [](const char* section, auto&& check) {
    try {
      check();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  wrap("scenario", [&] {
    channel.validate();
    link.validate();
  });
  wrap("dataset", [&] { dataset_config().validate(); });
  wrap("train", [&] {
    train.validate();
    cnn_config().validate();
  });
  if (sweep.snr_db.empty()) throw ConfigError("sweep.snr_db: must be nonempty");
  if (sweep.snr_test_db.empty()) throw ConfigError("sweep.snr_test_db: must be nonempty");
  for (double v : sweep.snr_db)
    if (!std::isfinite(v)) throw ConfigError("sweep.snr_db: points must be finite");
  for (double v : sweep.snr_test_db)
    if (std::isnan(v) || v == -std::numeric_limits<double>::infinity())
      throw ConfigError("sweep.snr_test_db: points must be numbers or \"inf\"");
  if (trials == 0) throw ConfigError("trials: must be >= 1");
  if (timing_runs == 0) throw ConfigError("timing_runs: must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  {
    Section root(j, "");
    if (root.has("scenario")) {
      Section s = root.sub("scenario");
      if (s.has("channel")) read_channel(s.sub("channel"), c.channel);
      if (s.has("link")) read_link(s.sub("link"), c.link);
      s.read("n_rf", c.n_rf);
    }
    if (root.has("dataset")) {
      Section s = root.sub("dataset");
      s.read("n_realizations", c.dataset.n_realizations);
      s.read("g_copies", c.dataset.g_copies);
      s.read("snr_train_db", c.dataset.snr_train_db);
      s.read("clean_labels", c.dataset.clean_labels);
      if (s.has("mo")) read_mo(s.sub("mo"), c.dataset.mo);
    }
    if (root.has("train")) {
      Section s = root.sub("train");
      s.read("lr", c.train.lr);
      s.read("momentum", c.train.momentum);
      s.read("batch", c.train.batch);
      s.read("epochs", c.train.epochs);
      s.read("val_fraction", c.train.val_fraction);
      s.read("conv_filters", c.conv_filters);
      s.read("fc_units", c.fc_units);
      s.read("dropout_p", c.dropout_p);
    }
    if (root.has("sweep")) {
      Section s = root.sub("sweep");
      s.read("snr_db", c.sweep.snr_db);
      s.read("snr_test_db", c.sweep.snr_test_db);
      std::string source;
      s.read("trial_channels", source);
      if (source == "dataset") c.sweep.trial_channels = TrialChannels::kDataset;
      else if (source == "fresh") c.sweep.trial_channels = TrialChannels::kFresh;
      else if (!source.empty()) throw ConfigError("sweep.trial_channels: expected \"dataset\" or \"fresh\"");
    }
    root.read("trials", c.trials);
    root.read("timing_runs", c.timing_runs);
    root.read("seed", c.seed, 0);
    root.read("output", c.output);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace dlhb
