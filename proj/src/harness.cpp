// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include "dlhb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "dlhb/binary_io.hpp"

namespace dlhb {

namespace {

constexpr std::uint64_t kTrialStream = 0x54524941ULL;  // "TRIA"
constexpr std::uint64_t kTestStream = 0x54455354ULL;   // "TEST"
constexpr double kMaxExcludedFraction = 0.10;

const double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_model(const ExperimentConfig& cfg, const CnnModel& model) {
  const CnnConfig expected = cfg.cnn_config();
  const CnnConfig& got = model.config();
  if (got.input_rows != expected.input_rows || got.input_cols != expected.input_cols ||
      got.output_len != expected.output_len) {
    std::ostringstream msg;
    msg << "model expects " << got.input_rows << "x" << got.input_cols << " inputs and " << got.output_len
        << " outputs; scenario needs " << expected.input_rows << "x" << expected.input_cols << " and "
        << expected.output_len;
    throw std::invalid_argument(msg.str());
  }
}

bool is_zero(const FrequencyChannel& fc) { return fc.energy() == 0.0; }

std::vector<ResultRow> aggregate(const std::vector<double>& points, const std::vector<std::string>& methods,
                                 const std::map<std::string, std::vector<std::vector<double>>>& per_trial) {
  std::vector<ResultRow> rows;
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (const auto& m : methods) {
      std::vector<double> v;
      for (double x : per_trial.at(m)[p])
        if (!std::isnan(x)) v.push_back(x);
      ResultRow r{points[p], m, 0.0, 0.0, v.size()};
      if (!v.empty()) {
        double s = 0.0;
        for (double x : v) s += x;
        r.mean_se = s / static_cast<double>(v.size());
        if (v.size() > 1) {
          double q = 0.0;
          for (double x : v) q += (x - r.mean_se) * (x - r.mean_se);
          r.std_se = std::sqrt(q / static_cast<double>(v.size() - 1));
        }
      }
      rows.push_back(r);
    }
  }
  return rows;
}

// Runs fn for every trial. A NumericError leaves the trial's entries NaN,
// excluding it from every method.
template <typename F>
std::size_t run_trials(std::size_t trials, F fn) {
  std::atomic<std::size_t> excluded{0};
  std::mutex log;
  parallel_for(trials, [&](std::size_t t) {
    try {
      fn(t);
    } catch (const NumericError& e) {
      ++excluded;
      std::lock_guard lock(log);
      std::cerr << "dlhb: excluding trial " << t << ": " << e.what() << "\n";
    }
  });
  if (static_cast<double>(excluded.load()) > kMaxExcludedFraction * static_cast<double>(trials))
    throw ExperimentError("more than 10% of trials failed (" + std::to_string(excluded.load()) + " of " +
                          std::to_string(trials) + ")");
  return excluded.load();
}

}  // namespace

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<FrequencyChannel> trial_channels(const ExperimentConfig& cfg) {
  const DatasetConfig dcfg = cfg.dataset_config();
  std::vector<FrequencyChannel> out;
  out.reserve(cfg.trials);
  if (cfg.zero_channel) {
    FrequencyChannel z;
    z.per_subcarrier.assign(dcfg.channel.n_subcarriers, CMat(dcfg.channel.n_rx, dcfg.channel.n_tx));
    out.assign(cfg.trials, z);
    return out;
  }
  if (cfg.sweep.trial_channels == TrialChannels::kFresh) {
    ChannelConfig c = dcfg.channel;
    Rng rng = make_rng(cfg.seed, {kTrialStream});
    c.seed = rng();
    for (std::size_t t = 0; t < cfg.trials; ++t) out.push_back(realize_channel(c, t));
    return out;
  }
  // Distinct scenarios of the validation samples, in split order.
  const std::size_t total = dcfg.n_realizations * dcfg.g_copies;
  const Split split = split_indices(total, cfg.train_config().val_fraction, cfg.train_config().seed);
  std::vector<std::size_t> scenarios;
  std::set<std::size_t> seen;
  for (std::size_t idx : split.validation) {
    const std::size_t n = idx / dcfg.g_copies;
    if (seen.insert(n).second) scenarios.push_back(n);
  }
  if (scenarios.empty()) throw ExperimentError("trial_channels: the validation split is empty");
  for (std::size_t t = 0; t < cfg.trials; ++t) out.push_back(realize_channel(dcfg.channel, scenarios[t % scenarios.size()]));
  return out;
}

SweepResult run_snr_sweep(const ExperimentConfig& cfg, const CnnModel& model) {
  cfg.validate();
  check_model(cfg, model);
  const Dims dims = cfg.dims();
  const auto channels = trial_channels(cfg);
  const auto& points = cfg.sweep.snr_db;
  const std::vector<std::string> methods = {kMethodDlhb, kMethodMo, kMethodDigital};

  SweepResult res;
  for (const auto& m : methods) res.per_trial[m].assign(points.size(), std::vector<double>(cfg.trials, kNaN));
  auto& dl = res.per_trial[kMethodDlhb];
  auto& mo = res.per_trial[kMethodMo];
  auto& dig = res.per_trial[kMethodDigital];

  res.excluded = run_trials(
      cfg.trials,
      [&](std::size_t t) {
        const FrequencyChannel& h = channels[t];
        std::vector<double> v_dl(points.size(), 0.0), v_mo(points.size(), 0.0), v_dig(points.size(), 0.0);
        if (!is_zero(h)) {
          const HybridBeamformer pred = predict_beamformers(model, h, dims);
          for (std::size_t p = 0; p < points.size(); ++p) {
            const LinkParams link = LinkParams::from_snr_db(points[p], cfg.link.n_streams, cfg.link.noise_var);
            v_dl[p] = spectral_efficiency(h, pred, link);
            v_mo[p] = spectral_efficiency(h, design_hybrid(h, link, cfg.n_rf, cfg.dataset.mo).bf, link);
            v_dig[p] = digital_spectral_efficiency(h, link);
          }
        }
        for (std::size_t p = 0; p < points.size(); ++p) {
          dl[p][t] = v_dl[p];
          mo[p][t] = v_mo[p];
          dig[p][t] = v_dig[p];
        }
      });
  res.rows = aggregate(points, methods, res.per_trial);
  return res;
}

SweepResult run_corruption_sweep(const ExperimentConfig& cfg, const CnnModel& model) {
  cfg.validate();
  check_model(cfg, model);
  const Dims dims = cfg.dims();
  const auto channels = trial_channels(cfg);
  const auto& points = cfg.sweep.snr_test_db;
  const std::vector<std::string> methods = {kMethodDlhb, kMethodMo, kMethodDigital, kMethodMoCorrupted};
  const LinkParams& link = cfg.link;

  SweepResult res;
  for (const auto& m : methods) res.per_trial[m].assign(points.size(), std::vector<double>(cfg.trials, kNaN));

  res.excluded = run_trials(
      cfg.trials,
      [&](std::size_t t) {
        const FrequencyChannel& h = channels[t];
        std::map<std::string, std::vector<double>> v;
        for (const auto& m : methods) v[m].assign(points.size(), 0.0);
        if (!is_zero(h)) {
          const double se_mo = spectral_efficiency(h, design_hybrid(h, link, cfg.n_rf, cfg.dataset.mo).bf, link);
          const double se_dig = digital_spectral_efficiency(h, link);
          for (std::size_t p = 0; p < points.size(); ++p) {
            // Same stream at every point: only the noise scale differs.
            Rng rng = make_rng(cfg.seed, {kTestStream, t});
            const FrequencyChannel seen = corrupt_channel(h, points[p], rng);
            v[kMethodDlhb][p] = spectral_efficiency(h, predict_beamformers(model, seen, dims), link);
            v[kMethodMo][p] = se_mo;
            v[kMethodDigital][p] = se_dig;
            v[kMethodMoCorrupted][p] =
                std::isinf(points[p])
                    ? se_mo
                    : spectral_efficiency(h, design_hybrid(seen, link, cfg.n_rf, cfg.dataset.mo).bf, link);
          }
        }
        for (const auto& m : methods)
          for (std::size_t p = 0; p < points.size(); ++p) res.per_trial[m][p][t] = v[m][p];
      });
  res.rows = aggregate(points, methods, res.per_trial);
  return res;
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

TimingResult time_methods(const ExperimentConfig& cfg, const CnnModel& model) {
  cfg.validate();
  check_model(cfg, model);
  const Dims dims = cfg.dims();
  ExperimentConfig c = cfg;
  c.trials = std::min(cfg.trials, cfg.timing_runs);
  const auto channels = trial_channels(c);
  using Clock = std::chrono::steady_clock;

  auto run_dlhb = [&](const FrequencyChannel& h) { return predict_beamformers(model, h, dims); };
  auto run_mo = [&](const FrequencyChannel& h) { return design_hybrid(h, cfg.link, cfg.n_rf, cfg.dataset.mo); };
  // Each method runs as its own block after a warm-up call, so neither
  // measures cache misses caused by the other.
  volatile double sink = 0.0;
  auto time_block = [&](auto run, std::vector<double>& out) {
    sink = sink + run(channels.front());
    for (std::size_t i = 0; i < cfg.timing_runs; ++i) {
      const FrequencyChannel& h = channels[i % channels.size()];
      const auto t0 = Clock::now();
      sink = sink + run(h);
      out.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    }
  };
  TimingResult r;
  time_block([&](const FrequencyChannel& h) { return run_dlhb(h).f_rf(0, 0).real(); }, r.dlhb_seconds);
  time_block([&](const FrequencyChannel& h) { return run_mo(h).bf.f_rf(0, 0).real(); }, r.mo_seconds);
  r.dlhb_median = median(r.dlhb_seconds);
  r.mo_median = median(r.mo_seconds);
  return r;
}

namespace {

std::string fixed6(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

}  // namespace

std::string format_results_csv(const std::vector<ResultRow>& rows) {
  std::string out = "sweep_db,method,mean_se,std_se,trials\n";
  for (const auto& r : rows)
    out += fixed6(r.sweep_db) + "," + r.method + "," + fixed6(r.mean_se) + "," + fixed6(r.std_se) + "," +
           std::to_string(r.trials) + "\n";
  return out;
}

std::string format_timing_csv(const TimingResult& t) {
  std::string out = "method,median_seconds,runs\n";
  out += std::string(kMethodDlhb) + "," + fixed6(t.dlhb_median) + "," + std::to_string(t.dlhb_seconds.size()) + "\n";
  out += std::string(kMethodMo) + "," + fixed6(t.mo_median) + "," + std::to_string(t.mo_seconds.size()) + "\n";
  return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace dlhb
