// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors
//
// Monte Carlo experiment drivers: spectral efficiency versus SNR, versus
// channel-estimate quality, and prediction/solve timing.

#ifndef DLHB_HARNESS_HPP
#define DLHB_HARNESS_HPP

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dlhb/experiment_config.hpp"
#include "dlhb/network.hpp"

namespace dlhb {

inline constexpr const char* kMethodDlhb = "dlhb";
inline constexpr const char* kMethodMo = "mo";
inline constexpr const char* kMethodDigital = "digital";
inline constexpr const char* kMethodMoCorrupted = "mo-corrupted";

struct ResultRow {
  double sweep_db = 0.0;
  std::string method;
  double mean_se = 0.0;
  double std_se = 0.0;  // sample standard deviation
  std::size_t trials = 0;
};

struct SweepResult {
  std::vector<ResultRow> rows;  // ordered by (sweep point, method)
  /// Per-trial SE by method, [point][trial]; NaN marks an excluded trial.
  std::map<std::string, std::vector<std::vector<double>>> per_trial;
  std::size_t excluded = 0;
};

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Clean channels of trials 0..cfg.trials-1.
std::vector<FrequencyChannel> trial_channels(const ExperimentConfig& cfg);

/// Calls fn(i) for i in [0, n) on a pool of worker threads. The first
/// exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Methods dlhb, mo, digital at every cfg.sweep.snr_db point.
SweepResult run_snr_sweep(const ExperimentConfig& cfg, const CnnModel& model);

/// Link fixed at cfg.link; inputs corrupted at every cfg.sweep.snr_test_db
/// point. Methods dlhb, mo, digital, mo-corrupted; SE always on the clean
/// channel.
SweepResult run_corruption_sweep(const ExperimentConfig& cfg, const CnnModel& model);

struct TimingResult {
  std::vector<double> dlhb_seconds;
  std::vector<double> mo_seconds;
  double dlhb_median = 0.0;
  double mo_median = 0.0;
};

/// One warm-up pass, then cfg.timing_runs timed runs of each method on the
/// same instances.
TimingResult time_methods(const ExperimentConfig& cfg, const CnnModel& model);

double median(std::vector<double> v);

std::string format_results_csv(const std::vector<ResultRow>& rows);
std::string format_timing_csv(const TimingResult& t);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace dlhb

#endif  // DLHB_HARNESS_HPP
