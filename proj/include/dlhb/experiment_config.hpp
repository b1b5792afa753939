// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors
//
// Experiment configuration shared by the CLI subcommands. Configs are JSON
// documents whose keys mirror the field names below:
//
//   {
//     "scenario": {"channel": {...}, "link": {"snr_db": 20, "n_streams": 2}, "n_rf": 4},
//     "dataset":  {"n_realizations": 50, "g_copies": 10, "snr_train_db": [15, 20, 25], "mo": {...}},
//     "train":    {"lr": 0.005, "momentum": 0.9, "batch": 128, "epochs": 100, ...},
//     "sweep":    {"snr_db": [...], "snr_test_db": [5, 10, "inf"]},
//     "trials": 20, "seed": 1, "output": "results.csv"
//   }
//
// Every key is optional; unknown keys are rejected.

#ifndef DLHB_EXPERIMENT_CONFIG_HPP
#define DLHB_EXPERIMENT_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlhb/beamforming.hpp"
#include "dlhb/channel.hpp"
#include "dlhb/dataset.hpp"
#include "dlhb/manopt.hpp"
#include "dlhb/network.hpp"

namespace dlhb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Where sweep trials take their channels from.
enum class TrialChannels {
  kDataset,  // scenarios of the validation split of the training dataset
  kFresh,    // realizations never used for training
};

struct SweepConfig {
  std::vector<double> snr_db = {-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0};
  std::vector<double> snr_test_db = {0.0, 5.0, 10.0, 15.0, 20.0, 25.0, kNoCorruption};
  TrialChannels trial_channels = TrialChannels::kDataset;
};

struct ExperimentConfig {
  // scenario
  ChannelConfig channel;
  LinkParams link = LinkParams::from_snr_db(20.0, 2);
  std::size_t n_rf = 4;

  // dataset; its channel, link, n_rf and seed are taken from the fields above
  DatasetConfig dataset;

  // train
  TrainConfig train;
  std::size_t conv_filters = 16;
  std::size_t fc_units = 128;
  double dropout_p = 0.5;

  SweepConfig sweep;
  std::size_t trials = 20;
  std::size_t timing_runs = 20;
  std::uint64_t seed = 1;
  std::string output;

  /// Test hook: every trial channel is replaced by zeros.
  bool zero_channel = false;

  DatasetConfig dataset_config() const;
  TrainConfig train_config() const;
  CnnConfig cnn_config() const;
  Dims dims() const { return dataset_config().dims(); }

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace dlhb

#endif  // DLHB_EXPERIMENT_CONFIG_HPP
