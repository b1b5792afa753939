// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors
//
// Training-data generation: corrupted channel copies, network features,
// beamformer labels and the on-disk dataset format.

#ifndef DLHB_DATASET_HPP
#define DLHB_DATASET_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "dlhb/beamforming.hpp"
#include "dlhb/binary_io.hpp"
#include "dlhb/channel.hpp"
#include "dlhb/manopt.hpp"
#include "dlhb/rng.hpp"

namespace dlhb {

inline constexpr double kNoCorruption = std::numeric_limits<double>::infinity();
inline constexpr std::uint16_t kDatasetFormatVersion = 1;

/// Array and stream sizes shared by features, labels and beamformers.
struct Dims {
  std::size_t n_tx = 0;
  std::size_t n_rx = 0;
  std::size_t n_rf = 0;
  std::size_t n_streams = 0;
  std::size_t n_subcarriers = 0;

  std::size_t feature_rows() const { return n_subcarriers * n_rx; }
  std::size_t feature_cols() const { return n_tx; }
  std::size_t feature_size() const { return feature_rows() * feature_cols() * 3; }
  /// N_RF (N_T + N_R) + 4 M N_S N_RF.
  std::size_t label_len() const { return n_rf * (n_tx + n_rx) + 4 * n_subcarriers * n_streams * n_rf; }

  friend bool operator==(const Dims&, const Dims&) = default;
};

struct DatasetConfig {
  std::size_t n_realizations = 50;  // N
  std::size_t g_copies = 10;        // G
  std::vector<double> snr_train_db = {15.0, 20.0, 25.0};
  ChannelConfig channel;
  LinkParams link = LinkParams::from_snr_db(20.0, 2);
  std::size_t n_rf = 4;
  MoSettings mo;
  std::uint64_t seed = 1;
  bool clean_labels = false;  // label from the uncorrupted channel instead

  Dims dims() const;
  void validate() const;
};

/// (M N_R) x N_T x 3, channel-last; channels are (abs, real, imag).
struct FeatureTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  float at(std::size_t r, std::size_t c, std::size_t ch) const { return data[(r * cols + c) * 3 + ch]; }
  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

using LabelVector = std::vector<double>;

struct Sample {
  FeatureTensor features;
  std::vector<float> labels;
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  Dims dims;
  std::vector<Sample> samples;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Noise variance used to corrupt `fc` at snr_db: mean |H_ij|^2 * 10^(-snr_db/20).
double corruption_noise_var(const FrequencyChannel& fc, double snr_db);

/// Adds i.i.d. CN(0, sigma^2) to every entry; snr_db = +inf returns fc unchanged.
FrequencyChannel corrupt_channel(const FrequencyChannel& fc, double snr_db, Rng& rng);

FeatureTensor build_features(const FrequencyChannel& fc);

/// [vec(∠F_RF); vec(∠W_RF); z_BB[1]; ...; z_BB[M]], column-major vec, phases in [-pi, pi).
LabelVector build_labels(const HybridBeamformer& bf);

/// Inverse of build_labels followed by transmit power normalization.
HybridBeamformer reconstruct_beamformers(std::span<const double> z, const Dims& dims);

/// Corruption stream of copy g of scenario n.
Rng corruption_rng(std::uint64_t seed, std::uint64_t n, std::uint64_t g);

/// SNR_TRAIN level assigned to copy g (round-robin).
double train_snr_for_copy(const DatasetConfig& config, std::size_t g);

struct GenerateStats {
  std::size_t skipped = 0;
};

/// Samples are ordered by (n, g). Solver failures skip the sample; more
/// than 1% skipped aborts with NumericError.
Dataset generate(const DatasetConfig& config, GenerateStats* stats = nullptr);

/// Exact file size for T samples of the given dims.
std::uint64_t dataset_file_size(const Dims& dims, std::uint64_t n_samples);

void save(const Dataset& ds, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

}  // namespace dlhb

#endif  // DLHB_DATASET_HPP
