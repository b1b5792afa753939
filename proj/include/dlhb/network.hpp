// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors
//
// Convolutional regression network mapping channel feature tensors to
// beamformer label vectors:
//
//   input -> conv3x3 -> norm -> conv3x3 -> norm -> dense -> dropout
//         -> dense -> dropout -> regression
//
// Normalization and dense layers are followed by ReLU. Everything is
// computed in double precision; parameters are kept float32-representable
// so the model file round-trips exactly.

#ifndef DLHB_NETWORK_HPP
#define DLHB_NETWORK_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlhb/beamforming.hpp"
#include "dlhb/dataset.hpp"
#include "dlhb/rng.hpp"

namespace dlhb {

inline constexpr std::uint16_t kModelFormatVersion = 1;

struct CnnConfig {
  std::size_t input_rows = 0;  // M N_R
  std::size_t input_cols = 0;  // N_T
  std::size_t input_channels = 3;
  std::size_t conv_filters = 16;
  std::size_t fc_units = 128;
  double dropout_p = 0.5;
  std::size_t output_len = 0;

  static CnnConfig for_dims(const Dims& dims, std::size_t conv_filters = 16, std::size_t fc_units = 128,
                            double dropout_p = 0.5);
  std::size_t flat_len() const { return conv_filters * input_rows * input_cols; }
  void validate() const;
  friend bool operator==(const CnnConfig&, const CnnConfig&) = default;
};

struct TrainConfig {
  double lr = 0.005;
  double momentum = 0.9;
  std::size_t batch = 128;
  std::size_t epochs = 100;
  double val_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;  // 0-based index into val_loss
  double wall_seconds = 0.0;
  std::uint64_t checksum = 0;
};

enum class Mode { kTrain, kInfer };

/// Trainable layers, in network order.
enum class Layer : std::size_t { kConv1, kNorm1, kConv2, kNorm2, kDense1, kDense2, kOutput, kCount };

class CnnModel {
 public:
  struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    Layer layer = Layer::kConv1;
  };

  /// Glorot-uniform weights, zero biases, unit norm scales.
  CnnModel(const CnnConfig& config, std::uint64_t seed);

  const CnnConfig& config() const { return config_; }

  /// Trainable parameters, laid out per `tensors()`.
  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() {
    ++revision_;
    return params_;
  }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  const Tensor& tensor(std::string_view name) const;

  /// Running mean / variance of the two normalization layers, [4][filters]:
  /// mean1, var1, mean2, var2.
  std::span<const double> running_stats() const { return stats_; }
  std::span<double> mutable_running_stats() {
    ++revision_;
    return stats_;
  }

  void set_frozen(Layer layer, bool frozen) { frozen_[static_cast<std::size_t>(layer)] = frozen; }
  bool frozen(Layer layer) const { return frozen_[static_cast<std::size_t>(layer)]; }

  /// Bumped on every mutable access; forward artifacts record it.
  std::uint64_t revision() const { return revision_; }

  /// Rounds parameters and statistics to float32.
  void round_to_float();

  /// float32 copy of params(), or empty when params() changed since the last
  /// round_to_float(). Values are exact, so inference results do not depend
  /// on which copy is read.
  std::span<const float> float_params() const {
    return mirror_revision_ == revision_ ? std::span<const float>(mirror_) : std::span<const float>();
  }
  /// FNV-1a of the float32 parameter and statistic bytes.
  std::uint64_t checksum() const;

  friend bool operator==(const CnnModel& a, const CnnModel& b) {
    return a.config_ == b.config_ && a.params_ == b.params_ && a.stats_ == b.stats_;
  }

 private:
  CnnConfig config_;
  std::vector<Tensor> tensors_;
  std::vector<double> params_;
  std::vector<double> stats_;
  std::array<bool, static_cast<std::size_t>(Layer::kCount)> frozen_{};
  std::uint64_t revision_ = 0;
  std::vector<float> mirror_;
  std::uint64_t mirror_revision_ = ~std::uint64_t{0};
};

/// Activations and masks of one batch pass, consumed by backward().
struct ForwardCache {
  const CnnModel* model = nullptr;
  std::uint64_t revision = 0;
  Mode mode = Mode::kInfer;
  std::size_t batch = 0;

  std::vector<double> input;   // B x C x H x W
  std::vector<double> conv1;   // B x K x H x W, pre-normalization
  std::vector<double> xhat1;   // normalized conv1
  std::vector<double> act1;    // after scale/shift and ReLU
  std::vector<double> conv2;
  std::vector<double> xhat2;
  std::vector<double> act2;    // flattened input of dense1
  std::vector<double> dense1;  // pre-activation
  std::vector<double> act3;    // after ReLU and dropout
  std::vector<double> mask1;
  std::vector<double> dense2;
  std::vector<double> act4;
  std::vector<double> mask2;
  std::vector<double> output;  // B x O

  // Normalization statistics used by this pass (batch or running).
  std::vector<double> mean1, var1, mean2, var2;
};

/// Channel-first double copy of a channel-last feature tensor.
std::vector<double> to_network_input(const FeatureTensor& x);

ForwardCache forward_batch(const CnnModel& model, std::span<const FeatureTensor* const> xs, Mode mode,
                           Rng* rng = nullptr);

/// Single-sample forward; returns the regression output.
std::vector<double> forward(const CnnModel& model, const FeatureTensor& x, Mode mode, Rng* rng = nullptr);

/// Mean squared error.
double loss(std::span<const double> pred, std::span<const double> target);

/// Batch loss (mean over samples of the per-sample MSE) of a cached pass.
double batch_loss(const ForwardCache& cache, std::span<const double> targets);

/// Gradient of batch_loss with respect to params(), same layout. Requires
/// a train-mode cache produced by the model in its current state; frozen
/// layers get exactly zero gradient.
std::vector<double> backward(const CnnModel& model, const ForwardCache& cache, std::span<const double> targets);

/// Folds the batch statistics of a train-mode pass into the running stats.
void update_running_stats(CnnModel& model, const ForwardCache& cache, double momentum = 0.9);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// First ceil((1 - val_fraction) T) entries of a seeded shuffle train.
Split split_indices(std::size_t n_samples, double val_fraction, std::uint64_t seed);

struct TrainResult {
  CnnModel model;
  TrainReport report;
};

/// SGD with momentum on MSE. Returns the parameters of the epoch with the
/// lowest validation loss (final epoch when there is no validation split).
TrainResult train(const Dataset& ds, const TrainConfig& cfg, const CnnConfig& net_cfg);

/// Mean infer-mode loss over the given samples.
double evaluate_loss(const CnnModel& model, const Dataset& ds, std::span<const std::size_t> indices);

HybridBeamformer predict_beamformers(const CnnModel& model, const FrequencyChannel& fc, const Dims& dims);

void save_model(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_model(const std::filesystem::path& path);

}  // namespace dlhb

#endif  // DLHB_NETWORK_HPP
