// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors
//
// Clustered delay-domain mmWave channel with uniform linear arrays at both
// ends and its per-subcarrier OFDM frequency response.

#ifndef DLHB_CHANNEL_HPP
#define DLHB_CHANNEL_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dlhb/numerics.hpp"
#include "dlhb/rng.hpp"

namespace dlhb {

struct ChannelConfig {
  std::size_t n_tx = 16;
  std::size_t n_rx = 4;
  std::size_t n_subcarriers = 8;
  std::size_t n_clusters = 3;
  std::size_t n_rays = 2;
  std::size_t cp_len = 0;  // 0 selects max(1, n_subcarriers / 4)
  double symbol_period = 1.0;
  double angle_spread_deg = 5.0;
  double ray_delay_span = 0.1;  // rays spread over [0, span * T_s]
  std::uint64_t seed = 1;

  std::size_t delay_taps() const;
  /// Throws std::invalid_argument on a malformed config.
  void validate() const;
};

struct ClusterRealization {
  std::vector<double> cluster_delays;  // L
  std::vector<double> ray_delays;      // N_sc, shared by all clusters
  std::vector<double> mean_aoa;        // L
  std::vector<double> mean_aod;        // L
  std::vector<double> aoa_shifts;      // L x N_sc, row-major by cluster
  std::vector<double> aod_shifts;      // L x N_sc
  std::vector<cplx> gains;             // L x N_sc
};

struct DelayChannel {
  std::vector<CMat> taps;  // D matrices, N_R x N_T
};

struct FrequencyChannel {
  std::vector<CMat> per_subcarrier;  // M matrices, N_R x N_T; index k holds subcarrier k + 1

  std::size_t n_subcarriers() const { return per_subcarrier.size(); }
  std::size_t n_rx() const { return per_subcarrier.empty() ? 0 : per_subcarrier.front().rows(); }
  std::size_t n_tx() const { return per_subcarrier.empty() ? 0 : per_subcarrier.front().cols(); }
  double energy() const;
};

/// Half-wavelength ULA response: entry k is exp(j*pi*k*sin(angle)).
std::vector<cplx> steering_ula(std::size_t n, double angle);

/// Raised-cosine pulse, roll-off 1, truncated to |t| <= 4 T_s.
double pulse(double t, double symbol_period);

ClusterRealization draw_clusters(const ChannelConfig& config, Rng& rng);

DelayChannel delay_channel(const ClusterRealization& real, const ChannelConfig& config);

/// H[m] = sum_d H[d] exp(-j 2 pi m d / M) for m = 1..M.
FrequencyChannel freq_channel(const DelayChannel& dc, std::size_t m_subcarriers);

/// Scenario `index` of the stream seeded by config.seed; identical for any
/// generation order.
FrequencyChannel realize_channel(const ChannelConfig& config, std::uint64_t index);

}  // namespace dlhb

#endif  // DLHB_CHANNEL_HPP
