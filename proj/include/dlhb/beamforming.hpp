// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors
//
// Reference beamformers and spectral-efficiency evaluation.

#ifndef DLHB_BEAMFORMING_HPP
#define DLHB_BEAMFORMING_HPP

#include <cstddef>
#include <optional>
#include <vector>

#include "dlhb/channel.hpp"
#include "dlhb/numerics.hpp"

namespace dlhb {

/// Analog stages are shared across the band; baseband stages are per subcarrier.
struct HybridBeamformer {
  CMat f_rf;               // N_T x N_RF, unit-modulus entries
  CMat w_rf;               // N_R x N_RF, unit-modulus entries
  std::vector<CMat> f_bb;  // M x (N_RF x N_S)
  std::vector<CMat> w_bb;  // M x (N_RF x N_S)
};

/// Largest deviation of any analog entry from unit modulus.
double unit_modulus_deviation(const CMat& x);

/// Sum over m of ||f_rf * f_bb[m]||_F^2.
double transmit_power(const CMat& f_rf, const std::vector<CMat>& f_bb);

/// Throws std::invalid_argument if shapes, unit modulus (1e-12) or the
/// band power constraint (1e-9 relative) are violated.
void check_invariants(const HybridBeamformer& bf, std::size_t n_streams);

struct LinkParams {
  double rho = 1.0;        // average received power, linear
  double noise_var = 1.0;  // sigma_n^2, linear
  std::size_t n_streams = 2;

  void validate() const;
  /// 10 log10(rho / noise_var).
  double snr_db() const;
  static LinkParams from_snr_db(double snr_db, std::size_t n_streams, double noise_var = 1.0);
};

/// The n_streams dominant right singular vectors of h. Each column is
/// phase-normalized so that its first entry is real and non-negative.
/// `subcarrier` only labels the error message.
CMat optimal_precoder(const CMat& h, std::size_t n_streams, std::optional<std::size_t> subcarrier = {});

/// Unconstrained MMSE combiner for precoder f_opt (returned un-conjugated).
CMat mmse_combiner(const CMat& h, const CMat& f_opt, const LinkParams& link);

/// rho H F_RF F_BB F_BBᴴ F_RFᴴ Hᴴ + sigma_n^2 I.
CMat output_covariance(const CMat& h, const CMat& f_rf, const CMat& f_bb, const LinkParams& link);

/// Rate of one subcarrier in bits/s/Hz for an arbitrary linear precoder F
/// (N_T x N_S) and combiner W (N_R x N_S).
double subcarrier_rate(const CMat& h, const CMat& f, const CMat& w, const LinkParams& link);

/// Band-averaged spectral efficiency (1/M) sum_m R[m] of a hybrid beamformer.
double spectral_efficiency(const FrequencyChannel& fc, const HybridBeamformer& bf, const LinkParams& link);

/// Band-averaged spectral efficiency of the SVD (fully digital) transceiver.
double digital_spectral_efficiency(const FrequencyChannel& fc, const LinkParams& link);

/// Scales every f_bb[m] by one scalar so that the band power equals M * N_S.
std::vector<CMat> normalize_power(const CMat& f_rf, const std::vector<CMat>& f_bb);

}  // namespace dlhb

#endif  // DLHB_BEAMFORMING_HPP
