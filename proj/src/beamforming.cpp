// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include "dlhb/beamforming.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dlhb {

namespace {

// Solves l * x = b for lower-triangular l.
CMat forward_substitute(const CMat& l, const CMat& b) {
  CMat x = b;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    for (std::size_t i = 0; i < l.rows(); ++i) {
      cplx s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
  }
  return x;
}

}  // namespace

double unit_modulus_deviation(const CMat& x) {
  double dev = 0.0;
  for (const auto& v : x.values()) dev = std::max(dev, std::abs(std::abs(v) - 1.0));
  return dev;
}

double transmit_power(const CMat& f_rf, const std::vector<CMat>& f_bb) {
  double p = 0.0;
  for (const auto& b : f_bb) p += (f_rf * b).frob_norm2();
  return p;
}

void check_invariants(const HybridBeamformer& bf, std::size_t n_streams) {
  const std::size_t n_rf = bf.f_rf.cols();
  if (bf.w_rf.cols() != n_rf) throw std::invalid_argument("beamformer: F_RF and W_RF disagree on N_RF");
  if (bf.f_bb.empty() || bf.f_bb.size() != bf.w_bb.size())
    throw std::invalid_argument("beamformer: baseband stages must cover the same subcarriers");
  for (std::size_t m = 0; m < bf.f_bb.size(); ++m) {
    if (bf.f_bb[m].rows() != n_rf || bf.f_bb[m].cols() != n_streams || bf.w_bb[m].rows() != n_rf ||
        bf.w_bb[m].cols() != n_streams)
      throw std::invalid_argument("beamformer: baseband stage has wrong shape");
  }
  if (unit_modulus_deviation(bf.f_rf) > 1e-12 || unit_modulus_deviation(bf.w_rf) > 1e-12)
    throw std::invalid_argument("beamformer: analog stage is not unit-modulus");
  const double target = static_cast<double>(bf.f_bb.size() * n_streams);
  const double power = transmit_power(bf.f_rf, bf.f_bb);
  if (std::abs(power - target) > 1e-9 * target) {
    std::ostringstream msg;
    msg << "beamformer: band power " << power << " differs from " << target;
    throw std::invalid_argument(msg.str());
  }
}

void LinkParams::validate() const {
  if (!(rho > 0.0)) throw std::invalid_argument("link: rho must be > 0");
  if (!(noise_var > 0.0)) throw std::invalid_argument("link: noise_var must be > 0");
  if (n_streams == 0) throw std::invalid_argument("link: n_streams must be >= 1");
}

double LinkParams::snr_db() const { return 10.0 * std::log10(rho / noise_var); }

LinkParams LinkParams::from_snr_db(double snr_db, std::size_t n_streams, double noise_var) {
  return LinkParams{noise_var * std::pow(10.0, snr_db / 10.0), noise_var, n_streams};
}

CMat optimal_precoder(const CMat& h, std::size_t n_streams, std::optional<std::size_t> subcarrier) {
  if (n_streams == 0 || n_streams > std::min(h.rows(), h.cols()))
    throw std::invalid_argument("optimal_precoder: N_S must be in [1, min(N_R, N_T)]");
  const SvdResult d = svd(h);
  const double largest = d.singulars.front();
  const double kept = d.singulars[n_streams - 1];
  if (!(largest > 0.0) || !(kept > 1e-10 * largest)) {
    std::ostringstream msg;
    msg << "optimal_precoder: channel rank below N_S = " << n_streams;
    if (subcarrier) msg << " at subcarrier " << *subcarrier + 1;
    msg << " (singular values " << largest << " .. " << kept << ")";
    throw NumericError(msg.str());
  }
  CMat f = d.right.cols_range(0, n_streams);
  for (std::size_t c = 0; c < n_streams; ++c) {
    const double mag = std::abs(f(0, c));
    if (mag == 0.0) continue;
    const cplx rot = std::conj(f(0, c)) / mag;
    for (std::size_t r = 0; r < f.rows(); ++r) f(r, c) *= rot;
    f(0, c) = mag;
  }
  return f;
}

CMat mmse_combiner(const CMat& h, const CMat& f_opt, const LinkParams& link) {
  link.validate();
  const CMat hf = h * f_opt;  // N_R x N_S
  const std::size_t ns = f_opt.cols();
  CMat gram = adjoint_times(hf, hf);
  const double loading = static_cast<double>(link.n_streams) * link.noise_var / link.rho;
  for (std::size_t i = 0; i < ns; ++i) gram(i, i) += loading;
  // W = (1/rho) H F G^{-1}, G Hermitian; solve G Wᴴ = (H F)ᴴ.
  CMat w_adj;
  try {
    w_adj = solve_hpd(gram, hf.adjoint());
  } catch (const NumericError& e) {
    throw NumericError(std::string("mmse_combiner: singular normal matrix: ") + e.what());
  }
  return (1.0 / link.rho) * w_adj.adjoint();
}

CMat output_covariance(const CMat& h, const CMat& f_rf, const CMat& f_bb, const LinkParams& link) {
  link.validate();
  const CMat g = h * (f_rf * f_bb);  // N_R x N_S
  CMat cov = g * g.adjoint();
  cov *= link.rho;
  for (std::size_t i = 0; i < cov.rows(); ++i) cov(i, i) += link.noise_var;
  return hermitian_part(cov);
}

double subcarrier_rate(const CMat& h, const CMat& f, const CMat& w, const LinkParams& link) {
  const CMat heff = adjoint_times(w, h * f);  // N_S x N_S
  CMat noise = adjoint_times(w, w);
  noise *= link.noise_var;
  CMat l;
  try {
    l = cholesky(hermitian_part(noise));
  } catch (const NumericError& e) {
    throw NumericError(std::string("spectral_efficiency: noise covariance is not invertible: ") + e.what());
  }
  // |I + c Λ⁻¹ K| = |I + c L⁻¹ Heff Heffᴴ L⁻ᴴ| with Λ = L Lᴴ.
  const CMat g = forward_substitute(l, heff);
  CMat arg = g * g.adjoint();
  arg *= link.rho / static_cast<double>(link.n_streams);
  for (std::size_t i = 0; i < arg.rows(); ++i) arg(i, i) += 1.0;
  return std::max(0.0, logdet2_hpd(hermitian_part(arg)));
}

double spectral_efficiency(const FrequencyChannel& fc, const HybridBeamformer& bf, const LinkParams& link) {
  link.validate();
  const std::size_t M = fc.n_subcarriers();
  if (M == 0 || bf.f_bb.size() != M || bf.w_bb.size() != M)
    throw std::invalid_argument("spectral_efficiency: beamformer does not cover every subcarrier");
  double total = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    total += subcarrier_rate(fc.per_subcarrier[m], bf.f_rf * bf.f_bb[m], bf.w_rf * bf.w_bb[m], link);
  }
  return total / static_cast<double>(M);
}

double digital_spectral_efficiency(const FrequencyChannel& fc, const LinkParams& link) {
  link.validate();
  const std::size_t M = fc.n_subcarriers();
  if (M == 0) throw std::invalid_argument("digital_spectral_efficiency: empty channel");
  const double snr_per_stream = link.rho / (static_cast<double>(link.n_streams) * link.noise_var);
  double total = 0.0;
  for (const auto& h : fc.per_subcarrier) {
    const SvdResult d = svd(h);
    const std::size_t k = std::min(link.n_streams, d.singulars.size());
    for (std::size_t i = 0; i < k; ++i) total += std::log2(1.0 + snr_per_stream * d.singulars[i] * d.singulars[i]);
  }
  return total / static_cast<double>(M);
}

std::vector<CMat> normalize_power(const CMat& f_rf, const std::vector<CMat>& f_bb) {
  if (f_bb.empty()) throw std::invalid_argument("normalize_power: no subcarriers");
  if (f_rf.frob_norm2() == 0.0) throw std::invalid_argument("normalize_power: zero analog precoder");
  const double power = transmit_power(f_rf, f_bb);
  if (!(power > 0.0) || !std::isfinite(power))
    throw NumericError("normalize_power: baseband precoders carry no power");
  const double target = static_cast<double>(f_bb.size() * f_bb.front().cols());
  const double c = std::sqrt(target / power);
  std::vector<CMat> out = f_bb;
  for (auto& b : out) b *= c;
  return out;
}

}  // namespace dlhb
