// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors
//
// Riemannian descent on the complex-circle manifold (matrices whose every
// entry has unit modulus) and the alternating hybrid precoder / combiner
// fits built on it.

#ifndef DLHB_MANOPT_HPP
#define DLHB_MANOPT_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dlhb/beamforming.hpp"
#include "dlhb/numerics.hpp"

namespace dlhb {

struct MoSettings {
  std::size_t outer_iters = 10;
  std::size_t inner_iters = 50;
  double grad_tol = 1e-6;
  double obj_tol = 1e-6;
  double step_init = 1.0;  // in units of 1 / (Lipschitz bound of the Euclidean gradient)
  std::uint64_t seed = 1;

  void validate() const;
};

struct MoReport {
  std::vector<double> objective_trace;
  bool converged = false;
  bool line_search_failed = false;
  std::size_t iters_used = 0;
};

/// egrad - Re{egrad ⊙ conj(x)} ⊙ x.
CMat tangent_project(const CMat& egrad, const CMat& x);

/// Entrywise (x + v) / |x + v|. Throws NumericError on a degenerate step.
CMat retract(const CMat& x, const CMat& v);

/// I.i.d. uniform phases on [0, 2*pi).
CMat random_unit_modulus(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// ||a - x b||_F^2.
double analog_fit_objective(const CMat& a, const CMat& b, const CMat& x);
/// Euclidean gradient -2 (a - x b) bᴴ, in the convention
/// d f(x + t e) / dt = Re tr(gradᴴ e).
CMat analog_fit_gradient(const CMat& a, const CMat& b, const CMat& x);

struct AnalogFit {
  CMat x;
  MoReport report;
};

/// Minimizes ||a - x b||_F^2 over unit-modulus x by steepest descent with
/// Armijo backtracking (constant 1e-4, step halving, at most 30 halvings).
AnalogFit fit_analog(const CMat& a, const CMat& b, const CMat& x0, const MoSettings& settings);

/// Weighted fit sum_m ||Λ_m^{1/2} (a_m - x b_m)||_F^2, the quantity the
/// closed-form combiner baseband stage minimizes exactly.
double weighted_fit_objective(const std::vector<CMat>& a, const std::vector<CMat>& weights,
                              const std::vector<CMat>& b, const CMat& x);
CMat weighted_fit_gradient(const std::vector<CMat>& a, const std::vector<CMat>& weights,
                           const std::vector<CMat>& b, const CMat& x);
AnalogFit fit_analog_weighted(const std::vector<CMat>& a, const std::vector<CMat>& weights,
                              const std::vector<CMat>& b, const CMat& x0, const MoSettings& settings);

struct PrecoderSolution {
  CMat f_rf;
  std::vector<CMat> f_bb;  // power-normalized
  MoReport report;         // trace of ||F_opt - F_RF F_BB||_F^2 before normalization
};

/// Alternates least-squares baseband updates with analog fits on
/// f_opt_all = [F_opt[1], ..., F_opt[M]].
PrecoderSolution solve_precoder(const CMat& f_opt_all, std::size_t n_streams, std::size_t n_rf,
                                const MoSettings& settings);

/// (W_RFᴴ Λ W_RF)⁻¹ W_RFᴴ Λ W_MMSE.
CMat combiner_baseband(const CMat& w_rf, const CMat& lambda, const CMat& w_mmse);

struct CombinerSolution {
  CMat w_rf;
  std::vector<CMat> w_bb;
  MoReport report;  // trace of the covariance-weighted fit, scale-normalized
};

/// Alternates closed-form baseband combiners with analog fits on
/// w_mmse_all = [W_MMSE[1], ..., W_MMSE[M]].
CombinerSolution solve_combiner(const CMat& w_mmse_all, const std::vector<CMat>& lambdas, std::size_t n_streams,
                                std::size_t n_rf, const MoSettings& settings);

/// Removes the gauge freedom rf -> rf D P, bb -> Pᵀ D⁻¹ bb (D unit-modulus
/// diagonal, P a permutation): the first row of rf becomes real positive and
/// columns are ordered by their mean phase progression down the array.
/// The products rf * bb[m] are unchanged.
void canonicalize_gauge(CMat& rf, std::vector<CMat>& bb);

struct HybridDesign {
  HybridBeamformer bf;
  MoReport precoder;
  MoReport combiner;
};

/// Full decoupled design for one channel: SVD precoders, precoder fit,
/// MMSE combiners, combiner fit.
HybridDesign design_hybrid(const FrequencyChannel& fc, const LinkParams& link, std::size_t n_rf,
                           const MoSettings& settings);

}  // namespace dlhb

#endif  // DLHB_MANOPT_HPP
