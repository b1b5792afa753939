// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include "dlhb/manopt.hpp"

#include <algorithm>
#include <numeric>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "dlhb/rng.hpp"

namespace dlhb {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 30;
constexpr std::uint64_t kPrecoderStream = 0x50524543ULL;  // "PREC"
constexpr std::uint64_t kCombinerStream = 0x434f4d42ULL;  // "COMB"

// Steepest descent on the circle manifold. `value(x)` and `egrad(x)` define
// the cost; `lipschitz` bounds the Euclidean gradient's Lipschitz constant
// and sets the first trial step.
template <typename Value, typename Grad>
AnalogFit riemannian_descent(const CMat& x0, Value value, Grad egrad, double lipschitz,
                             const MoSettings& settings) {
  AnalogFit out{x0, {}};
  MoReport& rep = out.report;
  double f = value(out.x);
  rep.objective_trace.push_back(f);
  double alpha = settings.step_init / std::max(lipschitz, 1e-300);

  for (std::size_t it = 0; it < settings.inner_iters; ++it) {
    const CMat g = tangent_project(egrad(out.x), out.x);
    const double gn2 = g.frob_norm2();
    if (std::sqrt(gn2) < settings.grad_tol) {
      rep.converged = true;
      return out;
    }
    bool accepted = false;
    CMat next;
    double f_next = f;
    for (int h = 0; h <= kMaxHalvings; ++h, alpha *= 0.5) {
      try {
        next = retract(out.x, (-alpha) * g);
      } catch (const NumericError&) {
        continue;
      }
      f_next = value(next);
      if (f_next <= f - kArmijo * alpha * gn2) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      rep.converged = false;
      rep.line_search_failed = true;
      return out;
    }
    const double decrease = f - f_next;
    out.x = std::move(next);
    f = f_next;
    rep.objective_trace.push_back(f);
    ++rep.iters_used;
    if (decrease <= settings.obj_tol * std::max(std::abs(rep.objective_trace[rep.objective_trace.size() - 2]), 1e-300)) {
      rep.converged = true;
      return out;
    }
    alpha *= 2.0;
  }
  return out;
}

std::vector<CMat> blocks_of(const CMat& all, std::size_t n_streams) { return split_cols(all, n_streams); }

}  // namespace

void MoSettings::validate() const {
  if (outer_iters == 0 || inner_iters == 0) throw std::invalid_argument("mo: iteration caps must be >= 1");
  if (!(grad_tol > 0.0) || !(obj_tol > 0.0) || !(step_init > 0.0))
    throw std::invalid_argument("mo: tolerances and step must be > 0");
}

CMat tangent_project(const CMat& egrad, const CMat& x) {
  if (egrad.rows() != x.rows() || egrad.cols() != x.cols())
    throw std::invalid_argument("tangent_project: shape mismatch");
  CMat out = egrad;
  auto o = out.values();
  const auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= (o[i] * std::conj(xv[i])).real() * xv[i];
  return out;
}

CMat retract(const CMat& x, const CMat& v) {
  if (v.rows() != x.rows() || v.cols() != x.cols()) throw std::invalid_argument("retract: shape mismatch");
  CMat out = x + v;
  for (auto& e : out.values()) {
    const double mag = std::abs(e);
    if (!(mag >= 1e-14)) throw NumericError("retract: degenerate step (|x + v| < 1e-14)");
    e /= mag;
  }
  return out;
}

CMat random_unit_modulus(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  CMat out(rows, cols);
  for (auto& e : out.values()) e = std::polar(1.0, phase(rng));
  return out;
}

double analog_fit_objective(const CMat& a, const CMat& b, const CMat& x) { return (a - x * b).frob_norm2(); }

CMat analog_fit_gradient(const CMat& a, const CMat& b, const CMat& x) {
  CMat g = (a - x * b) * b.adjoint();
  g *= -2.0;
  return g;
}

AnalogFit fit_analog(const CMat& a, const CMat& b, const CMat& x0, const MoSettings& settings) {
  settings.validate();
  if (a.rows() != x0.rows() || b.rows() != x0.cols() || a.cols() != b.cols())
    throw std::invalid_argument("fit_analog: inconsistent dimensions");
  if (unit_modulus_deviation(x0) > 1e-12) throw std::invalid_argument("fit_analog: x0 is not unit-modulus");
  const double lip = 2.0 * b.frob_norm2();
  return riemannian_descent(
      x0, [&](const CMat& x) { return analog_fit_objective(a, b, x); },
      [&](const CMat& x) { return analog_fit_gradient(a, b, x); }, lip, settings);
}

double weighted_fit_objective(const std::vector<CMat>& a, const std::vector<CMat>& weights,
                              const std::vector<CMat>& b, const CMat& x) {
  double f = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    const CMat r = a[m] - x * b[m];
    const CMat wr = weights[m] * r;
    const auto rv = r.values();
    const auto wv = wr.values();
    for (std::size_t i = 0; i < rv.size(); ++i) f += (std::conj(rv[i]) * wv[i]).real();
  }
  return f;
}

CMat weighted_fit_gradient(const std::vector<CMat>& a, const std::vector<CMat>& weights,
                           const std::vector<CMat>& b, const CMat& x) {
  CMat g(x.rows(), x.cols());
  for (std::size_t m = 0; m < a.size(); ++m) g += weights[m] * (a[m] - x * b[m]) * b[m].adjoint();
  g *= -2.0;
  return g;
}

AnalogFit fit_analog_weighted(const std::vector<CMat>& a, const std::vector<CMat>& weights,
                              const std::vector<CMat>& b, const CMat& x0, const MoSettings& settings) {
  settings.validate();
  if (a.size() != weights.size() || a.size() != b.size() || a.empty())
    throw std::invalid_argument("fit_analog_weighted: block counts differ");
  for (std::size_t m = 0; m < a.size(); ++m) {
    if (a[m].rows() != x0.rows() || b[m].rows() != x0.cols() || a[m].cols() != b[m].cols() ||
        weights[m].rows() != x0.rows() || weights[m].cols() != x0.rows())
      throw std::invalid_argument("fit_analog_weighted: inconsistent dimensions");
  }
  if (unit_modulus_deviation(x0) > 1e-12) throw std::invalid_argument("fit_analog_weighted: x0 is not unit-modulus");
  double lip = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) lip += 2.0 * weights[m].frob_norm() * b[m].frob_norm2();
  return riemannian_descent(
      x0, [&](const CMat& x) { return weighted_fit_objective(a, weights, b, x); },
      [&](const CMat& x) { return weighted_fit_gradient(a, weights, b, x); }, lip, settings);
}

namespace {

PrecoderSolution solve_precoder_from(const CMat& f_opt_all, std::size_t n_streams, std::size_t n_rf,
                                     const MoSettings& settings, std::uint64_t seed, bool& initial_failure) {
  initial_failure = false;
  CMat f_rf = random_unit_modulus(f_opt_all.rows(), n_rf, make_rng(seed, {kPrecoderStream})());
  CMat f_bb_all = lstsq(f_rf, f_opt_all);
  PrecoderSolution out;
  MoReport& rep = out.report;
  double f = analog_fit_objective(f_opt_all, f_bb_all, f_rf);
  rep.objective_trace.push_back(f);

  for (std::size_t k = 0; k < settings.outer_iters; ++k) {
    AnalogFit fit = fit_analog(f_opt_all, f_bb_all, f_rf, settings);
    if (k == 0 && fit.report.line_search_failed && fit.report.iters_used == 0) {
      initial_failure = true;
      return out;
    }
    f_rf = std::move(fit.x);
    f_bb_all = lstsq(f_rf, f_opt_all);
    const double f_next = analog_fit_objective(f_opt_all, f_bb_all, f_rf);
    rep.objective_trace.push_back(f_next);
    ++rep.iters_used;
    const double decrease = f - f_next;
    f = f_next;
    if (decrease <= settings.obj_tol * std::max(f + decrease, 1e-300)) {
      rep.converged = true;
      break;
    }
  }
  out.f_bb = normalize_power(f_rf, blocks_of(f_bb_all, n_streams));
  out.f_rf = std::move(f_rf);
  return out;
}

}  // namespace

PrecoderSolution solve_precoder(const CMat& f_opt_all, std::size_t n_streams, std::size_t n_rf,
                                const MoSettings& settings) {
  settings.validate();
  if (n_streams == 0 || f_opt_all.cols() % n_streams != 0)
    throw std::invalid_argument("solve_precoder: width is not a multiple of N_S");
  if (n_rf == 0 || n_rf > f_opt_all.rows()) throw std::invalid_argument("solve_precoder: need 1 <= N_RF <= N_T");
  bool failed = false;
  PrecoderSolution out = solve_precoder_from(f_opt_all, n_streams, n_rf, settings, settings.seed, failed);
  if (failed) out = solve_precoder_from(f_opt_all, n_streams, n_rf, settings, settings.seed + 1, failed);
  if (failed) throw NumericError("solve_precoder: line search failed at the initial point for two seeds");
  return out;
}

CMat combiner_baseband(const CMat& w_rf, const CMat& lambda, const CMat& w_mmse) {
  const CMat lw = lambda * w_rf;
  try {
    return solve_hpd(hermitian_part(adjoint_times(w_rf, lw)), adjoint_times(lw, w_mmse));
  } catch (const NumericError& e) {
    throw NumericError(std::string("solve_combiner: W_RF^H Lambda W_RF is singular: ") + e.what());
  }
}

CombinerSolution solve_combiner(const CMat& w_mmse_all, const std::vector<CMat>& lambdas, std::size_t n_streams,
                                std::size_t n_rf, const MoSettings& settings) {
  settings.validate();
  if (n_streams == 0 || w_mmse_all.cols() % n_streams != 0)
    throw std::invalid_argument("solve_combiner: width is not a multiple of N_S");
  const std::vector<CMat> targets = blocks_of(w_mmse_all, n_streams);
  const std::size_t M = targets.size();
  if (lambdas.size() != M) throw std::invalid_argument("solve_combiner: one covariance per subcarrier required");
  if (n_rf == 0 || n_rf > w_mmse_all.rows()) throw std::invalid_argument("solve_combiner: need 1 <= N_RF <= N_R");

  // Positive rescaling of targets and covariances leaves the minimizer
  // unchanged; it keeps the absolute tolerances meaningful.
  const double t_scale = w_mmse_all.frob_norm();
  double l_scale = 0.0;
  for (const auto& l : lambdas) l_scale = std::max(l_scale, l.frob_norm());
  if (!(t_scale > 0.0) || !(l_scale > 0.0)) throw NumericError("solve_combiner: zero targets or covariances");
  std::vector<CMat> a = targets;
  std::vector<CMat> w = lambdas;
  for (auto& x : a) x *= 1.0 / t_scale;
  for (auto& x : w) x *= 1.0 / l_scale;

  auto basebands = [&](const CMat& w_rf) {
    std::vector<CMat> bb(M);
    for (std::size_t m = 0; m < M; ++m) bb[m] = combiner_baseband(w_rf, w[m], a[m]);
    return bb;
  };

  CombinerSolution out;
  MoReport& rep = out.report;
  CMat w_rf = random_unit_modulus(w_mmse_all.rows(), n_rf, make_rng(settings.seed, {kCombinerStream})());
  std::vector<CMat> bb = basebands(w_rf);
  double f = weighted_fit_objective(a, w, bb, w_rf);
  rep.objective_trace.push_back(f);
  for (std::size_t k = 0; k < settings.outer_iters; ++k) {
    AnalogFit fit = fit_analog_weighted(a, w, bb, w_rf, settings);
    w_rf = std::move(fit.x);
    bb = basebands(w_rf);
    const double f_next = weighted_fit_objective(a, w, bb, w_rf);
    rep.objective_trace.push_back(f_next);
    ++rep.iters_used;
    const double decrease = f - f_next;
    f = f_next;
    if (decrease <= settings.obj_tol * std::max(f + decrease, 1e-300)) {
      rep.converged = true;
      break;
    }
  }
  out.w_bb.resize(M);
  for (std::size_t m = 0; m < M; ++m) out.w_bb[m] = combiner_baseband(w_rf, lambdas[m], targets[m]);
  out.w_rf = std::move(w_rf);
  return out;
}

void canonicalize_gauge(CMat& rf, std::vector<CMat>& bb) {
  const std::size_t n = rf.cols();
  std::vector<double> freq(n);
  for (std::size_t c = 0; c < n; ++c) {
    const cplx rot = std::polar(1.0, -std::arg(rf(0, c)));
    for (std::size_t r = 0; r < rf.rows(); ++r) rf(r, c) *= rot;
    for (auto& b : bb)
      for (std::size_t s = 0; s < b.cols(); ++s) b(c, s) /= rot;
    cplx step{0.0, 0.0};
    for (std::size_t r = 0; r + 1 < rf.rows(); ++r) step += rf(r + 1, c) * std::conj(rf(r, c));
    freq[c] = std::arg(step);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freq[a] < freq[b]; });
  CMat rf_sorted(rf.rows(), n);
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t r = 0; r < rf.rows(); ++r) rf_sorted(r, c) = rf(r, order[c]);
  rf = std::move(rf_sorted);
  for (auto& b : bb) {
    CMat sorted(b.rows(), b.cols());
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t s = 0; s < b.cols(); ++s) sorted(c, s) = b(order[c], s);
    b = std::move(sorted);
  }
}

HybridDesign design_hybrid(const FrequencyChannel& fc, const LinkParams& link, std::size_t n_rf,
                           const MoSettings& settings) {
  link.validate();
  const std::size_t M = fc.n_subcarriers();
  if (M == 0) throw std::invalid_argument("design_hybrid: empty channel");
  const std::size_t ns = link.n_streams;

  std::vector<CMat> f_opt(M);
  for (std::size_t m = 0; m < M; ++m) f_opt[m] = optimal_precoder(fc.per_subcarrier[m], ns, m);
  PrecoderSolution prec = solve_precoder(hstack(f_opt), ns, n_rf, settings);

  std::vector<CMat> w_mmse(M);
  std::vector<CMat> lambdas(M);
  for (std::size_t m = 0; m < M; ++m) {
    w_mmse[m] = mmse_combiner(fc.per_subcarrier[m], f_opt[m], link);
    lambdas[m] = output_covariance(fc.per_subcarrier[m], prec.f_rf, prec.f_bb[m], link);
  }
  CombinerSolution comb = solve_combiner(hstack(w_mmse), lambdas, ns, n_rf, settings);

  canonicalize_gauge(prec.f_rf, prec.f_bb);
  canonicalize_gauge(comb.w_rf, comb.w_bb);

  HybridDesign out;
  out.bf.f_rf = std::move(prec.f_rf);
  out.bf.f_bb = std::move(prec.f_bb);
  out.bf.w_rf = std::move(comb.w_rf);
  out.bf.w_bb = std::move(comb.w_bb);
  out.precoder = std::move(prec.report);
  out.combiner = std::move(comb.report);
  return out;
}

}  // namespace dlhb
