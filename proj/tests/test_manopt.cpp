// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "dlhb/channel.hpp"
#include "dlhb/manopt.hpp"
#include "test_util.hpp"

using namespace dlhb;
using dlhb::test::max_abs_diff;
using dlhb::test::random_cmat;

namespace {

constexpr double kPi = std::numbers::pi;

CMat unit_modulus(std::size_t rows, std::size_t cols, Rng& rng) {
  CMat x = random_cmat(rows, cols, rng);
  for (auto& v : x.values()) v /= std::abs(v);
  return x;
}

bool non_increasing(const std::vector<double>& t) {
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[i - 1] * (1.0 + 1e-12) + 1e-15) return false;
  return true;
}

}  // namespace

TEST_CASE("tangent projection") {
  const CMat x{{1.0, {0.0, 1.0}}};
  // Radial components vanish, tangential ones survive.
  CHECK(max_abs_diff(tangent_project(CMat{{2.0, {0.0, 3.0}}}, x), CMat(1, 2)) < 1e-15);
  CHECK(max_abs_diff(tangent_project(CMat{{{0.0, 2.0}, 3.0}}, x), CMat{{{0.0, 2.0}, 3.0}}) < 1e-15);
  Rng rng = make_rng(2);
  const CMat y = unit_modulus(3, 3, rng);
  const CMat p = tangent_project(random_cmat(3, 3, rng), y);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs((p.values()[i] * std::conj(y.values()[i])).real()) < 1e-14);
  CHECK(max_abs_diff(tangent_project(p, y), p) < 1e-14);
}

TEST_CASE("retraction") {
  const CMat x{{1.0}};
  CHECK(max_abs_diff(retract(x, CMat{{{0.0, 1.0}}}), CMat{{std::polar(1.0, kPi / 4.0)}}) < 1e-15);
  CHECK(max_abs_diff(retract(x, CMat{{0.0}}), x) == 0.0);
  CHECK_THROWS_AS(retract(x, CMat{{-1.0}}), NumericError);
  CHECK(unit_modulus_deviation(random_unit_modulus(4, 5, 3)) < 1e-15);
}

TEST_CASE("analog fit gradient matches finite differences") {
  Rng rng = make_rng(17);
  const CMat a = random_cmat(4, 6, rng);
  const CMat b = random_cmat(2, 6, rng);
  const CMat x = unit_modulus(4, 2, rng);
  const CMat e = random_cmat(4, 2, rng);
  const CMat g = analog_fit_gradient(a, b, x);
  double directional = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) directional += (std::conj(g.values()[i]) * e.values()[i]).real();
  const double h = 1e-6;
  const double fd = (analog_fit_objective(a, b, x + cplx{h, 0.0} * e) - analog_fit_objective(a, b, x - cplx{h, 0.0} * e)) /
                    (2.0 * h);
  CHECK(fd == doctest::Approx(directional).epsilon(1e-7));

  std::vector<CMat> as{a, random_cmat(4, 6, rng)};
  std::vector<CMat> bs{b, random_cmat(2, 6, rng)};
  std::vector<CMat> ws;
  for (int m = 0; m < 2; ++m) {
    const CMat r = random_cmat(4, 4, rng);
    ws.push_back(adjoint_times(r, r) + CMat::identity(4));
  }
  const CMat gw = weighted_fit_gradient(as, ws, bs, x);
  directional = 0.0;
  for (std::size_t i = 0; i < gw.size(); ++i) directional += (std::conj(gw.values()[i]) * e.values()[i]).real();
  const double fdw = (weighted_fit_objective(as, ws, bs, x + cplx{h, 0.0} * e) -
                      weighted_fit_objective(as, ws, bs, x - cplx{h, 0.0} * e)) /
                     (2.0 * h);
  CHECK(fdw == doctest::Approx(directional).epsilon(1e-7));
}

TEST_CASE("weighted objective with identity weights is the plain fit") {
  Rng rng = make_rng(5);
  const CMat a = random_cmat(3, 4, rng);
  const CMat b = random_cmat(2, 4, rng);
  const CMat x = unit_modulus(3, 2, rng);
  CHECK(weighted_fit_objective({a}, {CMat::identity(3)}, {b}, x) ==
        doctest::Approx(analog_fit_objective(a, b, x)).epsilon(1e-13));
}

TEST_CASE("single-entry fit reaches the grid optimum") {
  // min over phi of |a - e^{j phi} b|^2, solved by exhaustive grid search.
  const CMat a{{{0.3, -1.2}, {0.5, 0.1}}};
  const CMat b{{{1.0, 0.4}, {-0.2, 0.8}}};
  double best = 1e300;
  for (int k = 0; k < 200000; ++k) {
    const double phi = 2.0 * kPi * k / 200000.0;
    best = std::min(best, analog_fit_objective(a, b, CMat{{std::polar(1.0, phi)}}));
  }
  MoSettings s;
  s.inner_iters = 500;
  s.grad_tol = 1e-10;
  s.obj_tol = 1e-14;
  const AnalogFit fit = fit_analog(a, b, CMat{{std::polar(1.0, 2.5)}}, s);
  CHECK(analog_fit_objective(a, b, fit.x) == doctest::Approx(best).epsilon(1e-8));
  CHECK(analog_fit_objective(a, b, fit.x) <= best + 1e-12);
  CHECK(non_increasing(fit.report.objective_trace));
}

TEST_CASE("exactly representable targets are recovered") {
  Rng rng = make_rng(44);
  const CMat x_true = unit_modulus(6, 2, rng);
  const CMat b = random_cmat(2, 8, rng);
  MoSettings s;
  s.inner_iters = 2000;
  s.grad_tol = 1e-9;
  s.obj_tol = 1e-15;
  CMat x0 = x_true;
  for (auto& v : x0.values()) v *= std::polar(1.0, 0.3);
  const AnalogFit fit = fit_analog(x_true * b, b, x0, s);
  CHECK(analog_fit_objective(x_true * b, b, fit.x) < 1e-10);
}

TEST_CASE("precoder and combiner designs are monotone and feasible") {
  ChannelConfig c;
  c.n_tx = 16;
  c.n_rx = 4;
  c.n_subcarriers = 4;
  c.seed = 8;
  const LinkParams link = LinkParams::from_snr_db(10.0, 2);
  for (std::uint64_t idx = 0; idx < 4; ++idx) {
    const FrequencyChannel fc = realize_channel(c, idx);
    const HybridDesign d = design_hybrid(fc, link, 4, MoSettings{});
    CHECK(non_increasing(d.precoder.objective_trace));
    CHECK(non_increasing(d.combiner.objective_trace));
    CHECK_NOTHROW(check_invariants(d.bf, 2));
    const double se = spectral_efficiency(fc, d.bf, link);
    CHECK(se > 0.0);
    CHECK(se <= digital_spectral_efficiency(fc, link) + 1e-9);
    for (std::size_t col = 0; col < 4; ++col) {
      CHECK(std::abs(d.bf.f_rf(0, col).imag()) < 1e-12);
      CHECK(d.bf.f_rf(0, col).real() > 0.0);
    }
  }
}

TEST_CASE("design is deterministic in the seed") {
  ChannelConfig c;
  c.n_tx = 8;
  c.n_rx = 4;
  c.n_subcarriers = 2;
  const FrequencyChannel fc = realize_channel(c, 0);
  const LinkParams link = LinkParams::from_snr_db(5.0, 2);
  const HybridDesign a = design_hybrid(fc, link, 3, MoSettings{});
  const HybridDesign b = design_hybrid(fc, link, 3, MoSettings{});
  CHECK(a.bf.f_rf == b.bf.f_rf);
  CHECK(a.bf.w_bb == b.bf.w_bb);
}

TEST_CASE("combiner baseband is the weighted least-squares solution") {
  Rng rng = make_rng(6);
  const CMat w_rf = unit_modulus(4, 2, rng);
  const CMat r = random_cmat(4, 4, rng);
  const CMat lambda = adjoint_times(r, r) + CMat::identity(4);
  const CMat target = random_cmat(4, 2, rng);
  const CMat bb = combiner_baseband(w_rf, lambda, target);
  // Normal equations: W_RF^H Λ (target - W_RF bb) = 0.
  const CMat residual = adjoint_times(w_rf, lambda * (target - w_rf * bb));
  CHECK(residual.frob_norm() < 1e-12);
}

TEST_CASE("canonicalize_gauge preserves products and fixes the gauge") {
  Rng rng = make_rng(13);
  CMat rf = unit_modulus(6, 3, rng);
  std::vector<CMat> bb{random_cmat(3, 2, rng), random_cmat(3, 2, rng)};
  const CMat p0 = rf * bb[0];
  const CMat p1 = rf * bb[1];
  canonicalize_gauge(rf, bb);
  CHECK(max_abs_diff(rf * bb[0], p0) < 1e-13);
  CHECK(max_abs_diff(rf * bb[1], p1) < 1e-13);
  CHECK(unit_modulus_deviation(rf) < 1e-14);
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(rf(0, c) - cplx{1.0, 0.0}) < 1e-14);

  // Any re-gauged copy lands on the same representative.
  CMat rf2 = rf;
  std::vector<CMat> bb2 = bb;
  const cplx d[3] = {std::polar(1.0, 1.0), std::polar(1.0, -2.0), std::polar(1.0, 0.5)};
  const std::size_t perm[3] = {2, 0, 1};
  CMat shuffled(6, 3);
  std::vector<CMat> bb_shuffled(2, CMat(3, 2));
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < 6; ++r) shuffled(r, c) = rf2(r, perm[c]) * d[c];
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t s = 0; s < 2; ++s) bb_shuffled[m](c, s) = bb2[m](perm[c], s) / d[c];
  }
  canonicalize_gauge(shuffled, bb_shuffled);
  CHECK(max_abs_diff(shuffled, rf) < 1e-13);
  CHECK(max_abs_diff(bb_shuffled[1], bb[1]) < 1e-13);
}

TEST_CASE("solver argument checks") {
  MoSettings bad;
  bad.outer_iters = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(solve_precoder(CMat(4, 3), 2, 2, MoSettings{}), std::invalid_argument);
  CHECK_THROWS_AS(solve_precoder(CMat(4, 2), 2, 5, MoSettings{}), std::invalid_argument);
  CHECK_THROWS_AS(fit_analog(CMat(2, 2), CMat(1, 2), CMat{{2.0}, {1.0}}, MoSettings{}), std::invalid_argument);
}
