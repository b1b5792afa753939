// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include <array>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "dlhb/numerics.hpp"
#include "test_util.hpp"

using namespace dlhb;
using dlhb::test::max_abs_diff;
using dlhb::test::random_cmat;

namespace {

CMat reconstruct(const SvdResult& s) {
  CMat sigma = CMat::diag(s.singulars);
  return s.left * sigma * s.right.adjoint();
}

// Eigenvalues of a 2x2 Hermitian matrix from its characteristic quadratic.
std::array<double, 2> eig2_quadratic(const CMat& g) {
  const double a = g(0, 0).real();
  const double d = g(1, 1).real();
  const double off = std::norm(g(0, 1));
  const double tr = a + d;
  const double det = a * d - off;
  const double disc = std::sqrt(tr * tr - 4.0 * det);
  return {(tr + disc) / 2.0, (tr - disc) / 2.0};
}

// Roots of the characteristic cubic of a 3x3 Hermitian matrix
// (trigonometric form; all roots real).
std::array<double, 3> eig3_cubic(const CMat& m) {
  auto re = [&](std::size_t i, std::size_t j) { return m(i, j).real(); };
  const double tr = re(0, 0) + re(1, 1) + re(2, 2);
  const double minors = re(0, 0) * re(1, 1) - std::norm(m(0, 1)) + re(0, 0) * re(2, 2) - std::norm(m(0, 2)) +
                        re(1, 1) * re(2, 2) - std::norm(m(1, 2));
  const cplx det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
                   m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
                   m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
  // lambda^3 - tr lambda^2 + minors lambda - det = 0; substitute lambda = t + tr/3.
  const double p = minors - tr * tr / 3.0;
  const double q = -2.0 * tr * tr * tr / 27.0 + tr * minors / 3.0 - det.real();
  const double r = 2.0 * std::sqrt(-p / 3.0);
  const double phi = std::acos(std::clamp(3.0 * q / (p * r), -1.0, 1.0)) / 3.0;
  std::array<double, 3> out;
  for (int k = 0; k < 3; ++k) out[k] = tr / 3.0 + r * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0);
  return out;
}

}  // namespace

TEST_CASE("svd of a diagonal matrix") {
  const CMat a{{3.0, 0.0}, {0.0, 1.0}};
  const SvdResult s = svd(a);
  CHECK(s.singulars[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(s.singulars[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(dlhb::test::column_phase_distance(s.left, CMat::identity(2)) < 1e-12);
  CHECK(dlhb::test::column_phase_distance(s.right, CMat::identity(2)) < 1e-12);
}

TEST_CASE("svd of a permutation has unit singular values") {
  const SvdResult s = svd(CMat{{0.0, 1.0}, {1.0, 0.0}});
  CHECK(s.singulars[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.singulars[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("svd of a 3x2 matrix matches the Gram-matrix quadratic") {
  const CMat a{{{1, 2}, {0.5, -1}}, {{-0.3, 0.7}, {2, 0}}, {{0.25, 0.25}, {-1, -0.5}}};
  const SvdResult s = svd(a);
  const auto eig = eig2_quadratic(adjoint_times(a, a));
  CHECK(s.singulars[0] == doctest::Approx(std::sqrt(eig[0])).epsilon(1e-12));
  CHECK(s.singulars[1] == doctest::Approx(std::sqrt(eig[1])).epsilon(1e-12));
  // Independent reference values for the same matrix.
  CHECK(s.singulars[0] == doctest::Approx(3.1979255710623877).epsilon(1e-12));
  CHECK(s.singulars[1] == doctest::Approx(1.4065105907689797).epsilon(1e-12));
  CHECK(max_abs_diff(reconstruct(s), a) < 1e-8);
}

TEST_CASE("svd contract on random shapes") {
  Rng rng = make_rng(11);
  for (std::size_t rows : {1u, 2u, 5u, 9u}) {
    for (std::size_t cols : {1u, 3u, 7u}) {
      const CMat a = random_cmat(rows, cols, rng);
      const SvdResult s = svd(a);
      CAPTURE(rows);
      CAPTURE(cols);
      CHECK(s.singulars.size() == std::min(rows, cols));
      CHECK(max_abs_diff(reconstruct(s), a) < 1e-10);
      CHECK(orthonormality_deviation(s.left) < 1e-12);
      CHECK(orthonormality_deviation(s.right) < 1e-12);
      CHECK(std::is_sorted(s.singulars.rbegin(), s.singulars.rend()));
    }
  }
}

TEST_CASE("svd of a rank-deficient matrix completes an orthonormal basis") {
  CMat a(4, 3);
  a(0, 0) = 1.0;
  a(1, 0) = 2.0;  // rank 1
  const SvdResult s = svd(a);
  CHECK(s.singulars[0] == doctest::Approx(std::sqrt(5.0)));
  CHECK(s.singulars[1] < 1e-14);
  CHECK(orthonormality_deviation(s.left) < 1e-12);
  CHECK(max_abs_diff(reconstruct(s), a) < 1e-12);
}

TEST_CASE("svd rejects non-finite input") { CHECK_THROWS(svd(CMat{{std::nan(""), 1.0}})); }

TEST_CASE("lstsq") {
  SUBCASE("identity system") {
    const CMat b{{1.0, {2.0, -1.0}}, {3.0, 0.5}};
    CHECK(max_abs_diff(lstsq(CMat::identity(2), b), b) < 1e-14);
  }
  SUBCASE("mean of two points") {
    const CMat x = lstsq(CMat{{1.0}, {1.0}}, CMat{{0.0}, {2.0}});
    CHECK(std::abs(x(0, 0) - 1.0) < 1e-14);
  }
  SUBCASE("recovers a consistent system") {
    Rng rng = make_rng(5);
    const CMat a = random_cmat(4, 2, rng);
    const CMat x0 = random_cmat(2, 3, rng);
    CHECK(max_abs_diff(lstsq(a, a * x0), x0) < 1e-8);
  }
  SUBCASE("rank deficiency fails explicitly") {
    CHECK_THROWS_AS(lstsq(CMat{{1.0, 2.0}, {2.0, 4.0}}, CMat{{1.0}, {1.0}}), NumericError);
  }
  SUBCASE("shape mismatch") { CHECK_THROWS_AS(lstsq(CMat::identity(2), CMat(3, 1)), std::invalid_argument); }
}

TEST_CASE("cholesky and hpd solve") {
  Rng rng = make_rng(9);
  const CMat b = random_cmat(4, 4, rng);
  const CMat a = adjoint_times(b, b) + CMat::identity(4);
  const CMat l = cholesky(a);
  CHECK(max_abs_diff(l * l.adjoint(), a) < 1e-12);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) CHECK(l(i, j) == cplx{0.0, 0.0});
  const CMat rhs = random_cmat(4, 2, rng);
  CHECK(max_abs_diff(a * solve_hpd(a, rhs), rhs) < 1e-10);
  CHECK_THROWS_AS(cholesky(CMat{{1.0, 2.0}, {2.0, 1.0}}), NumericError);
}

TEST_CASE("logdet2_hpd") {
  CHECK(logdet2_hpd(CMat::identity(5)) == doctest::Approx(0.0));
  CHECK(logdet2_hpd(CMat{{2.0, 0.0}, {0.0, 4.0}}) == doctest::Approx(3.0).epsilon(1e-14));

  const CMat b{{{1, 1}, 2.0, {0, 0.5}}, {0.0, {-1, 0.5}, 1.0}, {{0.3, -0.2}, 0.7, {-1.5, 1}}};
  const CMat a = adjoint_times(b, b) + CMat::identity(3);
  const auto eig = eig3_cubic(a);
  const double oracle = std::log2(eig[0] * eig[1] * eig[2]);
  CHECK(logdet2_hpd(a) == doctest::Approx(oracle).epsilon(1e-10));
  CHECK(logdet2_hpd(a) == doctest::Approx(5.852888382947362).epsilon(1e-12));

  CHECK_THROWS_AS(logdet2_hpd(CMat{{1.0, 0.5}, {0.0, 1.0}}), NumericError);
}

TEST_CASE("deviation measures") {
  CHECK(hermitian_deviation(CMat{{1.0, {0, 1}}, {{0, -1}, 2.0}}) == 0.0);
  CHECK(hermitian_deviation(CMat{{1.0, 1.0}, {0.0, 1.0}}) == doctest::Approx(1.0));
  CHECK(orthonormality_deviation(CMat::identity(3)) == 0.0);
}

TEST_CASE("matrix helpers") {
  const CMat a{{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}};
  const auto parts = split_cols(a, 1);
  REQUIRE(parts.size() == 3);
  CHECK(hstack(parts) == a);
  CHECK(a.cols_range(1, 2) == CMat{{2.0, 3.0}, {5.0, 6.0}});
  CHECK(a.adjoint().rows() == 3);
  CHECK_THROWS(split_cols(a, 2));
  CHECK_THROWS(a * a);
}
