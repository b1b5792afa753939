// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors
//
// Dense complex linear algebra used throughout the beamforming pipeline.

#ifndef DLHB_NUMERICS_HPP
#define DLHB_NUMERICS_HPP

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlhb {

using cplx = std::complex<double>;

/// Raised by every numeric kernel that cannot honor its contract
/// (non-convergence, rank deficiency, loss of definiteness).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense complex matrix, row-major.
class CMat {
 public:
  CMat() = default;
  CMat(std::size_t rows, std::size_t cols, cplx fill = {0.0, 0.0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  CMat(std::initializer_list<std::initializer_list<cplx>> rows);

  static CMat identity(std::size_t n);
  static CMat diag(std::span<const double> values);
  static CMat column(std::span<const cplx> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<cplx> values() { return data_; }
  std::span<const cplx> values() const { return data_; }

  CMat adjoint() const;
  CMat conj() const;
  /// Columns [first, first + count).
  CMat cols_range(std::size_t first, std::size_t count) const;
  void set_cols(std::size_t first, const CMat& block);
  std::vector<cplx> col(std::size_t c) const;

  double frob_norm2() const;
  double frob_norm() const;
  bool all_finite() const;

  CMat& operator+=(const CMat& o);
  CMat& operator-=(const CMat& o);
  CMat& operator*=(cplx s);

  friend bool operator==(const CMat&, const CMat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

CMat operator+(CMat a, const CMat& b);
CMat operator-(CMat a, const CMat& b);
CMat operator*(const CMat& a, const CMat& b);
CMat operator*(cplx s, CMat a);

/// aᴴ·b without forming the adjoint.
CMat adjoint_times(const CMat& a, const CMat& b);
/// Horizontal concatenation [blocks[0], blocks[1], ...]; all blocks share a row count.
CMat hstack(std::span<const CMat> blocks);
/// Inverse of hstack for equal-width blocks.
std::vector<CMat> split_cols(const CMat& a, std::size_t block_cols);
/// (a + aᴴ)/2.
CMat hermitian_part(const CMat& a);

struct SvdResult {
  CMat left;                    // rows(a) x r, orthonormal columns
  std::vector<double> singulars;  // length r = min(rows, cols), descending
  CMat right;                   // cols(a) x r, orthonormal columns
};

/// Thin SVD by one-sided Jacobi rotations.
SvdResult svd(const CMat& a);

/// Least-squares solution of a·x ≈ b for full-column-rank a.
CMat lstsq(const CMat& a, const CMat& b);

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix.
CMat cholesky(const CMat& a);

/// Solves a·x = b for Hermitian positive definite a.
CMat solve_hpd(const CMat& a, const CMat& b);

/// log₂ det(a) of a Hermitian positive definite matrix, from Cholesky pivots.
double logdet2_hpd(const CMat& a);

/// Max |aᵢⱼ - conj(aⱼᵢ)|, zero for Hermitian input.
double hermitian_deviation(const CMat& a);

/// Max |(aᴴa - I)ᵢⱼ|.
double orthonormality_deviation(const CMat& a);

}  // namespace dlhb

#endif  // DLHB_NUMERICS_HPP
