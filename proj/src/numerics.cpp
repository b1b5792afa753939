// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The dlhb Authors

#include "dlhb/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dlhb {

CMat::CMat(std::initializer_list<std::initializer_list<cplx>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("CMat: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

CMat CMat::identity(std::size_t n) {
  CMat out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

CMat CMat::diag(std::span<const double> values) {
  CMat out(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out(i, i) = values[i];
  return out;
}

CMat CMat::column(std::span<const cplx> values) {
  CMat out(values.size(), 1);
  std::copy(values.begin(), values.end(), out.data_.begin());
  return out;
}

CMat CMat::adjoint() const {
  CMat out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
  return out;
}

CMat CMat::conj() const {
  CMat out = *this;
  for (auto& v : out.data_) v = std::conj(v);
  return out;
}

CMat CMat::cols_range(std::size_t first, std::size_t count) const {
  if (first + count > cols_) throw std::out_of_range("CMat::cols_range");
  CMat out(rows_, count);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = (*this)(r, first + c);
  return out;
}

void CMat::set_cols(std::size_t first, const CMat& block) {
  if (block.rows_ != rows_ || first + block.cols_ > cols_)
    throw std::out_of_range("CMat::set_cols");
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < block.cols_; ++c) (*this)(r, first + c) = block(r, c);
}

std::vector<cplx> CMat::col(std::size_t c) const {
  std::vector<cplx> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

double CMat::frob_norm2() const {
  double s = 0.0;
  for (const auto& v : data_) s += std::norm(v);
  return s;
}

double CMat::frob_norm() const { return std::sqrt(frob_norm2()); }

bool CMat::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](const cplx& v) {
    return std::isfinite(v.real()) && std::isfinite(v.imag());
  });
}

CMat& CMat::operator+=(const CMat& o) {
  if (o.rows_ != rows_ || o.cols_ != cols_) throw std::invalid_argument("CMat +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

CMat& CMat::operator-=(const CMat& o) {
  if (o.rows_ != rows_ || o.cols_ != cols_) throw std::invalid_argument("CMat -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

CMat& CMat::operator*=(cplx s) {
  for (auto& v : data_) v *= s;
  return *this;
}

CMat operator+(CMat a, const CMat& b) { return a += b; }
CMat operator-(CMat a, const CMat& b) { return a -= b; }
CMat operator*(cplx s, CMat a) { return a *= s; }

CMat operator*(const CMat& a, const CMat& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("CMat *: inner dimension mismatch");
  CMat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cplx aik = a(i, k);
      if (aik == cplx{}) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

CMat adjoint_times(const CMat& a, const CMat& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("adjoint_times: row mismatch");
  CMat out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const cplx aki = std::conj(a(k, i));
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
  }
  return out;
}

CMat hstack(std::span<const CMat> blocks) {
  if (blocks.empty()) return {};
  const std::size_t rows = blocks.front().rows();
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) throw std::invalid_argument("hstack: row mismatch");
    cols += b.cols();
  }
  CMat out(rows, cols);
  std::size_t at = 0;
  for (const auto& b : blocks) {
    out.set_cols(at, b);
    at += b.cols();
  }
  return out;
}

std::vector<CMat> split_cols(const CMat& a, std::size_t block_cols) {
  if (block_cols == 0 || a.cols() % block_cols != 0)
    throw std::invalid_argument("split_cols: width not a multiple of block size");
  std::vector<CMat> out;
  out.reserve(a.cols() / block_cols);
  for (std::size_t c = 0; c < a.cols(); c += block_cols) out.push_back(a.cols_range(c, block_cols));
  return out;
}

CMat hermitian_part(const CMat& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("hermitian_part: not square");
  CMat out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = 0.5 * (a(i, j) + std::conj(a(j, i)));
  return out;
}

double hermitian_deviation(const CMat& a) {
  if (a.rows() != a.cols()) return INFINITY;
  double dev = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) dev = std::max(dev, std::abs(a(i, j) - std::conj(a(j, i))));
  return dev;
}

double orthonormality_deviation(const CMat& a) {
  const CMat g = adjoint_times(a, a);
  double dev = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) dev = std::max(dev, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return dev;
}

namespace {

constexpr int kMaxJacobiSweeps = 80;

using Column = std::vector<cplx>;

double norm2(const Column& v) {
  double s = 0.0;
  for (const auto& x : v) s += std::norm(x);
  return s;
}

cplx inner(const Column& a, const Column& b) {
  cplx s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

// Removes the components along `basis` twice (classical Gram-Schmidt with
// reorthogonalization) and normalizes. Returns false if nothing is left.
bool orthonormalize_against(Column& v, const std::vector<Column>& basis) {
  const double start = std::sqrt(norm2(v));
  if (start == 0.0) return false;
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& q : basis) {
      const cplx p = inner(q, v);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * q[i];
    }
  }
  const double n = std::sqrt(norm2(v));
  if (n <= 1e-8 * start) return false;
  for (auto& x : v) x /= n;
  return true;
}

// Tall case: rows >= cols.
SvdResult svd_tall(const CMat& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();

  std::vector<Column> work(n, Column(m));
  std::vector<Column> v(n, Column(n));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) work[j][i] = a(i, j);
    v[j][j] = 1.0;
  }

  bool converged = n < 2;
  for (int sweep = 0; sweep < kMaxJacobiSweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = norm2(work[p]);
        const double beta = norm2(work[q]);
        const cplx gamma = inner(work[p], work[q]);
        const double g = std::abs(gamma);
        if (alpha == 0.0 || beta == 0.0 || g <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;

        const cplx phase = std::conj(gamma) / g;  // e^{-i arg(gamma)}
        const double zeta = (beta - alpha) / (2.0 * g);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;

        auto rotate = [&](Column& x, Column& y) {
          for (std::size_t i = 0; i < x.size(); ++i) {
            const cplx xp = x[i];
            const cplx yq = y[i] * phase;
            x[i] = c * xp - s * yq;
            y[i] = s * xp + c * yq;
          }
        };
        rotate(work[p], work[q]);
        rotate(v[p], v[q]);
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "svd: Jacobi sweeps did not converge after " << kMaxJacobiSweeps << " sweeps (" << m << "x" << n
        << " input, Frobenius norm " << a.frob_norm() << ")";
    throw NumericError(msg.str());
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(norm2(work[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double smax = n > 0 ? sigma[order[0]] : 0.0;
  std::vector<Column> left;
  left.reserve(n);
  SvdResult out{CMat(m, n), std::vector<double>(n), CMat(n, n)};
  std::size_t next_unit = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    Column u = work[j];
    bool ok = false;
    if (sigma[j] > 1e-300 && sigma[j] > 1e-14 * smax) {
      for (auto& x : u) x /= sigma[j];
      ok = orthonormalize_against(u, left);
    }
    // Null-space directions get any completion of the orthonormal set.
    while (!ok) {
      if (next_unit >= m) throw NumericError("svd: failed to complete left basis");
      u.assign(m, cplx{});
      u[next_unit++] = 1.0;
      ok = orthonormalize_against(u, left);
    }
    left.push_back(u);
    out.singulars[k] = sigma[j];
    for (std::size_t i = 0; i < m; ++i) out.left(i, k) = u[i];
    for (std::size_t i = 0; i < n; ++i) out.right(i, k) = v[j][i];
  }
  return out;
}

}  // namespace

SvdResult svd(const CMat& a) {
  if (!a.all_finite()) throw NumericError("svd: non-finite input");
  if (a.rows() >= a.cols()) return svd_tall(a);
  SvdResult t = svd_tall(a.adjoint());
  return SvdResult{std::move(t.right), std::move(t.singulars), std::move(t.left)};
}

CMat lstsq(const CMat& a, const CMat& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("lstsq: row mismatch");
  if (a.rows() < a.cols()) throw NumericError("lstsq: underdetermined system has no full column rank");
  const SvdResult d = svd(a);
  const double smax = d.singulars.front();
  const double smin = d.singulars.back();
  if (!(smin >= 1e-12 * smax) || smax == 0.0) {
    std::ostringstream msg;
    msg << "lstsq: rank-deficient matrix (singular values " << smax << " .. " << smin << ")";
    throw NumericError(msg.str());
  }
  CMat coeff = adjoint_times(d.left, b);
  for (std::size_t i = 0; i < coeff.rows(); ++i)
    for (std::size_t j = 0; j < coeff.cols(); ++j) coeff(i, j) /= d.singulars[i];
  return d.right * coeff;
}

CMat cholesky(const CMat& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("cholesky: not square");
  CMat l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double diag = a(j, j).real();
    double d = diag;
    for (std::size_t k = 0; k < j; ++k) d -= std::norm(l(j, k));
    // A pivot at roundoff level of its diagonal entry means a singular matrix.
    if (!(d > 1e-13 * std::abs(diag)) || !std::isfinite(d)) {
      std::ostringstream msg;
      msg << "cholesky: matrix is not positive definite (pivot " << j << " = " << d << ")";
      throw NumericError(msg.str());
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      cplx s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
      l(i, j) = s / ljj;
    }
  }
  return l;
}

CMat solve_hpd(const CMat& a, const CMat& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("solve_hpd: row mismatch");
  const CMat l = cholesky(a);
  const std::size_t n = l.rows();
  CMat x = b;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      cplx s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      cplx s = x(i, c);
      for (std::size_t k = i + 1; k < n; ++k) s -= std::conj(l(k, i)) * x(k, c);
      x(i, c) = s / l(i, i);
    }
  }
  return x;
}

double logdet2_hpd(const CMat& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("logdet2_hpd: not square");
  double scale = 1.0;
  for (const auto& v : a.values()) scale = std::max(scale, std::abs(v));
  const double dev = hermitian_deviation(a);
  if (dev > 1e-10 * scale) {
    std::ostringstream msg;
    msg << "logdet2_hpd: input is not Hermitian (deviation " << dev << ")";
    throw NumericError(msg.str());
  }
  const CMat l = cholesky(hermitian_part(a));
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log2(l(i, i).real());
  return 2.0 * s;
}

}  // namespace dlhb
