#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mpopf/phase.hpp"

namespace mpopf {

/// Dense complex Hermitian matrix of dimension <= 6, stored through its n^2
/// real parameters: the real diagonal followed by (re, im) pairs of the
/// strict lower triangle in row-major order. Every representable value is
/// Hermitian, so floating-point drift can never break the symmetry.
class HermitianMatrix {
 public:
  static constexpr int kMaxDim = 6;

  HermitianMatrix() = default;
  explicit HermitianMatrix(int n) : n_(n) {
    if (n < 0 || n > kMaxDim) throw std::invalid_argument("HermitianMatrix dimension must be in [0, 6]");
  }

  static HermitianMatrix zero(int n) { return HermitianMatrix(n); }

  static HermitianMatrix identity(int n) {
    HermitianMatrix h(n);
    for (int k = 0; k < n; ++k) h.p_[k] = 1.0;
    return h;
  }

  /// Orthogonal projection of a square matrix onto the Hermitian matrices,
  /// (m + m^H) / 2. Exact for inputs that are already Hermitian.
  static HermitianMatrix from_dense(const CMatrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("HermitianMatrix::from_dense: matrix is not square");
    HermitianMatrix h(static_cast<int>(m.rows()));
    for (int r = 0; r < h.n_; ++r) {
      h.p_[r] = m(r, r).real();
      for (int c = 0; c < r; ++c) {
        const complex v = 0.5 * (m(r, c) + std::conj(m(c, r)));
        h.p_[h.offdiag_index(r, c)] = v.real();
        h.p_[h.offdiag_index(r, c) + 1] = v.imag();
      }
    }
    return h;
  }

  /// Outer product u u^H.
  static HermitianMatrix outer(const CVector& u) {
    CMatrix m = u * u.adjoint();
    return from_dense(m);
  }

  int dim() const { return n_; }
  int param_count() const { return n_ * n_; }

  complex operator()(int r, int c) const {
    if (r == c) return {p_[r], 0.0};
    if (r > c) return {p_[offdiag_index(r, c)], p_[offdiag_index(r, c) + 1]};
    return {p_[offdiag_index(c, r)], -p_[offdiag_index(c, r) + 1]};
  }

  void set(int r, int c, complex value) {
    if (r == c) {
      if (value.imag() != 0.0) throw std::invalid_argument("HermitianMatrix::set: diagonal entries must be real");
      p_[r] = value.real();
    } else if (r > c) {
      p_[offdiag_index(r, c)] = value.real();
      p_[offdiag_index(r, c) + 1] = value.imag();
    } else {
      p_[offdiag_index(c, r)] = value.real();
      p_[offdiag_index(c, r) + 1] = -value.imag();
    }
  }

  double diag(int k) const { return p_[k]; }
  void set_diag(int k, double value) { p_[k] = value; }

  /// Raw parameter access, see the class comment for the layout.
  double param(int k) const { return p_[k]; }
  double& param(int k) { return p_[k]; }

  /// Frobenius weight of parameter k: 1 on the diagonal, 2 off it, so that
  /// <x, y> = sum_k weight(k) * x.param(k) * y.param(k).
  double param_weight(int k) const { return k < n_ ? 1.0 : 2.0; }

  CMatrix dense() const {
    CMatrix m(n_, n_);
    for (int r = 0; r < n_; ++r)
      for (int c = 0; c < n_; ++c) m(r, c) = (*this)(r, c);
    return m;
  }

  HermitianMatrix& operator+=(const HermitianMatrix& o) {
    check_same(o);
    for (int k = 0; k < param_count(); ++k) p_[k] += o.p_[k];
    return *this;
  }
  HermitianMatrix& operator-=(const HermitianMatrix& o) {
    check_same(o);
    for (int k = 0; k < param_count(); ++k) p_[k] -= o.p_[k];
    return *this;
  }
  HermitianMatrix& operator*=(double s) {
    for (int k = 0; k < param_count(); ++k) p_[k] *= s;
    return *this;
  }
  friend HermitianMatrix operator+(HermitianMatrix a, const HermitianMatrix& b) { return a += b; }
  friend HermitianMatrix operator-(HermitianMatrix a, const HermitianMatrix& b) { return a -= b; }
  friend HermitianMatrix operator*(double s, HermitianMatrix a) { return a *= s; }
  friend HermitianMatrix operator*(HermitianMatrix a, double s) { return a *= s; }

  friend bool operator==(const HermitianMatrix& a, const HermitianMatrix& b) {
    if (a.n_ != b.n_) return false;
    for (int k = 0; k < a.param_count(); ++k)
      if (a.p_[k] != b.p_[k]) return false;
    return true;
  }

 private:
  // Offset of the re part of entry (r, c), r > c.
  int offdiag_index(int r, int c) const { return n_ + 2 * (r * (r - 1) / 2 + c); }

  void check_same(const HermitianMatrix& o) const {
    if (o.n_ != n_) throw std::invalid_argument("HermitianMatrix dimension mismatch");
  }

  int n_ = 0;
  std::array<double, kMaxDim * kMaxDim> p_{};
};

/// <x, y> := Re tr(x^H y).
inline double inner(const CMatrix& x, const CMatrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw std::invalid_argument("inner: shape mismatch " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                                " vs " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()));
  double acc = 0.0;
  for (int c = 0; c < x.cols(); ++c)
    for (int r = 0; r < x.rows(); ++r) acc += x(r, c).real() * y(r, c).real() + x(r, c).imag() * y(r, c).imag();
  return acc;
}

inline double inner(const CVector& x, const CVector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("inner: length mismatch");
  double acc = 0.0;
  for (int k = 0; k < x.size(); ++k) acc += x(k).real() * y(k).real() + x(k).imag() * y(k).imag();
  return acc;
}

inline double inner(const HermitianMatrix& x, const HermitianMatrix& y) {
  if (x.dim() != y.dim()) throw std::invalid_argument("inner: dimension mismatch");
  double acc = 0.0;
  for (int k = 0; k < x.param_count(); ++k) acc += x.param_weight(k) * x.param(k) * y.param(k);
  return acc;
}

inline double squared_norm(const HermitianMatrix& x) { return inner(x, x); }
inline double squared_norm(const CMatrix& x) { return x.squaredNorm(); }
inline double squared_norm(const CVector& x) { return x.squaredNorm(); }

struct EigenDecomposition {
  /// Sorted in descending order.
  Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 6, 1> values;
  /// Column k is the unit eigenvector of values(k).
  CMatrix vectors;
};

struct JacobiOptions {
  double off_diagonal_tolerance = 1e-13;
  int max_sweeps = 50;
};

/// Cyclic complex Jacobi eigensolver. Each rotation is the real Jacobi
/// rotation conjugated by the phase of the pivot, so the pivot is annihilated
/// without changing the phase of other columns. Sweeps stop once every
/// off-diagonal magnitude is below tolerance * max(1, ||w||_F).
inline EigenDecomposition eigh(const HermitianMatrix& w, const JacobiOptions& opts = {}) {
  const int n = w.dim();
  CMatrix a = w.dense();
  CMatrix u = CMatrix::Identity(n, n);
  const double scale = std::max(1.0, std::sqrt(squared_norm(w)));
  const double tol = opts.off_diagonal_tolerance * scale;

  auto max_off = [&] {
    double m = 0.0;
    for (int r = 1; r < n; ++r)
      for (int c = 0; c < r; ++c) m = std::max(m, std::abs(a(r, c)));
    return m;
  };

  int sweep = 0;
  while (max_off() > tol) {
    if (++sweep > opts.max_sweeps) throw std::logic_error("eigh: Jacobi iteration did not converge");
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double mag = std::abs(a(p, q));
        if (mag == 0.0) continue;
        const complex phase = a(p, q) / mag;
        const double app = a(p, p).real();
        const double aqq = a(q, q).real();
        const double theta = (aqq - app) / (2.0 * mag);
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        // Rotation G with G_pp = G_qq = cs, G_pq = sn * phase, G_qp = -sn * conj(phase).
        const complex gpq = sn * phase;
        const complex gqp = -sn * std::conj(phase);
        for (int k = 0; k < n; ++k) {
          const complex akp = a(k, p), akq = a(k, q);
          a(k, p) = akp * cs + akq * gqp;
          a(k, q) = akp * gpq + akq * cs;
        }
        for (int k = 0; k < n; ++k) {
          const complex apk = a(p, k), aqk = a(q, k);
          a(p, k) = cs * apk + std::conj(gqp) * aqk;
          a(q, k) = std::conj(gpq) * apk + cs * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
        for (int k = 0; k < n; ++k) {
          const complex ukp = u(k, p), ukq = u(k, q);
          u(k, p) = ukp * cs + ukq * gqp;
          u(k, q) = ukp * gpq + ukq * cs;
        }
      }
    }
  }

  std::array<int, 6> order{};
  std::iota(order.begin(), order.begin() + n, 0);
  std::stable_sort(order.begin(), order.begin() + n,
                   [&](int l, int r) { return a(l, l).real() > a(r, r).real(); });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (int k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]).real();
    out.vectors.col(k) = u.col(order[k]);
  }
  return out;
}

/// Nearest PSD matrix in Frobenius norm: keeps the eigenpairs with
/// strictly positive eigenvalue.
inline HermitianMatrix psd_project(const HermitianMatrix& w) {
  const int n = w.dim();
  if (n == 0) return w;
  const EigenDecomposition ed = eigh(w);
  CMatrix x = CMatrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    if (!(ed.values(k) > 0.0)) break;
    x += ed.values(k) * ed.vectors.col(k) * ed.vectors.col(k).adjoint();
  }
  return HermitianMatrix::from_dense(x);
}

inline double min_eigenvalue(const HermitianMatrix& w) {
  if (w.dim() == 0) return 0.0;
  const auto ed = eigh(w);
  return ed.values(w.dim() - 1);
}

}  // namespace mpopf
