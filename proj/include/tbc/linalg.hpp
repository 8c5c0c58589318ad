#pragma once

// Sparse complex linear algebra for the Crank-Nicolson steppers: a CSR
// matrix, a reusable tridiagonal factorization, a banded LU without pivoting
// (the stepping matrices are diagonally dominant), and restarted Krylov
// solvers (BiCGSTAB, GMRES(m)) with optional Jacobi preconditioning.

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "tbc/errors.hpp"
#include "tbc/grid.hpp"

namespace tbc {

struct CsrMatrix {
  int rows = 0;
  std::vector<int> row_ptr{0};
  std::vector<int> col;
  std::vector<cplx> val;

  void multiply(std::span<const cplx> x, std::span<cplx> y) const {
    for (int r = 0; r < rows; ++r) {
      cplx s{};
      for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k] * x[col[k]];
      y[r] = s;
    }
  }

  cplx at(int r, int c) const {
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      if (col[k] == c) return val[k];
    return {};
  }

  int bandwidth() const {
    int bw = 0;
    for (int r = 0; r < rows; ++r)
      for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) bw = std::max(bw, std::abs(col[k] - r));
    return bw;
  }
};

/// Incremental row-by-row CSR construction; duplicate columns within a row are summed.
class CsrBuilder {
 public:
  explicit CsrBuilder(int rows) { m_.rows = rows; m_.row_ptr.reserve(static_cast<std::size_t>(rows) + 1); }

  void add(int c, cplx v) {
    for (std::size_t k = row_start_; k < m_.col.size(); ++k)
      if (m_.col[k] == c) {
        m_.val[k] += v;
        return;
      }
    m_.col.push_back(c);
    m_.val.push_back(v);
  }

  void end_row() {
    // keep columns sorted for predictable traversal
    std::vector<std::pair<int, cplx>> row;
    for (std::size_t k = row_start_; k < m_.col.size(); ++k) row.emplace_back(m_.col[k], m_.val[k]);
    std::sort(row.begin(), row.end(), [](auto& a, auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < row.size(); ++k) {
      m_.col[row_start_ + k] = row[k].first;
      m_.val[row_start_ + k] = row[k].second;
    }
    m_.row_ptr.push_back(static_cast<int>(m_.col.size()));
    row_start_ = m_.col.size();
  }

  CsrMatrix finish() && { return std::move(m_); }

 private:
  CsrMatrix m_;
  std::size_t row_start_ = 0;
};

/// Thomas elimination factored once, reused for every right-hand side.
class TridiagonalLu {
 public:
  TridiagonalLu() = default;

  explicit TridiagonalLu(const CsrMatrix& a) {
    const int n = a.rows;
    lower_.assign(n, cplx{});
    pivot_.assign(n, cplx{});
    upper_.assign(n, cplx{});
    for (int i = 0; i < n; ++i) {
      const cplx l = i > 0 ? a.at(i, i - 1) : cplx{};
      const cplx d = a.at(i, i);
      const cplx u = i + 1 < n ? a.at(i, i + 1) : cplx{};
      lower_[i] = l;
      upper_[i] = u;
      pivot_[i] = i > 0 ? d - l * upper_[i - 1] / pivot_[i - 1] : d;
      if (std::abs(pivot_[i]) == 0.0) throw SolverError("tridiagonal solve: zero pivot", 0, 0.0);
    }
  }

  void solve(std::span<cplx> x) const {
    const int n = static_cast<int>(pivot_.size());
    for (int i = 1; i < n; ++i) x[i] -= lower_[i] * x[i - 1] / pivot_[i - 1];
    x[n - 1] /= pivot_[n - 1];
    for (int i = n - 2; i >= 0; --i) x[i] = (x[i] - upper_[i] * x[i + 1]) / pivot_[i];
  }

  int size() const noexcept { return static_cast<int>(pivot_.size()); }

 private:
  std::vector<cplx> lower_;
  std::vector<cplx> pivot_;
  std::vector<cplx> upper_;
};

/// Dense-band LU of a matrix with equal lower/upper bandwidth, no pivoting.
class BandedLu {
 public:
  BandedLu() = default;

  explicit BandedLu(const CsrMatrix& a) : n_(a.rows), bw_(a.bandwidth()) {
    width_ = 2 * bw_ + 1;
    band_.assign(static_cast<std::size_t>(n_) * width_, cplx{});
    for (int r = 0; r < n_; ++r)
      for (int k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) ref(r, a.col[k]) = a.val[k];
    for (int k = 0; k < n_; ++k) {
      const cplx piv = ref(k, k);
      if (std::abs(piv) == 0.0) throw SolverError("banded LU: zero pivot", 0, 0.0);
      const int last = std::min(n_ - 1, k + bw_);
      for (int i = k + 1; i <= last; ++i) {
        cplx& lik = ref(i, k);
        if (lik == cplx{}) continue;
        lik /= piv;
        for (int j = k + 1; j <= last; ++j) ref(i, j) -= lik * ref(k, j);
      }
    }
  }

  void solve(std::span<cplx> x) const {
    for (int i = 0; i < n_; ++i) {
      cplx s = x[i];
      for (int j = std::max(0, i - bw_); j < i; ++j) s -= cref(i, j) * x[j];
      x[i] = s;
    }
    for (int i = n_ - 1; i >= 0; --i) {
      cplx s = x[i];
      const int last = std::min(n_ - 1, i + bw_);
      for (int j = i + 1; j <= last; ++j) s -= cref(i, j) * x[j];
      x[i] = s / cref(i, i);
    }
  }

  int size() const noexcept { return n_; }

 private:
  cplx& ref(int i, int j) { return band_[static_cast<std::size_t>(i) * width_ + (j - i + bw_)]; }
  const cplx& cref(int i, int j) const {
    return band_[static_cast<std::size_t>(i) * width_ + (j - i + bw_)];
  }

  int n_ = 0;
  int bw_ = 0;
  int width_ = 1;
  std::vector<cplx> band_;
};

// ---------------------------------------------------------------------------
// Krylov solvers

enum class SolverMethod { tridiagonal_direct, banded_direct, bicgstab, gmres };
enum class Preconditioner { none, diagonal };

struct SolverPolicy {
  SolverMethod method = SolverMethod::bicgstab;
  double rel_tolerance = 1e-10;
  int max_iterations = 2000;
  Preconditioner preconditioner = Preconditioner::diagonal;
  int gmres_restart = 30;
  bool gmres_fallback = true;

  void validate() const {
    if (!(rel_tolerance > 0.0) || rel_tolerance > 1e-4)
      throw ConfigError("solver tolerance must lie in (0, 1e-4]");
    if (max_iterations < 1) throw ConfigError("solver needs max_iterations >= 1");
    if (gmres_restart < 1) throw ConfigError("GMRES restart length must be positive");
  }
};

struct SolveStats {
  int iterations = 0;
  double residual = 0.0;  // ||b - A x|| / ||b||
  bool converged = true;
};

namespace detail {

inline cplx dotc(std::span<const cplx> a, std::span<const cplx> b) {
  cplx s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

inline double norm2(std::span<const cplx> a) { return std::sqrt(field_norm_sq(a)); }

inline std::vector<cplx> inverse_diagonal(const CsrMatrix& a, Preconditioner p) {
  std::vector<cplx> d(static_cast<std::size_t>(a.rows), cplx{1.0, 0.0});
  if (p == Preconditioner::diagonal)
    for (int r = 0; r < a.rows; ++r) {
      const cplx v = a.at(r, r);
      if (v != cplx{}) d[r] = 1.0 / v;
    }
  return d;
}

}  // namespace detail

/// Preconditioned BiCGSTAB; `x` holds the initial guess on entry.
inline SolveStats bicgstab(const CsrMatrix& a, std::span<const cplx> b, std::span<cplx> x,
                           const SolverPolicy& policy) {
  const std::size_t n = b.size();
  const double bnorm = detail::norm2(b);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), cplx{});
    return {0, 0.0, true};
  }
  const auto dinv = detail::inverse_diagonal(a, policy.preconditioner);
  std::vector<cplx> r(n), r0(n), p(n), v(n), s(n), t(n), ph(n), sh(n);
  a.multiply(x, r);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
  double res = detail::norm2(r) / bnorm;
  if (res <= policy.rel_tolerance) return {0, res, true};
  r0 = r;
  cplx rho{1.0}, alpha{1.0}, omega{1.0};
  std::fill(p.begin(), p.end(), cplx{});
  std::fill(v.begin(), v.end(), cplx{});
  for (int it = 1; it <= policy.max_iterations; ++it) {
    const cplx rho_new = detail::dotc(r0, r);
    if (std::abs(rho_new) == 0.0) return {it, res, false};
    const cplx beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    for (std::size_t i = 0; i < n; ++i) ph[i] = dinv[i] * p[i];
    a.multiply(ph, v);
    const cplx r0v = detail::dotc(r0, v);
    if (std::abs(r0v) == 0.0) return {it, res, false};
    alpha = rho / r0v;
    for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
    const double snorm = detail::norm2(s) / bnorm;
    if (snorm <= policy.rel_tolerance) {
      for (std::size_t i = 0; i < n; ++i) x[i] += alpha * ph[i];
      return {it, snorm, true};
    }
    for (std::size_t i = 0; i < n; ++i) sh[i] = dinv[i] * s[i];
    a.multiply(sh, t);
    const double tt = field_norm_sq(t);
    if (tt == 0.0) return {it, res, false};
    omega = detail::dotc(t, s) / tt;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * ph[i] + omega * sh[i];
      r[i] = s[i] - omega * t[i];
    }
    res = detail::norm2(r) / bnorm;
    if (res <= policy.rel_tolerance) {
      // confirm against the true residual to guard against drift in the recurrence
      a.multiply(x, t);
      for (std::size_t i = 0; i < n; ++i) t[i] = b[i] - t[i];
      res = detail::norm2(t) / bnorm;
      if (res <= policy.rel_tolerance) return {it, res, true};
      r = t;
    }
    if (omega == cplx{}) return {it, res, false};
  }
  return {policy.max_iterations, res, false};
}

/// Right-preconditioned restarted GMRES(m) with Givens rotations.
inline SolveStats gmres(const CsrMatrix& a, std::span<const cplx> b, std::span<cplx> x,
                        const SolverPolicy& policy) {
  const std::size_t n = b.size();
  const double bnorm = detail::norm2(b);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), cplx{});
    return {0, 0.0, true};
  }
  const int m = policy.gmres_restart;
  const auto dinv = detail::inverse_diagonal(a, policy.preconditioner);
  std::vector<std::vector<cplx>> basis(static_cast<std::size_t>(m) + 1, std::vector<cplx>(n));
  std::vector<cplx> hess(static_cast<std::size_t>((m + 1) * m));
  std::vector<cplx> cs(m), sn(m), g(static_cast<std::size_t>(m) + 1), w(n), z(n);
  auto H = [&](int i, int j) -> cplx& { return hess[static_cast<std::size_t>(i * m + j)]; };

  int total = 0;
  double res = 0.0;
  while (total < policy.max_iterations) {
    a.multiply(x, w);
    for (std::size_t i = 0; i < n; ++i) w[i] = b[i] - w[i];
    const double beta = detail::norm2(w);
    res = beta / bnorm;
    if (res <= policy.rel_tolerance) return {total, res, true};
    for (std::size_t i = 0; i < n; ++i) basis[0][i] = w[i] / beta;
    std::fill(g.begin(), g.end(), cplx{});
    g[0] = beta;
    int k = 0;
    for (; k < m && total < policy.max_iterations; ++k, ++total) {
      for (std::size_t i = 0; i < n; ++i) z[i] = dinv[i] * basis[k][i];
      a.multiply(z, w);
      for (int j = 0; j <= k; ++j) {
        H(j, k) = detail::dotc(basis[j], w);
        for (std::size_t i = 0; i < n; ++i) w[i] -= H(j, k) * basis[j][i];
      }
      const double hn = detail::norm2(w);
      H(k + 1, k) = hn;
      if (hn > 0.0)
        for (std::size_t i = 0; i < n; ++i) basis[k + 1][i] = w[i] / hn;
      for (int j = 0; j < k; ++j) {
        const cplx t = std::conj(cs[j]) * H(j, k) + std::conj(sn[j]) * H(j + 1, k);
        H(j + 1, k) = -sn[j] * H(j, k) + cs[j] * H(j + 1, k);
        H(j, k) = t;
      }
      const double den = std::hypot(std::abs(H(k, k)), std::abs(H(k + 1, k)));
      cs[k] = H(k, k) / den;
      sn[k] = H(k + 1, k) / den;
      H(k, k) = den;
      H(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = std::conj(cs[k]) * g[k];
      res = std::abs(g[k + 1]) / bnorm;
      if (res <= policy.rel_tolerance || hn == 0.0) {
        ++k;
        ++total;
        break;
      }
    }
    std::vector<cplx> y(static_cast<std::size_t>(k));
    for (int i = k - 1; i >= 0; --i) {
      cplx s = g[i];
      for (int j = i + 1; j < k; ++j) s -= H(i, j) * y[j];
      y[i] = s / H(i, i);
    }
    std::fill(z.begin(), z.end(), cplx{});
    for (int j = 0; j < k; ++j)
      for (std::size_t i = 0; i < n; ++i) z[i] += y[j] * basis[j][i];
    for (std::size_t i = 0; i < n; ++i) x[i] += dinv[i] * z[i];
    if (res <= policy.rel_tolerance) {
      a.multiply(x, w);
      for (std::size_t i = 0; i < n; ++i) w[i] = b[i] - w[i];
      res = detail::norm2(w) / bnorm;
      if (res <= policy.rel_tolerance) return {total, res, true};
    }
  }
  return {total, res, false};
}

/// Runs the policy's Krylov method, falling back to GMRES when BiCGSTAB stalls.
inline SolveStats krylov_solve(const CsrMatrix& a, std::span<const cplx> b, std::span<cplx> x,
                               const SolverPolicy& policy) {
  if (policy.method == SolverMethod::gmres) return gmres(a, b, x, policy);
  std::vector<cplx> guess(x.begin(), x.end());
  SolveStats st = bicgstab(a, b, x, policy);
  if (st.converged || !policy.gmres_fallback) return st;
  std::copy(guess.begin(), guess.end(), x.begin());
  SolveStats g = gmres(a, b, x, policy);
  g.iterations += st.iterations;
  return g;
}

}  // namespace tbc
