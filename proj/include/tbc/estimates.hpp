#pragma once

// Storage and per-step cost estimates for the boundary memory.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "tbc/errors.hpp"

namespace tbc {

namespace detail {

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
    throw ArgumentError("storage estimate overflows 64-bit arithmetic");
  return a * b;
}

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  if (b > std::numeric_limits<std::uint64_t>::max() - a)
    throw ArgumentError("storage estimate overflows 64-bit arithmetic");
  return a + b;
}

inline std::uint64_t checked_pow(std::uint64_t b, int e) {
  std::uint64_t r = 1;
  for (int i = 0; i < e; ++i) r = checked_mul(r, b);
  return r;
}

inline std::uint64_t binomial(int n, int k) {
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

inline void check_nv_args(int dims, std::uint64_t nx, std::uint64_t ntau) {
  if (dims < 1 || dims > 8) throw ArgumentError("dimension must be in 1..8");
  if (nx == 0 || ntau == 0) throw ArgumentError("N_x and N_tau must be positive");
}

}  // namespace detail

/// Number of s-dimensional boundary pieces of an N-cube: 2^{N-s} N! / (s! (N-s)!).
inline std::uint64_t level_multiplicity(int dims, int s) {
  if (s < 0 || s > dims) throw ArgumentError("level out of range");
  return detail::checked_mul(std::uint64_t{1} << (dims - s), detail::binomial(dims, s));
}

/// (N_x + 2 N_tau)^N - N_x^N complex values.
inline std::uint64_t nv_estimate(int dims, std::uint64_t nx, std::uint64_t ntau) {
  detail::check_nv_args(dims, nx, ntau);
  const std::uint64_t big = detail::checked_pow(detail::checked_add(nx, detail::checked_mul(2, ntau)), dims);
  return big - detail::checked_pow(nx, dims);
}

struct NvBreakdown {
  int dims = 0;
  std::uint64_t nx = 0;
  std::uint64_t ntau = 0;
  std::uint64_t total = 0;
  std::vector<std::uint64_t> multiplicity;  // D_s, s = 0..N-1
  std::vector<std::uint64_t> per_level;     // D_s N_x^s N_tau^{N-s}
};

/// Per-level counts; their sum equals nv_estimate exactly.
inline NvBreakdown nv_breakdown(int dims, std::uint64_t nx, std::uint64_t ntau) {
  NvBreakdown b;
  b.dims = dims;
  b.nx = nx;
  b.ntau = ntau;
  b.total = nv_estimate(dims, nx, ntau);
  std::uint64_t sum = 0;
  for (int s = 0; s < dims; ++s) {
    const std::uint64_t d = level_multiplicity(dims, s);
    const std::uint64_t v = detail::checked_mul(
        d, detail::checked_mul(detail::checked_pow(nx, s), detail::checked_pow(ntau, dims - s)));
    b.multiplicity.push_back(d);
    b.per_level.push_back(v);
    sum = detail::checked_add(sum, v);
  }
  if (sum != b.total) throw StateError("storage breakdown does not sum to the closed form");
  return b;
}

/// Sum of D_s N_x^s (2 N_tau)^{N-s}, the per-level form with a doubled history length.
inline std::uint64_t nv_doubled_history_sum(int dims, std::uint64_t nx, std::uint64_t ntau) {
  detail::check_nv_args(dims, nx, ntau);
  std::uint64_t sum = 0;
  for (int s = 0; s < dims; ++s)
    sum = detail::checked_add(
        sum, detail::checked_mul(level_multiplicity(dims, s),
                                 detail::checked_mul(detail::checked_pow(nx, s),
                                                     detail::checked_pow(detail::checked_mul(2, ntau), dims - s))));
  return sum;
}

// ---------------------------------------------------------------------------
// Per-step cost

/**
 * FC_N = sum_k c_k N_x^{N-k} n^k, k = 0..N. N = 3 gives P, Q, R, T; N = 4
 * gives P', Q', R', S', T'.
 */
struct CostModel {
  int dims = 3;
  std::vector<double> coefficients;

  void validate() const {
    if (dims < 1 || dims > 4) throw ArgumentError("cost model dimension must be in 1..4");
    if (coefficients.size() != static_cast<std::size_t>(dims) + 1)
      throw ArgumentError("cost model needs N + 1 coefficients");
  }
};

struct CostEstimate {
  double total = 0.0;
  std::vector<double> terms;  // c_k N_x^{N-k} n^k
};

inline CostEstimate step_cost_estimate(const CostModel& model, double nx, double n) {
  model.validate();
  if (!(nx > 0.0) || n < 0.0) throw ArgumentError("N_x must be positive and n non-negative");
  CostEstimate e;
  for (int k = 0; k <= model.dims; ++k) {
    const double t = model.coefficients[k] * std::pow(nx, model.dims - k) * std::pow(n, k);
    e.terms.push_back(t);
    e.total += t;
  }
  return e;
}

/**
 * Coefficients of the work counted by HierarchyCounters for this
 * implementation: a level with k fixed axes has 2^k C(N,k) n^k problems,
 * each updating N_x^{N-k} nodes and evaluating two closures of
 * 2(N-k) N_x^{N-k-1} n history terms. Vertex values (k = N) cost nothing to
 * advance. Lower-order shifts (n versus n + 1) are dropped.
 */
inline CostModel implementation_cost_model(int dims) {
  if (dims < 1 || dims > 4) throw ArgumentError("cost model dimension must be in 1..4");
  CostModel m{dims, std::vector<double>(static_cast<std::size_t>(dims) + 1, 0.0)};
  for (int k = 0; k < dims; ++k) {
    const double count = static_cast<double>((1ULL << k) * detail::binomial(dims, k));
    m.coefficients[k] += count;
    m.coefficients[k + 1] += count * 4.0 * (dims - k);
  }
  return m;
}

struct CostSample {
  double nx = 0.0;
  double n = 0.0;
  double cost = 0.0;
};

/// Least-squares fit of the N + 1 coefficients to measured per-step costs.
inline CostModel fit_cost_model(int dims, const std::vector<CostSample>& samples) {
  if (dims < 1 || dims > 4) throw ArgumentError("cost model dimension must be in 1..4");
  const auto cols = static_cast<Eigen::Index>(dims + 1);
  if (static_cast<Eigen::Index>(samples.size()) < cols) throw ArgumentError("too few cost samples for the fit");
  Eigen::MatrixXd a(static_cast<Eigen::Index>(samples.size()), cols);
  Eigen::VectorXd b(static_cast<Eigen::Index>(samples.size()));
  Eigen::VectorXd scale(cols);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const auto& s = samples[static_cast<std::size_t>(r)];
    for (int k = 0; k <= dims; ++k) a(r, k) = std::pow(s.nx, dims - k) * std::pow(s.n, k);
    b(r) = s.cost;
  }
  for (Eigen::Index k = 0; k < cols; ++k) {
    scale(k) = a.col(k).norm();
    if (scale(k) == 0.0) throw ArgumentError("cost samples do not determine every coefficient");
    a.col(k) /= scale(k);
  }
  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  CostModel m{dims, {}};
  for (Eigen::Index k = 0; k < cols; ++k) m.coefficients.push_back(x(k) / scale(k));
  return m;
}

}  // namespace tbc
