#pragma once

// Fully discrete 1D transparent boundary condition for the Crank-Nicolson
// three-point scheme, plus the discretized Baskakov-Popov baseline.
//
// Outside [-a, a] the scheme
//   -psi^{n+1}_{p+1} + B psi^{n+1}_p - psi^{n+1}_{p-1} = psi^n_{p+1} - B~ psi^n_p + psi^n_{p-1}
// is solved exactly through its Z-transform; the outgoing root of the
// characteristic equation gives a convolution in time with kernel beta^n,
// the coefficients of sqrt(b(w)^2 - 1) in powers of 1/w.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "tbc/errors.hpp"
#include "tbc/grid.hpp"

namespace tbc {

enum class Side { lower, upper };

/// Convolution coefficients of the discrete boundary kernel.
struct TbcCoefficients {
  cplx alpha;
  cplx ratio;               // (1 + alpha/4) / (1 - alpha/4)
  std::vector<cplx> beta;   // beta^0 .. beta^{n_max}
  std::vector<cplx> phi;    // phi^1 .. phi^{n_max} stored at [k]; phi[0] = 0

  int n_max() const noexcept { return static_cast<int>(beta.size()) - 1; }
  /// Value of b(w) at w -> infinity, 1 - alpha/2.
  cplx b_infinity() const noexcept { return 1.0 - alpha / 2.0; }
};

/// Generator coefficient phi^k of the recurrence n beta^n = sum phi^{n-k} beta^k.
inline cplx phi_coefficient(cplx ratio, int k) {
  const double sign = (k % 2 == 1) ? 1.0 : -1.0;  // (-1)^{k-1}
  const cplx rk = std::polar(std::pow(std::abs(ratio), k), k * std::arg(ratio));
  return -0.5 - sign + 0.5 * sign * rk;
}

/**
 * Root of alpha^2/4 - alpha that selects the outgoing (decaying) mode:
 * |b_inf - beta^0| < 1 with b_inf = 1 - alpha/2.
 */
inline cplx outgoing_beta0(cplx alpha) {
  cplx root = std::sqrt(alpha * alpha / 4.0 - alpha);
  const cplx b_inf = 1.0 - alpha / 2.0;
  if (std::abs(b_inf - root) >= 1.0) root = -root;
  return root;
}

inline TbcCoefficients compute_beta(cplx alpha, int n_max) {
  if (n_max < 0) throw ArgumentError("compute_beta: n_max must be non-negative");
  if (alpha == cplx{0.0, 0.0}) throw SingularParameterError("compute_beta: alpha must be non-zero");
  if (alpha == cplx{4.0, 0.0})
    throw SingularParameterError("compute_beta: alpha = 4 is a pole of the generator ratio");

  TbcCoefficients c;
  c.alpha = alpha;
  c.ratio = (1.0 + alpha / 4.0) / (1.0 - alpha / 4.0);
  const auto count = static_cast<std::size_t>(n_max) + 1;
  c.beta.assign(count, cplx{});
  c.phi.assign(count, cplx{});
  for (int k = 1; k <= n_max; ++k) c.phi[k] = phi_coefficient(c.ratio, k);

  c.beta[0] = outgoing_beta0(alpha);
  for (int n = 1; n <= n_max; ++n) {
    cplx s{};
    for (int k = 0; k < n; ++k) s += c.phi[n - k] * c.beta[k];
    c.beta[n] = s / static_cast<double>(n);
  }
  return c;
}

/// Exterior plane-wave data A * exp(i q x) and its discrete time factors g^n.
struct PlaneWaveExterior {
  double amplitude = 0.0;
  double q = 0.0;
  double h = 1.0;
  std::vector<cplx> g;  // g^0 .. g^{n_max}

  bool active() const noexcept { return amplitude != 0.0; }
};

/// Growth factor of the discrete plane wave exp(iqhp) g^n under the scheme.
inline cplx plane_wave_ratio(cplx alpha, double q, double h) {
  const double c = std::cos(q * h);
  const cplx num = alpha + 2.0 - 2.0 * c;
  const cplx den = alpha - 2.0 + 2.0 * c;
  if (std::abs(den) <= 1e-14 * (std::abs(alpha) + 4.0))
    throw SingularParameterError("plane-wave factor denominator vanishes");
  return num / den;
}

inline PlaneWaveExterior compute_g(cplx alpha, double q, double h, int n_max,
                                   double amplitude = 1.0) {
  if (n_max < 0) throw ArgumentError("compute_g: n_max must be non-negative");
  const cplx ratio = plane_wave_ratio(alpha, q, h);
  PlaneWaveExterior ext;
  ext.amplitude = amplitude;
  ext.q = q;
  ext.h = h;
  ext.g.resize(static_cast<std::size_t>(n_max) + 1);
  ext.g[0] = 1.0;
  for (int n = 1; n <= n_max; ++n) ext.g[n] = ext.g[n - 1] * ratio;
  return ext;
}

/// Append-only list of boundary trace values psi^0, psi^1, ... at one node.
class BoundaryHistory {
 public:
  void append(cplx v) { values_.push_back(v); }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const cplx> values() const noexcept { return values_; }
  cplx operator[](std::size_t i) const noexcept { return values_[i]; }
  void reserve(std::size_t n) { values_.reserve(n); }

 private:
  std::vector<cplx> values_;
};

/**
 * One boundary equation c_ghost psi_ghost + c_boundary psi_bnd + c_inner psi_in = rhs
 * at the new time level.
 */
struct ClosureRow {
  cplx c_ghost;
  cplx c_boundary;
  cplx c_inner;
  cplx rhs;
};

inline cplx ghost_from_row(const ClosureRow& r, cplx boundary, cplx inner) {
  return (r.rhs - r.c_boundary * boundary - r.c_inner * inner) / r.c_ghost;
}

inline cplx row_residual(const ClosureRow& r, cplx ghost, cplx boundary, cplx inner) {
  return r.c_ghost * ghost + r.c_boundary * boundary + r.c_inner * inner - r.rhs;
}

inline ClosureRow hard_wall_row() { return {1.0, 0.0, 0.0, 0.0}; }

/// Which node index carries the exterior phase exp(i q h p) in the source terms.
enum class PhaseAnchor {
  boundary_node,  // p = 0 on the lower side, p = N on the upper side
  upper_index,    // p = N on both sides, as printed for the lower condition
};

/**
 * Closure row at time level `step` (= n + 1) for the boundary node of `side`.
 *
 * `history` must hold the boundary values psi^0 .. psi^{step-1}. The
 * unknown psi^{step} term of the convolution sits in c_boundary = +-2 beta^0.
 * step = 0 gives the row satisfied by the initial data (empty convolution).
 */
inline ClosureRow assemble_closure_row(Side side, int step, const TbcCoefficients& coeffs,
                                       std::span<const cplx> history,
                                       const PlaneWaveExterior& exterior, int cells, double h,
                                       PhaseAnchor anchor = PhaseAnchor::boundary_node) {
  if (step < 0) throw ArgumentError("closure row: negative step");
  if (history.size() != static_cast<std::size_t>(step))
    throw StateError("closure row: boundary history does not match the step (skipped step?)");
  if (step > coeffs.n_max()) throw StateError("closure row: kernel coefficients too short");

  const auto& beta = coeffs.beta;
  cplx conv{};
  for (int l = 0; l < step; ++l) conv += beta[step - l] * history[l];

  cplx source_sin{};
  cplx source_conv{};
  if (exterior.active()) {
    if (static_cast<int>(exterior.g.size()) <= step)
      throw StateError("closure row: plane-wave factors too short");
    const int p = (side == Side::upper || anchor == PhaseAnchor::upper_index) ? cells : 0;
    const cplx phase = exterior.amplitude * std::polar(1.0, exterior.q * h * p);
    source_sin = 2.0 * kI * phase * std::sin(exterior.q * h) * exterior.g[step];
    cplx s{};
    for (int l = 0; l <= step; ++l) s += beta[step - l] * exterior.g[l];
    source_conv = 2.0 * phase * s;
  }

  if (side == Side::upper) return {1.0, 2.0 * beta[0], -1.0, -2.0 * conv + source_sin + source_conv};
  return {-1.0, -2.0 * beta[0], 1.0, 2.0 * conv + source_sin - source_conv};
}

// ---------------------------------------------------------------------------
// Discretized Baskakov-Popov condition
//
//   d psi / dx = -+ (1/sqrt(pi i)) d/dt int_0^t psi(zeta, +-a) / sqrt(t - zeta) d zeta
//
// The Abel integral uses the interval average of psi against the exact
// integral of (t - zeta)^{-1/2}; the time derivative is a backward difference
// and the normal derivative the centred ghost difference.

inline cplx sqrt_pi_i() { return std::sqrt(std::numbers::pi) * std::polar(1.0, std::numbers::pi / 4.0); }

/// I^n = 2 sqrt(tau) sum_{l<n} (psi^l + psi^{l+1})/2 (sqrt(n-l) - sqrt(n-l-1)).
inline cplx abel_integral(std::span<const cplx> history, int n, double tau) {
  if (n < 0 || history.size() < static_cast<std::size_t>(n) + 1)
    throw StateError("abel_integral: history shorter than n + 1");
  cplx s{};
  for (int l = 0; l < n; ++l)
    s += 0.5 * (history[l] + history[l + 1]) * (std::sqrt(double(n - l)) - std::sqrt(double(n - l - 1)));
  return 2.0 * std::sqrt(tau) * s;
}

inline ClosureRow bp_discretized_row(Side side, int step, std::span<const cplx> history,
                                     double tau, double h) {
  if (step < 0) throw ArgumentError("bp row: negative step");
  if (history.size() != static_cast<std::size_t>(step))
    throw StateError("bp row: boundary history does not match the step (skipped step?)");
  const cplx self = 2.0 * h / (sqrt_pi_i() * std::sqrt(tau));
  cplx known{};
  if (step > 0) {
    // I^{step} with the unknown psi^{step} set to zero, minus I^{step-1}.
    const int n = step;
    cplx s{};
    for (int l = 0; l < n; ++l) {
      const cplx next = (l + 1 < n) ? history[l + 1] : cplx{};
      s += 0.5 * (history[l] + next) * (std::sqrt(double(n - l)) - std::sqrt(double(n - l - 1)));
    }
    known = 2.0 * std::sqrt(tau) * s - abel_integral(history, n - 1, tau);
  }
  const cplx k = 2.0 * h / (sqrt_pi_i() * tau);
  if (side == Side::upper) return {1.0, self, -1.0, -k * known};
  return {-1.0, -self, 1.0, k * known};
}

/**
 * The discretized Baskakov-Popov condition written in the same form as the
 * fully discrete one, psi_g + 2 k^0 psi_b - psi_in = -2 sum k^{n+1-l} psi^l,
 * which holds exactly whenever psi^0 = 0 at the boundary.
 */
inline std::vector<cplx> bp_kernel(double tau, double h, int n_max) {
  if (n_max < 0) throw ArgumentError("bp_kernel: n_max must be non-negative");
  auto c = [](int k) { return std::sqrt(double(k)) - std::sqrt(double(k - 1)); };
  auto w = [&](int k) { return k == 0 ? 1.0 : c(k) + c(k + 1); };
  const cplx scale = h / (sqrt_pi_i() * std::sqrt(tau));
  std::vector<cplx> kernel(static_cast<std::size_t>(n_max) + 1);
  kernel[0] = scale;
  for (int k = 1; k <= n_max; ++k) kernel[k] = scale * (w(k) - w(k - 1));
  return kernel;
}

/**
 * Weights of psi^0 in the same form. The Abel quadrature gives the first
 * sample the weight c_n rather than c_n + c_{n+1}, so when psi^0 != 0 its
 * kernel is scale * (c_n - c_{n-1}) with c_0 = 0. Entry 0 equals bp_kernel's.
 */
inline std::vector<cplx> bp_initial_kernel(double tau, double h, int n_max) {
  if (n_max < 0) throw ArgumentError("bp_initial_kernel: n_max must be non-negative");
  auto c = [](int k) { return k == 0 ? 0.0 : std::sqrt(double(k)) - std::sqrt(double(k - 1)); };
  const cplx scale = h / (sqrt_pi_i() * std::sqrt(tau));
  std::vector<cplx> kernel(static_cast<std::size_t>(n_max) + 1);
  kernel[0] = scale;
  for (int k = 1; k <= n_max; ++k) kernel[k] = scale * (c(k) - c(k - 1));
  return kernel;
}

}  // namespace tbc
