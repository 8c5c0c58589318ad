#pragma once

// Independent evaluation of the boundary kernel by numerical inversion of its
// Z-transform: beta^n = (1 / 2 pi i) \oint sqrt(b(w)^2 - 1) w^{n-1} dw.
//
// The integrand has branch points on |w| = 1 (a pole-like singularity at
// w = -1), so the contour is the circle |w| = radius > 1. With M equispaced
// samples the trapezoid rule is spectrally accurate; the result is scaled by
// radius^n, which limits the usable n to roughly digits / log10(radius).
// Arithmetic is carried out in long double.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "tbc/errors.hpp"
#include "tbc/grid.hpp"

namespace tbc {

struct BetaOracleOptions {
  long double radius = 1.05L;
  int samples = 1 << 16;
};

/// sqrt(b^2 - 1) with the sign that keeps |b - f| < 1 (the decaying root).
inline std::complex<long double> outgoing_root(std::complex<long double> alpha,
                                               std::complex<long double> w) {
  using C = std::complex<long double>;
  const C b = C(1.0L) + alpha / C(2.0L) * (C(1.0L) - w) / (C(1.0L) + w);
  C f = std::sqrt(b * b - C(1.0L));
  if (std::abs(b - f) >= 1.0L) f = -f;
  return f;
}

inline std::vector<cplx> beta_oracle(cplx alpha, int n_max, BetaOracleOptions opt = {}) {
  using C = std::complex<long double>;
  if (!(opt.radius > 1.0L)) throw ArgumentError("beta_oracle: contour radius must exceed 1");
  if (n_max < 0) throw ArgumentError("beta_oracle: n_max must be non-negative");
  const int m = opt.samples;
  if (m < 8 || (m & (m - 1)) != 0) throw ArgumentError("beta_oracle: samples must be a power of two");
  if (static_cast<long long>(m) < 8LL * std::max(n_max, 1))
    throw ArgumentError("beta_oracle: need at least 8 samples per coefficient");

  const C a(alpha.real(), alpha.imag());
  const long double two_pi = 2.0L * std::numbers::pi_v<long double>;
  std::vector<C> twiddle(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const long double th = two_pi * j / m;
    twiddle[j] = C(std::cos(th), std::sin(th));
  }
  std::vector<C> f(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) f[j] = outgoing_root(a, opt.radius * twiddle[j]);

  std::vector<cplx> beta(static_cast<std::size_t>(n_max) + 1);
  for (int n = 0; n <= n_max; ++n) {
    // Real arithmetic avoids the slow checked complex multiply of long double.
    long double sr = 0.0L;
    long double si = 0.0L;
    long long idx = 0;
    for (int j = 0; j < m; ++j) {
      const C& tw = twiddle[static_cast<std::size_t>(idx)];
      sr += f[j].real() * tw.real() - f[j].imag() * tw.imag();
      si += f[j].real() * tw.imag() + f[j].imag() * tw.real();
      idx += n;
      if (idx >= m) idx %= m;
    }
    const C v = C(sr, si) * std::pow(opt.radius, static_cast<long double>(n)) / static_cast<long double>(m);
    beta[n] = cplx(static_cast<double>(v.real()), static_cast<double>(v.imag()));
  }
  return beta;
}

}  // namespace tbc
