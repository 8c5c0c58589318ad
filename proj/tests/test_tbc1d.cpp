#include "catch_amalgamated.hpp"

#include <numbers>

#include "tbc/beta_oracle.hpp"
#include "tbc/tbc1d.hpp"

using namespace tbc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double rel_diff(cplx a, cplx b) { return std::abs(a - b) / std::max(std::abs(b), 1e-30); }

}  // namespace

TEST_CASE("beta0 takes the outgoing root", "[tbc1d]") {
  const auto c = compute_beta(cplx(0.0, 1.0), 4);
  CHECK_THAT(c.beta[0].real(), WithinAbs(0.62481, 1e-5));
  CHECK_THAT(c.beta[0].imag(), WithinAbs(-0.80024, 1e-5));
  CHECK(std::abs(c.beta[0] * c.beta[0] - cplx(-0.25, -1.0)) < 1e-14);

  CHECK_THAT(c.phi[1].real(), WithinAbs(-1.05882, 1e-5));
  CHECK_THAT(c.phi[1].imag(), WithinAbs(0.23529, 1e-5));
  CHECK(c.beta[1] == c.phi[1] * c.beta[0]);
}

TEST_CASE("branch selection separates the characteristic roots", "[tbc1d]") {
  for (double h : {0.5, 1.0, 2.0})
    for (double tau : {1.0, 5.0, 25.0}) {
      const cplx alpha = make_alpha(h, tau);
      const auto c = compute_beta(alpha, 0);
      const cplx l1 = c.b_infinity() - c.beta[0];
      const cplx l2 = c.b_infinity() + c.beta[0];
      CHECK(std::abs(l1) < 1.0);
      CHECK(std::abs(l2) > 1.0);
      CHECK_THAT(std::abs(l1 * l2), WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("recurrence holds for every index", "[tbc1d]") {
  const auto c = compute_beta(make_alpha(1.0, 5.0), 200);
  for (int n = 1; n <= 200; ++n) {
    cplx s{};
    for (int k = 0; k < n; ++k) s += c.phi[n - k] * c.beta[k];
    CHECK(std::abs(double(n) * c.beta[n] - s) <= 1e-12 * std::max(1.0, std::abs(s)));
  }
}

TEST_CASE("generator coefficients at unit ratio", "[tbc1d]") {
  for (int k = 1; k <= 9; ++k) CHECK(phi_coefficient(1.0, k) == (k % 2 == 1 ? cplx(-1.0) : cplx(0.0)));
}

TEST_CASE("compute_beta argument errors", "[tbc1d]") {
  CHECK_THROWS_AS(compute_beta(4.0, 3), SingularParameterError);
  CHECK_THROWS_AS(compute_beta(0.0, 3), SingularParameterError);
  CHECK_THROWS_AS(compute_beta(cplx(0.0, 1.0), -1), ArgumentError);
}

TEST_CASE("contour oracle agrees with the recurrence", "[tbc1d][oracle]") {
  const cplx alpha(0.0, 1.0);
  const auto orc = beta_oracle(alpha, 120, {1.05L, 1 << 12});
  const auto rec = compute_beta(alpha, 120);
  CHECK(rel_diff(orc[0], rec.beta[0]) < 1e-10);
  CHECK(rel_diff(orc[1], rec.phi[1] * rec.beta[0]) < 1e-8);
  double worst = 0.0;
  for (int n = 0; n <= 120; ++n) worst = std::max(worst, rel_diff(rec.beta[n], orc[n]));
  CHECK(worst < 1e-8);
}

TEST_CASE("oracle argument checks", "[tbc1d][oracle]") {
  CHECK_THROWS_AS(beta_oracle(cplx(0, 1), 10, {1.0L, 1 << 10}), ArgumentError);
  CHECK_THROWS_AS(beta_oracle(cplx(0, 1), 10, {1.05L, 1000}), ArgumentError);
  CHECK_THROWS_AS(beta_oracle(cplx(0, 1), 200, {1.05L, 1 << 10}), ArgumentError);
}

TEST_CASE("plane-wave factors", "[tbc1d]") {
  const cplx alpha(0.0, 1.0);
  const auto g0 = compute_g(alpha, 0.0, 1.0, 10);
  for (const cplx& v : g0.g) CHECK(v == cplx(1.0));

  const double q = std::numbers::pi / 2.0;
  const auto g = compute_g(alpha, q, 1.0, 50);
  CHECK(g.g[0] == cplx(1.0));
  CHECK_THAT(g.g[1].real(), WithinAbs(-0.6, 1e-12));
  CHECK_THAT(g.g[1].imag(), WithinAbs(-0.8, 1e-12));
  for (double qq : {0.1, 0.3, 1.7, 2.9}) {
    const auto gg = compute_g(make_alpha(0.7, 3.0), qq, 0.7, 200);
    for (const cplx& v : gg.g) CHECK_THAT(std::abs(v), WithinAbs(1.0, 1e-12));
  }
  // alpha - 2 + 2 cos(qh) vanishes for real alpha = 4 at qh = pi
  CHECK_THROWS_AS(compute_g(4.0, std::numbers::pi, 1.0, 3), SingularParameterError);
}

TEST_CASE("closure rows with empty or trivial history", "[tbc1d][closure]") {
  const auto c = compute_beta(cplx(0.0, 1.0), 4);
  const PlaneWaveExterior none;
  const auto up = assemble_closure_row(Side::upper, 0, c, {}, none, 10, 1.0);
  CHECK(up.c_ghost == cplx(1.0));
  CHECK(up.c_boundary == 2.0 * c.beta[0]);
  CHECK(up.c_inner == cplx(-1.0));
  CHECK(up.rhs == cplx(0.0));
  const std::vector<cplx> zeros(1, 0.0);
  CHECK(assemble_closure_row(Side::upper, 1, c, zeros, none, 10, 1.0).rhs == cplx(0.0));

  const auto lo = assemble_closure_row(Side::lower, 0, c, {}, none, 10, 1.0);
  CHECK(lo.c_ghost == cplx(-1.0));
  CHECK(lo.c_boundary == -2.0 * c.beta[0]);
  CHECK(lo.c_inner == cplx(1.0));

  PlaneWaveExterior ext = compute_g(c.alpha, 0.0, 1.0, 4, 1.0);
  const std::vector<cplx> one(1, 1.0);
  const auto row = assemble_closure_row(Side::upper, 1, c, one, ext, 10, 1.0);
  CHECK(std::abs(row.rhs - 2.0 * c.beta[0]) < 1e-14);

  CHECK_THROWS_AS(assemble_closure_row(Side::upper, 2, c, one, none, 10, 1.0), StateError);
  CHECK_THROWS_AS(assemble_closure_row(Side::upper, 6, c, std::vector<cplx>(6), none, 10, 1.0), StateError);
}

TEST_CASE("discrete plane waves satisfy both closure rows", "[tbc1d][closure]") {
  const int cells = 40;
  const int steps = 200;
  for (double q : {0.3, 1.1, -0.7}) {
    const double h = 0.8;
    const double tau = 1.5;
    const cplx alpha = make_alpha(h, tau);
    const auto c = compute_beta(alpha, steps);
    const auto ext = compute_g(alpha, q, h, steps, 1.0);
    auto psi = [&](int p, int n) { return std::polar(1.0, q * h * p) * ext.g[n]; };
    std::vector<cplx> lower;
    std::vector<cplx> upper;
    double worst = 0.0;
    for (int n = 0; n <= steps; ++n) {
      const auto rl = assemble_closure_row(Side::lower, n, c, lower, ext, cells, h);
      const auto ru = assemble_closure_row(Side::upper, n, c, upper, ext, cells, h);
      worst = std::max(worst, std::abs(row_residual(rl, psi(-1, n), psi(0, n), psi(1, n))) / std::abs(rl.rhs));
      worst = std::max(worst, std::abs(row_residual(ru, psi(cells + 1, n), psi(cells, n), psi(cells - 1, n))) /
                                  std::abs(ru.rhs));
      lower.push_back(psi(0, n));
      upper.push_back(psi(cells, n));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("lower-side phase anchored at the far node is not exact", "[tbc1d][closure]") {
  const int cells = 40;
  const double h = 1.0;
  const double q = 0.3;
  const cplx alpha = make_alpha(h, 2.0);
  const auto c = compute_beta(alpha, 5);
  const auto ext = compute_g(alpha, q, h, 5, 1.0);
  auto psi = [&](int p, int n) { return std::polar(1.0, q * h * p) * ext.g[n]; };
  std::vector<cplx> lower{psi(0, 0), psi(0, 1)};
  const auto row = assemble_closure_row(Side::lower, 2, c, lower, ext, cells, h, PhaseAnchor::upper_index);
  CHECK(std::abs(row_residual(row, psi(-1, 2), psi(0, 2), psi(1, 2))) > 1e-3);
}

TEST_CASE("ghost recovery inverts the row", "[tbc1d][closure]") {
  const ClosureRow r{-1.0, cplx(0.2, 0.3), 1.0, cplx(0.5, -1.0)};
  const cplx g = ghost_from_row(r, cplx(1.0, 2.0), cplx(-0.5, 0.1));
  CHECK(std::abs(row_residual(r, g, cplx(1.0, 2.0), cplx(-0.5, 0.1))) < 1e-15);
  const auto hw = hard_wall_row();
  CHECK(ghost_from_row(hw, 3.0, 4.0) == cplx(0.0));
}

TEST_CASE("Abel quadrature", "[tbc1d][bp]") {
  const double tau = 0.7;
  const std::vector<cplx> ones(21, 1.0);
  for (int n : {0, 1, 5, 20}) CHECK_THAT(abel_integral(ones, n, tau).real(), WithinRel(2.0 * std::sqrt(tau * n), 1e-13));
  CHECK_THROWS_AS(abel_integral(ones, 21, tau), StateError);
}

TEST_CASE("discretized BP rows", "[tbc1d][bp]") {
  const double tau = 2.0;
  const double h = 1.0;
  const auto up = bp_discretized_row(Side::upper, 0, {}, tau, h);
  CHECK(up.rhs == cplx(0.0));
  CHECK(up.c_ghost == cplx(1.0));
  CHECK(up.c_inner == cplx(-1.0));
  CHECK(std::abs(up.c_boundary - 2.0 * h / (sqrt_pi_i() * std::sqrt(tau))) < 1e-15);
  CHECK(bp_discretized_row(Side::upper, 3, std::vector<cplx>(3, 0.0), tau, h).rhs == cplx(0.0));
  CHECK_THROWS_AS(bp_discretized_row(Side::upper, 3, std::vector<cplx>(2), tau, h), StateError);
}

TEST_CASE("BP convolution kernels reproduce the BP row", "[tbc1d][bp]") {
  const double tau = 1.3;
  const double h = 0.9;
  const int steps = 30;
  const auto k = bp_kernel(tau, h, steps);
  const auto k0 = bp_initial_kernel(tau, h, steps);
  CHECK(k[0] == k0[0]);
  std::vector<cplx> hist;
  for (int n = 0; n < steps; ++n) hist.push_back(std::polar(1.0 + 0.1 * n, 0.37 * n));
  for (int n = 1; n < steps; ++n) {
    const std::span<const cplx> past(hist.data(), n);
    const auto row = bp_discretized_row(Side::upper, n, past, tau, h);
    cplx conv = k0[n] * hist[0];
    for (int m = 1; m < n; ++m) conv += k[n - m] * hist[m];
    CHECK(std::abs(row.rhs - (-2.0 * conv)) < 1e-12 * std::max(1.0, std::abs(row.rhs)));
    CHECK(std::abs(row.c_boundary - 2.0 * k[0]) < 1e-14);
  }
}
