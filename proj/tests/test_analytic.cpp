#include "catch_amalgamated.hpp"

#include "tbc/analytic.hpp"

using namespace tbc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// 1D packet with unit cosine
GaussianPacketParams packet_1d(double w, double xi) { return {w, xi, {1.0, 0.0, 0.0}}; }

cplx eval_1d(const GaussianPacketParams& p, double t, double x) {
  const double xs[1] = {x};
  return gaussian_packet_nd(p, 1, t, xs);
}

}  // namespace

TEST_CASE("packets at the origin at t = 0", "[analytic]") {
  for (const auto& p : table1_packets().packets) CHECK(std::abs(gaussian_packet(p, 0.0, 0.0, 0.0, 0.0) - 1.0) < 1e-15);
  CHECK(std::abs(packet_sum(table1_packets(), 0.0, 0, 0, 0) - 3.0) < 1e-14);

  const GaussianPacketParams still{10.0, 0.0, {0.0, 1.0, 0.0}};
  const cplx v = gaussian_packet(still, 0.0, 3.0, 4.0, -2.0);
  CHECK(v.imag() == 0.0);
  CHECK_THAT(v.real(), WithinRel(std::exp(-29.0 / 100.0), 1e-14));
}

TEST_CASE("packet parameter checks", "[analytic]") {
  CHECK_THROWS_AS((GaussianPacketParams{0.0, 0.1, {1, 0, 0}}.validate()), ArgumentError);
  CHECK_THROWS_AS((GaussianPacketParams{5.0, 0.1, {1, 1, 0}}.validate()), ArgumentError);
  CHECK_NOTHROW(table1_packets().packets[0].validate());
  CHECK_THROWS_AS(packet_sum(PacketSum{}, 0, 0, 0, 0), ArgumentError);
  CHECK_THROWS_AS(free_propagator_1d(0.0, 1.0), ArgumentError);
}

TEST_CASE("packet solves the free equation", "[analytic]") {
  const GaussianPacketParams p = table1_packets(12.0).packets[0];
  const double d = 1e-3;
  for (double t : {0.0, 7.0, 40.0})
    for (double x : {-5.0, 0.0, 6.0}) {
      const double y = 0.5 * x;
      const double z = -2.0;
      auto f = [&](double tt, double xx, double yy, double zz) { return gaussian_packet(p, tt, xx, yy, zz); };
      const cplx dt = (f(t + d, x, y, z) - f(t - d, x, y, z)) / (2 * d);
      const cplx c = f(t, x, y, z);
      const cplx lap = (f(t, x + d, y, z) + f(t, x - d, y, z) + f(t, x, y + d, z) + f(t, x, y - d, z) +
                        f(t, x, y, z + d) + f(t, x, y, z - d) - 6.0 * c) /
                       (d * d);
      CHECK(std::abs(kI * dt + lap) < 1e-6);
    }
}

TEST_CASE("free propagator carries the packet forward", "[analytic]") {
  const auto p = packet_1d(6.0, 0.4);
  const double t = 5.0;
  CHECK(free_propagator_1d(t, 2.0) == free_propagator_1d(t, -2.0));
  const double dy = 0.01;
  for (double x : {-3.0, 0.0, 4.0, 9.0}) {
    cplx sum{};
    for (double y = -80.0; y <= 80.0; y += dy) sum += free_propagator_1d(t, x - y) * eval_1d(p, 0.0, y);
    CHECK(std::abs(sum * dy - eval_1d(p, t, x)) < 1e-8);
  }
}

TEST_CASE("packet norm is conserved and the centre drifts at 2 xi", "[analytic]") {
  const auto p = packet_1d(5.0, 0.3);
  auto norm = [&](double t) {
    double s = 0.0;
    for (double x = -150.0; x <= 150.0; x += 0.02) s += std::norm(eval_1d(p, t, x));
    return s * 0.02;
  };
  const double n0 = norm(0.0);
  CHECK_THAT(n0, WithinRel(5.0 * std::sqrt(std::numbers::pi / 2.0), 1e-10));
  CHECK_THAT(norm(30.0), WithinRel(n0, 1e-10));

  const double t = 50.0;
  double best = 0.0;
  double at = 0.0;
  for (double x = -100.0; x <= 100.0; x += 0.01) {
    const double a = std::abs(eval_1d(p, t, x));
    if (a > best) {
      best = a;
      at = x;
    }
  }
  CHECK_THAT(at, WithinAbs(2.0 * 0.3 * t, 0.011));
}

TEST_CASE("error metric V", "[analytic][metric]") {
  const std::vector<cplx> exact{1.0, cplx(0.0, 2.0), -1.0};
  CHECK(error_metric_V(exact, exact) == 0.0);
  CHECK(error_metric_V(std::vector<cplx>(3), exact) == 1.0);
  std::vector<cplx> doubled(3);
  std::vector<cplx> rot_n(3);
  std::vector<cplx> rot_e(3);
  const std::vector<cplx> numeric{1.1, cplx(0.1, 2.0), -0.9};
  for (int i = 0; i < 3; ++i) {
    doubled[i] = 2.0 * exact[i];
    rot_n[i] = std::polar(1.0, 0.7) * numeric[i];
    rot_e[i] = std::polar(1.0, 0.7) * exact[i];
  }
  CHECK_THAT(error_metric_V(doubled, exact), WithinAbs(1.0, 1e-15));
  CHECK_THAT(error_metric_V(rot_n, rot_e), WithinRel(error_metric_V(numeric, exact), 1e-13));

  CHECK_THROWS_AS(error_metric_V(std::vector<cplx>(2), exact), MetricError);
  CHECK_THROWS_AS(error_metric_V(exact, std::vector<cplx>(3)), MetricError);
  CHECK_THROWS_AS(error_metric_V(ComplexField({3}), ComplexField({1, 3})), MetricError);
}

TEST_CASE("interior residual is second order", "[analytic][convergence]") {
  const PacketSum sum{{{6.0, 0.3, {0.6, 0.8, 0.0}}}};
  auto res = [&](int cells, double tau) {
    const GridSpec g = GridSpec::make(2, 20.0, cells);
    const double t0 = 3.0;
    return interior_residual(g, tau, sample_packets(g, sum, t0), sample_packets(g, sum, t0 + tau));
  };
  const double coarse = res(40, 0.5);
  const double fine = res(80, 0.25);
  CHECK(coarse / fine > 3.0);
  CHECK(coarse / fine < 5.0);
  CHECK_THROWS_AS(interior_residual(GridSpec::make(1, 1.0, 8), 1.0, std::vector<cplx>(9), std::vector<cplx>(3)),
                  ArgumentError);
}
