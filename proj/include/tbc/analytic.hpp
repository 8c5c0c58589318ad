#pragma once

// Closed-form free-space solutions of i psi_t + Laplacian psi = 0 and the
// error metric V.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "tbc/errors.hpp"
#include "tbc/grid.hpp"

namespace tbc {

struct GaussianPacketParams {
  double waist = 18.0;
  double xi = 0.0;
  std::array<double, 3> cosines{1.0, 0.0, 0.0};

  void validate() const {
    if (!(waist > 0.0)) throw ArgumentError("packet waist must be positive");
    const double s = cosines[0] * cosines[0] + cosines[1] * cosines[1] + cosines[2] * cosines[2];
    if (std::abs(s - 1.0) > 1e-12) throw ArgumentError("direction cosines must have unit length");
  }
};

struct PacketSum {
  std::vector<GaussianPacketParams> packets;
};

/// The three packets of the free-space experiment, all with the given waist.
inline PacketSum table1_packets(double waist = 18.0) {
  const double r3 = 1.0 / std::sqrt(3.0);
  const double r2 = 1.0 / std::sqrt(2.0);
  return PacketSum{{
      {waist, 0.05, {r3, r3, r3}},
      {waist, 0.1, {r2, r2, 0.0}},
      {waist, 0.02, {1.0, 0.0, 0.0}},
  }};
}

/**
 * Packet in `dim` dimensions (only the first `dim` coordinates and cosines
 * are used). The prefactor (w^2 / (w^2 + 4it))^{dim/2} uses the principal
 * branch, which is continuous in t because Re(w^2 + 4it) > 0.
 */
inline cplx gaussian_packet_nd(const GaussianPacketParams& p, int dim, double t,
                               std::span<const double> x) {
  const double w2 = p.waist * p.waist;
  const cplx z{w2, 4.0 * t};
  const cplx pre = std::pow(cplx{w2, 0.0} / z, 0.5 * dim);
  double phase = 0.0;
  cplx env{};
  for (int d = 0; d < dim; ++d) {
    const double c = p.cosines[d];
    phase += p.xi * (x[d] - t * p.xi * c) * c;
    const double u = x[d] - 2.0 * t * p.xi * c;
    env += u * u;
  }
  return pre * std::exp(kI * phase - env / z);
}

inline cplx gaussian_packet(const GaussianPacketParams& p, double t, double x, double y, double z) {
  const double xyz[3] = {x, y, z};
  return gaussian_packet_nd(p, 3, t, xyz);
}

inline cplx packet_sum(const PacketSum& sum, double t, double x, double y, double z) {
  if (sum.packets.empty()) throw ArgumentError("packet sum is empty");
  cplx s{};
  for (const auto& p : sum.packets) s += gaussian_packet(p, t, x, y, z);
  return s;
}

/// Samples a packet sum on every node of a grid of any dimension.
inline std::vector<cplx> sample_packets(const GridSpec& grid, const PacketSum& sum, double t) {
  if (sum.packets.empty()) throw ArgumentError("packet sum is empty");
  std::vector<cplx> v(grid.node_count());
  double xyz[3];
  for (std::size_t i = 0; i < v.size(); ++i) {
    node_coords(grid, i, xyz);
    cplx s{};
    for (const auto& p : sum.packets) s += gaussian_packet_nd(p, grid.dim(), t, xyz);
    v[i] = s;
  }
  return v;
}

/// Sum |numeric - exact|^2 / sum |exact|^2 over all nodes.
inline double error_metric_V(std::span<const cplx> numeric, std::span<const cplx> exact) {
  if (numeric.size() != exact.size()) throw MetricError("V: fields have different shapes");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    num += std::norm(numeric[i] - exact[i]);
    den += std::norm(exact[i]);
  }
  if (!(den > 0.0)) throw MetricError("V: reference field has zero norm");
  return num / den;
}

inline double error_metric_V(const ComplexField& numeric, const ComplexField& exact) {
  if (numeric.extents() != exact.extents()) throw MetricError("V: fields have different shapes");
  return error_metric_V(numeric.data(), exact.data());
}

/// Free 1D kernel sqrt(1/(4 pi i mu)) exp(i nu^2 / (4 mu)).
inline cplx free_propagator_1d(double mu, double nu) {
  if (mu == 0.0) throw ArgumentError("free propagator at zero time is a delta function");
  const cplx pre = std::sqrt(1.0 / (4.0 * std::numbers::pi * kI * mu));
  return pre * std::exp(kI * nu * nu / (4.0 * mu));
}

/**
 * Max over interior nodes of |L psi^{n+1} - R psi^n| / h^2, where L and R are
 * the two halves of the free Crank-Nicolson scheme. For smooth exact
 * solutions this is the local truncation error, O(h^2 + tau^2).
 */
inline double interior_residual(const GridSpec& grid, double tau, std::span<const cplx> psi_n,
                                std::span<const cplx> psi_np1) {
  if (psi_n.size() != grid.node_count() || psi_np1.size() != grid.node_count())
    throw ArgumentError("residual: field length does not match the grid");
  const double h = grid.step();
  const DiscretizationConstants k = make_constants(grid.dim(), h, tau, 0.0);
  const int n = grid.nodes_per_axis();
  const int dim = grid.dim();
  std::array<std::size_t, 3> stride{};
  std::size_t s = 1;
  for (int a = dim - 1; a >= 0; --a) {
    stride[a] = s;
    s *= static_cast<std::size_t>(n);
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < psi_n.size(); ++p) {
    bool interior = true;
    for (int a = 0; a < dim && interior; ++a) {
      const auto i = static_cast<int>((p / stride[a]) % n);
      interior = i > 0 && i < n - 1;
    }
    if (!interior) continue;
    cplx nb_new{};
    cplx nb_old{};
    for (int a = 0; a < dim; ++a) {
      nb_new += psi_np1[p - stride[a]] + psi_np1[p + stride[a]];
      nb_old += psi_n[p - stride[a]] + psi_n[p + stride[a]];
    }
    const cplx r = -nb_new + k.c * psi_np1[p] - nb_old + k.c_tilde * psi_n[p];
    worst = std::max(worst, std::abs(r));
  }
  return worst / (h * h);
}

}  // namespace tbc
