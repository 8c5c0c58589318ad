#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tbc/errors.hpp"

namespace tbc {

using cplx = std::complex<double>;

inline constexpr cplx kI{0.0, 1.0};

/**
 * Uniform cubic grid on [-a, a]^dim with N cells per axis (N + 1 nodes).
 *
 * The step is always derived from the half-width and the cell count; node
 * coordinates are computed as a * (2p - N) / N so that x_p = -x_{N-p} holds
 * bit-exactly and x_0 = -a, x_N = a.
 */
class GridSpec {
 public:
  GridSpec() = default;

  static GridSpec make(int dim, double half_width, int cells) {
    if (dim < 1 || dim > 3) throw ConfigError("grid dimension must be 1, 2 or 3");
    if (!(half_width > 0.0) || !std::isfinite(half_width))
      throw ConfigError("grid half-width must be positive and finite");
    if (cells < 8) throw ConfigError("grid needs at least 8 cells per axis");
    GridSpec g;
    g.dim_ = dim;
    g.half_width_ = half_width;
    g.cells_ = cells;
    return g;
  }

  int dim() const noexcept { return dim_; }
  double half_width() const noexcept { return half_width_; }
  int cells() const noexcept { return cells_; }
  int nodes_per_axis() const noexcept { return cells_ + 1; }
  double step() const noexcept { return 2.0 * half_width_ / cells_; }

  double coord(int p) const noexcept {
    return half_width_ * static_cast<double>(2 * p - cells_) / static_cast<double>(cells_);
  }

  std::size_t node_count() const noexcept {
    std::size_t n = 1;
    for (int d = 0; d < dim_; ++d) n *= static_cast<std::size_t>(nodes_per_axis());
    return n;
  }

  std::vector<std::size_t> extents() const {
    return std::vector<std::size_t>(static_cast<std::size_t>(dim_),
                                    static_cast<std::size_t>(nodes_per_axis()));
  }

  bool operator==(const GridSpec&) const = default;

 private:
  int dim_ = 1;
  double half_width_ = 1.0;
  int cells_ = 8;
};

/// Time ladder t_n = n * tau, n = 0..n_steps.
struct TimeSpec {
  double tau = 1.0;
  int n_steps = 1;

  static TimeSpec make(double tau, int n_steps) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("time step must be positive");
    if (n_steps < 1) throw ConfigError("number of time steps must be at least 1");
    return TimeSpec{tau, n_steps};
  }

  double time(int n) const noexcept { return n * tau; }
};

/**
 * Crank-Nicolson constants at one node.
 *
 * alpha = 2 i h^2 / tau; the implicit diagonal is C = 2 dim + h^2 U - alpha and
 * the explicit one C~ = 2 dim + h^2 U + alpha. In 1D with U = 0 these are the
 * B = 2 - alpha and B~ = 2 + alpha of the three-point scheme.
 */
struct DiscretizationConstants {
  cplx alpha;
  cplx b;
  cplx b_tilde;
  cplx c;
  cplx c_tilde;
};

inline cplx make_alpha(double h, double tau) {
  if (!(h > 0.0) || !(tau > 0.0)) throw ConfigError("h and tau must be positive");
  return cplx{0.0, 2.0 * h * h / tau};
}

inline DiscretizationConstants make_constants(int dim, double h, double tau,
                                              double potential_at_node = 0.0) {
  const cplx alpha = make_alpha(h, tau);
  const double base = 2.0 * dim + h * h * potential_at_node;
  return {alpha, 2.0 - alpha, 2.0 + alpha, base - alpha, base + alpha};
}

inline DiscretizationConstants make_constants(const GridSpec& grid, const TimeSpec& time,
                                              double potential_at_node = 0.0) {
  return make_constants(grid.dim(), grid.step(), time.tau, potential_at_node);
}

/// Dense complex array over a 1D/2D/3D node block, row-major (last axis fastest).
class ComplexField {
 public:
  ComplexField() = default;

  explicit ComplexField(std::vector<std::size_t> extents)
      : extents_(std::move(extents)), data_(count(extents_), cplx{}) {}

  ComplexField(std::vector<std::size_t> extents, std::vector<cplx> data)
      : extents_(std::move(extents)), data_(std::move(data)) {
    if (data_.size() != count(extents_))
      throw ArgumentError("field data length does not match its shape");
    require_finite();
  }

  const std::vector<std::size_t>& extents() const noexcept { return extents_; }
  std::size_t dim() const noexcept { return extents_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }
  std::vector<cplx>& storage() noexcept { return data_; }

  cplx& operator[](std::size_t i) noexcept { return data_[i]; }
  const cplx& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t index(std::span<const std::size_t> idx) const {
    std::size_t flat = 0;
    for (std::size_t d = 0; d < extents_.size(); ++d) flat = flat * extents_[d] + idx[d];
    return flat;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](const cplx& v) {
      return std::isfinite(v.real()) && std::isfinite(v.imag());
    });
  }

  void require_finite() const {
    if (!all_finite()) throw StateError("field contains NaN or Inf");
  }

  static std::size_t count(const std::vector<std::size_t>& extents) {
    return std::accumulate(extents.begin(), extents.end(), std::size_t{1},
                           std::multiplies<>());
  }

 private:
  std::vector<std::size_t> extents_;
  std::vector<cplx> data_;
};

/// Unweighted node sum of |psi|^2.
inline double field_norm_sq(std::span<const cplx> f) {
  double s = 0.0;
  for (const cplx& v : f) s += std::norm(v);
  return s;
}

inline double field_norm_sq(const ComplexField& f) { return field_norm_sq(f.data()); }

inline double field_max_abs(std::span<const cplx> f) {
  double m = 0.0;
  for (const cplx& v : f) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------------------
// Potentials (normalized units: hbar = 1, 2m = 1)

struct ZeroPotential {};

/// U0 inside the open shell r0 < r < r1 restricted to the half-space coord[axis] > 0.
struct SemiSphericalShell {
  double r0 = 70.0;
  double r1 = 90.0;
  double u0 = 0.01;
  int half_space_axis = 0;
};

/// Per-node values on a given grid; evaluation picks the nearest node.
struct TabulatedPotential {
  GridSpec grid;
  std::vector<double> values;
};

struct PotentialSpec {
  std::variant<ZeroPotential, SemiSphericalShell, TabulatedPotential> kind{ZeroPotential{}};

  bool is_zero() const noexcept { return std::holds_alternative<ZeroPotential>(kind); }
};

inline void validate_potential(const PotentialSpec& spec) {
  if (const auto* s = std::get_if<SemiSphericalShell>(&spec.kind)) {
    if (!(s->r0 >= 0.0) || !(s->r1 > s->r0))
      throw ConfigError("shell potential needs 0 <= r0 < r1");
    if (s->half_space_axis < 0 || s->half_space_axis > 2)
      throw ConfigError("shell half-space axis must be 0, 1 or 2");
    if (!std::isfinite(s->u0)) throw ConfigError("shell height must be finite");
  } else if (const auto* t = std::get_if<TabulatedPotential>(&spec.kind)) {
    if (t->values.size() != t->grid.node_count())
      throw ConfigError("tabulated potential shape does not match its grid");
    for (double v : t->values)
      if (!std::isfinite(v)) throw ConfigError("tabulated potential has non-finite values");
  }
}

inline double evaluate_potential(const PotentialSpec& spec, double x, double y, double z) {
  if (std::holds_alternative<ZeroPotential>(spec.kind)) return 0.0;
  if (const auto* s = std::get_if<SemiSphericalShell>(&spec.kind)) {
    const double r = std::sqrt(x * x + y * y + z * z);
    const double side = s->half_space_axis == 0 ? x : (s->half_space_axis == 1 ? y : z);
    return (s->r0 < r && r < s->r1 && side > 0.0) ? s->u0 : 0.0;
  }
  const auto& t = std::get<TabulatedPotential>(spec.kind);
  if (t.values.size() != t.grid.node_count())
    throw ConfigError("tabulated potential shape does not match its grid");
  const double a = t.grid.half_width();
  const double h = t.grid.step();
  const double pos[3] = {x, y, z};
  std::size_t flat = 0;
  for (int d = 0; d < t.grid.dim(); ++d) {
    if (pos[d] < -a || pos[d] > a) return 0.0;
    const long p = std::lround((pos[d] + a) / h);
    flat = flat * static_cast<std::size_t>(t.grid.nodes_per_axis()) + static_cast<std::size_t>(p);
  }
  return t.values[flat];
}

/// Node coordinates of a flat index (unused trailing coordinates are 0).
inline void node_coords(const GridSpec& grid, std::size_t flat, double out[3]) {
  const auto n = static_cast<std::size_t>(grid.nodes_per_axis());
  out[0] = out[1] = out[2] = 0.0;
  for (int d = grid.dim() - 1; d >= 0; --d) {
    out[d] = grid.coord(static_cast<int>(flat % n));
    flat /= n;
  }
}

inline bool is_boundary_node(const GridSpec& grid, std::size_t flat) {
  const auto n = static_cast<std::size_t>(grid.nodes_per_axis());
  for (int d = 0; d < grid.dim(); ++d) {
    const std::size_t p = flat % n;
    if (p == 0 || p + 1 == n) return true;
    flat /= n;
  }
  return false;
}

/**
 * Samples the potential on every node and enforces compact support: the
 * outermost node layer must carry exactly zero.
 */
inline std::vector<double> sample_potential(const PotentialSpec& spec, const GridSpec& grid) {
  validate_potential(spec);
  std::vector<double> u(grid.node_count(), 0.0);
  if (spec.is_zero()) return u;
  double xyz[3];
  for (std::size_t i = 0; i < u.size(); ++i) {
    node_coords(grid, i, xyz);
    u[i] = evaluate_potential(spec, xyz[0], xyz[1], xyz[2]);
    if (u[i] != 0.0 && is_boundary_node(grid, i))
      throw ConfigError("potential must vanish on the domain boundary");
  }
  return u;
}

/**
 * Rejects initial data that is not negligible on the boundary layer: the
 * max boundary amplitude must be below 1e-10 times the max field amplitude.
 */
inline void validate_boundary_amplitude(const GridSpec& grid, std::span<const cplx> field,
                                        double rel_threshold = 1e-10) {
  double peak = 0.0;
  double edge = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    const double a = std::abs(field[i]);
    peak = std::max(peak, a);
    if (is_boundary_node(grid, i)) edge = std::max(edge, a);
  }
  if (edge > rel_threshold * peak)
    throw ConfigError("initial data does not vanish on the boundary (max boundary amplitude " +
                      std::to_string(edge) + ", field max " + std::to_string(peak) + ")");
}

}  // namespace tbc
