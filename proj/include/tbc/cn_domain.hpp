#pragma once

// Crank-Nicolson domain of dimension D with its boundary memory.
//
// Every node 0..N along each axis is an unknown. One ghost layer per face is
// eliminated through the closure row
//   psi_ghost + s psi_bnd + t psi_inner = rho,   s = 2 kappa^0, t = -1,
//   rho^n = -2 sum_{m<n} kappa^{n-m} child_m(n).
// In 1D child_m is the boundary value at step m. For D > 1 the memory is a
// tower of free sub-problems indexed by one time per fixed axis: the face
// problem with axis a fixed at time m starts from the face trace at step m,
// an edge problem carries two fixed times and a vertex value carries one time
// per axis. Every sub-problem closes its own faces with the same row, and the
// children it needs from before its own start are those started by its
// neighbours. A sub-problem with fixed times t starts at step max(t) from the
// problem lacking the highest axis that reaches the maximum.

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "tbc/binary_io.hpp"
#include "tbc/errors.hpp"
#include "tbc/grid.hpp"
#include "tbc/linalg.hpp"
#include "tbc/tbc1d.hpp"

namespace tbc {

enum class BoundaryMode { fully_discrete_tbc, discretized_bp, hard_wall };

/// Work counters indexed by problem dimension (1..3).
struct HierarchyCounters {
  std::array<std::uint64_t, 4> solves{};
  std::array<std::uint64_t, 4> node_updates{};
  std::array<std::uint64_t, 4> convolution_terms{};
  std::uint64_t krylov_iterations = 0;

  std::uint64_t total_work() const noexcept {
    std::uint64_t s = 0;
    for (int d = 1; d <= 3; ++d) s += node_updates[d] + convolution_terms[d];
    return s;
  }
};

/// Parameters shared by every level of one hierarchy.
struct KernelSet {
  int nodes = 0;
  double h = 0.0;
  double tau = 0.0;
  cplx alpha;
  BoundaryMode mode = BoundaryMode::fully_discrete_tbc;
  std::shared_ptr<const TbcCoefficients> coeffs;    // fully discrete kernel
  std::shared_ptr<const std::vector<cplx>> kernel;  // kernel of the D > 1 closures
  std::shared_ptr<const std::vector<cplx>> initial_kernel;  // weight of the step-0 child, if different
  std::shared_ptr<HierarchyCounters> counters;

  cplx weight(int n, int m) const {
    return m == 0 && initial_kernel ? (*initial_kernel)[n] : (*kernel)[n - m];
  }
};

template <int D>
struct DomainContext;

template <>
struct DomainContext<0> {};

template <int D>
struct DomainContext {
  KernelSet ks;
  cplx diag_shift;   // s in the closure row
  cplx inner_shift;  // t in the closure row
  PlaneWaveExterior exterior;
  PhaseAnchor anchor = PhaseAnchor::boundary_node;
  std::vector<cplx> c_tilde;
  CsrMatrix matrix;
  std::optional<TridiagonalLu> tri;
  std::optional<BandedLu> banded;
  SolverPolicy policy;
  std::array<std::size_t, D> stride{};
  std::size_t size = 0;
  std::size_t face_size = 0;
  // face f = 2 * axis + (0 lower, 1 upper)
  std::array<std::vector<std::size_t>, 2 * D> face_nodes;
  std::array<std::vector<std::size_t>, 2 * D> inner_nodes;
  std::shared_ptr<const DomainContext<D - 1>> child;
  bool record_closure = false;
  bool check_residual = false;  // measure the residual of direct solves

  int nodes() const noexcept { return ks.nodes; }
};

namespace detail {

inline double relative_residual(const CsrMatrix& a, std::span<const cplx> b, std::span<const cplx> x) {
  std::vector<cplx> r(b.size());
  a.multiply(x, r);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    num += std::norm(b[i] - r[i]);
    den += std::norm(b[i]);
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

inline std::pair<cplx, cplx> closure_shifts(const KernelSet& ks) {
  switch (ks.mode) {
    case BoundaryMode::fully_discrete_tbc: return {2.0 * ks.coeffs->beta[0], -1.0};
    case BoundaryMode::discretized_bp:
      return {2.0 * ks.h / (sqrt_pi_i() * std::sqrt(ks.tau)), -1.0};
    case BoundaryMode::hard_wall: break;
  }
  return {0.0, 0.0};
}

/// Calls f(p, coords) for every node in row-major order.
template <int D, typename F>
void for_each_node(int nodes, F&& f) {
  std::array<int, D> c{};
  std::size_t total = 1;
  for (int a = 0; a < D; ++a) total *= static_cast<std::size_t>(nodes);
  for (std::size_t p = 0; p < total; ++p) {
    f(p, c);
    for (int a = D - 1; a >= 0; --a) {
      if (++c[a] < nodes) break;
      c[a] = 0;
    }
  }
}

/**
 * One Crank-Nicolson step of a level. rho_old and rho_new are the closure
 * data of levels n and n+1, face-major; `rhs` is scratch space.
 */
template <int D>
SolveStats cn_solve(const DomainContext<D>& c, std::vector<cplx>& field, const cplx* rho_old,
                    const cplx* rho_new, std::vector<cplx>& rhs) {
  const std::size_t fs = c.face_size;
  const int last = c.ks.nodes - 1;
  rhs.resize(c.size);
  if constexpr (D == 1) {
    rhs[0] = -c.c_tilde[0] * field[0] + field[1];
    for (int p = 1; p < last; ++p) rhs[p] = -c.c_tilde[p] * field[p] + field[p - 1] + field[p + 1];
    rhs[last] = -c.c_tilde[last] * field[last] + field[last - 1];
  } else {
    for_each_node<D>(c.ks.nodes, [&](std::size_t p, const std::array<int, D>& co) {
      cplx v = -c.c_tilde[p] * field[p];
      for (int a = 0; a < D; ++a) {
        if (co[a] > 0) v += field[p - c.stride[a]];
        if (co[a] < last) v += field[p + c.stride[a]];
      }
      rhs[p] = v;
    });
  }
  for (int f = 0; f < 2 * D; ++f)
    for (std::size_t m = 0; m < fs; ++m) {
      const std::size_t p = c.face_nodes[f][m];
      const cplx ghost_old =
          rho_old[f * fs + m] - c.diag_shift * field[p] - c.inner_shift * field[c.inner_nodes[f][m]];
      rhs[p] += ghost_old + rho_new[f * fs + m];
    }

  SolveStats st{0, 0.0, true};
  if (c.tri || c.banded) {
    std::copy(rhs.begin(), rhs.end(), field.begin());
    if (c.tri) c.tri->solve(field);
    else c.banded->solve(field);
    if (c.check_residual) st.residual = relative_residual(c.matrix, rhs, field);
  } else {
    std::vector<cplx> x = field;
    st = krylov_solve(c.matrix, rhs, x, c.policy);
    if (c.ks.counters) c.ks.counters->krylov_iterations += static_cast<std::uint64_t>(st.iterations);
    if (!st.converged) throw SolverError("linear solve did not converge", st.iterations, st.residual);
    field.swap(x);
  }
  if (c.ks.counters) {
    c.ks.counters->solves[D] += 1;
    c.ks.counters->node_updates[D] += c.size;
  }
  return st;
}

}  // namespace detail

/**
 * Builds the context of a D-dimensional level and, recursively, of its
 * boundary levels. `h2u` holds h^2 U per node (empty for a free problem).
 */
template <int D>
std::shared_ptr<DomainContext<D>> make_domain_context(const KernelSet& ks,
                                                      const std::vector<double>& h2u,
                                                      const SolverPolicy& policy) {
  static_assert(D >= 1 && D <= 3);
  if (ks.nodes < 3) throw ConfigError("domain needs at least 3 nodes per axis");
  auto ctx = std::make_shared<DomainContext<D>>();
  ctx->ks = ks;
  ctx->policy = policy;
  const auto n = static_cast<std::size_t>(ks.nodes);
  const int last = ks.nodes - 1;

  ctx->size = 1;
  for (int a = D - 1; a >= 0; --a) {
    ctx->stride[a] = ctx->size;
    ctx->size *= n;
  }
  ctx->face_size = ctx->size / n;
  if (!h2u.empty() && h2u.size() != ctx->size) throw ArgumentError("potential length mismatch");

  const auto [s, t] = detail::closure_shifts(ks);
  ctx->diag_shift = s;
  ctx->inner_shift = t;

  for (int a = 0; a < D; ++a) {
    const std::size_t sa = ctx->stride[a];
    for (int side = 0; side < 2; ++side) {
      auto& fn = ctx->face_nodes[2 * a + side];
      auto& in = ctx->inner_nodes[2 * a + side];
      fn.resize(ctx->face_size);
      in.resize(ctx->face_size);
      const std::size_t i = side == 0 ? 0 : n - 1;
      for (std::size_t m = 0; m < ctx->face_size; ++m) {
        const std::size_t p = (m / sa) * sa * n + i * sa + (m % sa);
        fn[m] = p;
        in[m] = side == 0 ? p + sa : p - sa;
      }
    }
  }

  ctx->c_tilde.resize(ctx->size);
  CsrBuilder b(static_cast<int>(ctx->size));
  detail::for_each_node<D>(ks.nodes, [&](std::size_t p, const std::array<int, D>& c) {
    const double base = 2.0 * D + (h2u.empty() ? 0.0 : h2u[p]);
    ctx->c_tilde[p] = base + ks.alpha;
    cplx diag = base - ks.alpha;
    for (int a = 0; a < D; ++a) {
      const auto sa = static_cast<int>(ctx->stride[a]);
      const int ip = static_cast<int>(p);
      if (c[a] > 0) b.add(ip - sa, -1.0);
      else {
        diag += s;
        b.add(ip + sa, t);
      }
      if (c[a] < last) b.add(ip + sa, -1.0);
      else {
        diag += s;
        b.add(ip - sa, t);
      }
    }
    b.add(static_cast<int>(p), diag);
    b.end_row();
  });
  ctx->matrix = std::move(b).finish();

  switch (policy.method) {
    case SolverMethod::tridiagonal_direct:
      if (D != 1) throw ConfigError("tridiagonal solver applies to 1D only");
      ctx->tri.emplace(ctx->matrix);
      break;
    case SolverMethod::banded_direct: ctx->banded.emplace(ctx->matrix); break;
    default: policy.validate(); break;
  }

  if constexpr (D > 1) {
    if (ks.mode != BoundaryMode::hard_wall) {
      SolverPolicy child_policy = policy;
      child_policy.method = D - 1 == 1 ? SolverMethod::tridiagonal_direct : SolverMethod::banded_direct;
      ctx->child = make_domain_context<D - 1>(ks, {}, child_policy);
    }
  }
  return ctx;
}

namespace detail {

inline constexpr int kMaxAuxTime = (1 << 20) - 2;

/// Fixed axes of a sub-problem: time (-1 if free) and side per main axis.
struct AuxKey {
  std::array<int, 3> time{-1, -1, -1};
  std::array<int, 3> side{0, 0, 0};

  std::uint64_t packed() const noexcept {
    std::uint64_t k = 0;
    for (int a = 0; a < 3; ++a) {
      const auto t = static_cast<std::uint64_t>(time[a] + 1);
      k |= ((t << 1) | static_cast<std::uint64_t>(side[a])) << (21 * a);
    }
    return k;
  }

  static AuxKey unpack(std::uint64_t k) {
    AuxKey key;
    for (int a = 0; a < 3; ++a) {
      const std::uint64_t v = (k >> (21 * a)) & ((1ULL << 21) - 1);
      key.side[a] = static_cast<int>(v & 1);
      key.time[a] = static_cast<int>(v >> 1) - 1;
    }
    return key;
  }

  AuxKey with(int axis, int t, int s) const {
    AuxKey k = *this;
    k.time[axis] = t;
    k.side[axis] = s;
    return k;
  }

  AuxKey without(int axis) const {
    AuxKey k = *this;
    k.time[axis] = -1;
    k.side[axis] = 0;
    return k;
  }

  int max_time() const noexcept { return std::max({time[0], time[1], time[2]}); }

  /// Fixed axis with the largest time; the highest such axis on ties.
  int last_axis() const noexcept {
    int best = -1;
    for (int a = 0; a < 3; ++a)
      if (time[a] >= 0 && (best < 0 || time[a] >= time[best])) best = a;
    return best;
  }
};

/// Sub-problem with one free axis; its endpoint values are the vertex data.
struct Aux1 {
  AuxKey key;
  int axis = 0;
  int birth = 0;
  std::vector<cplx> field;
  std::array<int, 2> own_start{};
  std::array<std::vector<cplx>, 2> own;         // endpoint values from own_start on
  std::array<std::vector<const cplx*>, 2> pre;  // earlier endpoint values, held by neighbours

  cplx vertex(int side, int m) const {
    return m < own_start[side] ? *pre[side][m] : own[side][m - own_start[side]];
  }
};

/// Sub-problem with two free axes (3D hosts only).
struct Aux2 {
  AuxKey key;
  std::array<int, 2> axes{};
  int birth = 0;
  std::vector<cplx> field;
  std::array<std::vector<const Aux1*>, 4> kids;
};

template <int D>
struct FaceMemory {
  using Face = std::conditional_t<D == 3, Aux2, Aux1>;
  std::unordered_map<std::uint64_t, std::unique_ptr<Aux1>> lines;
  std::unordered_map<std::uint64_t, std::unique_ptr<Aux2>> sheets;
  std::vector<Aux1*> line_order;
  std::vector<Aux2*> sheet_order;
  std::array<std::vector<const Face*>, 2 * D> children;
  int born_through = -1;
};

template <>
struct FaceMemory<1> {
  std::array<std::vector<cplx>, 2> history;
};

}  // namespace detail

template <int D>
class CnDomain {
 public:
  using Context = DomainContext<D>;

  CnDomain(std::shared_ptr<const Context> ctx, std::vector<cplx> field)
      : ctx_(std::move(ctx)), field_(std::move(field)) {
    if (!ctx_) throw ArgumentError("domain context missing");
    if (field_.size() != ctx_->size) throw ArgumentError("field length does not match the domain");
    if constexpr (D > 1) {
      if (ctx_->ks.mode != BoundaryMode::hard_wall && kernel_length() > detail::kMaxAuxTime)
        throw ConfigError("run is too long for the boundary memory");
    }
  }

  CnDomain(CnDomain&&) noexcept = default;
  CnDomain& operator=(CnDomain&&) noexcept = default;

  int step() const noexcept { return step_; }
  std::span<const cplx> field() const noexcept { return field_; }
  const Context& context() const noexcept { return *ctx_; }
  const SolveStats& last_solve() const noexcept { return last_solve_; }

  /// Overwrites the current field; used to inject perturbations in checks.
  std::span<cplx> mutable_field() noexcept { return field_; }

  /// rho of every face at the last completed step.
  std::span<const cplx> last_closure(int face) const {
    if (!ctx_->record_closure) throw StateError("closure recording is off for this domain");
    return std::span<const cplx>(last_rho_).subspan(static_cast<std::size_t>(face) * ctx_->face_size,
                                                    ctx_->face_size);
  }

  /// Ghost values of the current level, face-major.
  std::vector<cplx> current_ghosts() const {
    const Context& c = *ctx_;
    std::vector<cplx> rho(2 * D * c.face_size);
    closure(step_, rho);
    for (int f = 0; f < 2 * D; ++f)
      for (std::size_t m = 0; m < c.face_size; ++m)
        rho[f * c.face_size + m] -= c.diag_shift * field_[c.face_nodes[f][m]] +
                                    c.inner_shift * field_[c.inner_nodes[f][m]];
    return rho;
  }

  void advance() {
    const Context& c = *ctx_;
    const std::size_t fs = c.face_size;
    std::vector<cplx> rho_old(2 * D * fs);
    std::vector<cplx> rho_new(2 * D * fs);

    if (c.ks.mode != BoundaryMode::hard_wall) {
      if constexpr (D == 1) {
        closure(step_, rho_old);
        for (int f = 0; f < 2; ++f) {
          auto& hist = memory_.history[f];
          if (hist.size() != static_cast<std::size_t>(step_)) throw StateError("boundary history out of step");
          hist.push_back(field_[c.face_nodes[f][0]]);
        }
        closure(step_ + 1, rho_new);
      } else {
        birth();
        closure(step_, rho_old);
        advance_memory();
        closure(step_ + 1, rho_new);
      }
    }

    std::vector<cplx> rhs;
    try {
      last_solve_ = detail::cn_solve<D>(c, field_, rho_old.data(), rho_new.data(), rhs);
    } catch (const SolverError& e) {
      throw SolverError("linear solve did not converge at step " + std::to_string(step_ + 1),
                        e.iterations(), e.residual());
    }
    if (c.record_closure) last_rho_ = rho_new;
    ++step_;
  }

  /// Complex values kept between steps by this domain and its memory.
  std::size_t stored_values() const {
    std::size_t s = field_.size();
    if constexpr (D == 1) {
      for (const auto& h : memory_.history) s += h.size();
    } else {
      for (const auto* a : memory_.sheet_order) s += a->field.size();
      for (const auto* a : memory_.line_order) s += a->field.size() + a->own[0].size() + a->own[1].size();
    }
    return s;
  }

  /// Live problems per dimension: out[D] for this domain, lower entries for the memory.
  void count_problems(std::array<std::size_t, 4>& out) const {
    out[D] += 1;
    if constexpr (D > 1) {
      out[1] += memory_.line_order.size();
      out[2] += memory_.sheet_order.size();
    }
  }

  void save(BinaryWriter& w) const {
    w.u32(static_cast<std::uint32_t>(D));
    w.i64(step_);
    w.complex_array(field_);
    if constexpr (D == 1) {
      for (const auto& h : memory_.history) w.complex_array(h);
    } else {
      w.i64(memory_.born_through);
      w.u64(memory_.sheet_order.size());
      for (const auto* a : memory_.sheet_order) {
        w.u64(a->key.packed());
        w.complex_array(a->field);
      }
      w.u64(memory_.line_order.size());
      for (const auto* a : memory_.line_order) {
        w.u64(a->key.packed());
        w.complex_array(a->field);
        w.complex_array(a->own[0]);
        w.complex_array(a->own[1]);
      }
    }
  }

  static CnDomain load(std::shared_ptr<const Context> ctx, BinaryReader& r) {
    if (r.u32() != static_cast<std::uint32_t>(D)) throw StateError("checkpoint: dimension mismatch");
    const auto step = r.i64();
    CnDomain d(ctx, r.complex_array());
    if (step < 0) throw StateError("checkpoint: negative step");
    d.step_ = static_cast<int>(step);
    if constexpr (D == 1) {
      for (auto& h : d.memory_.history) h = r.complex_array();
    } else {
      auto& mem = d.memory_;
      const auto born = r.i64();
      if (born < -1 || born > step) throw StateError("checkpoint: bad memory state");
      mem.born_through = static_cast<int>(born);
      const auto n_sheets = r.u64();
      for (std::uint64_t i = 0; i < n_sheets; ++i) {
        auto& a = d.make_sheet(detail::AuxKey::unpack(r.u64()));
        a.field = r.complex_array();
        if (a.field.size() != d.sheet_context().size) throw StateError("checkpoint: bad sub-problem size");
      }
      const auto n_lines = r.u64();
      for (std::uint64_t i = 0; i < n_lines; ++i) {
        auto& a = d.make_line(detail::AuxKey::unpack(r.u64()));
        a.field = r.complex_array();
        if (a.field.size() != d.line_context().size) throw StateError("checkpoint: bad sub-problem size");
        for (auto& o : a.own) {
          const std::vector<cplx> v = r.complex_array();
          if (o.capacity() < v.size()) throw StateError("checkpoint: endpoint history too long");
          o.assign(v.begin(), v.end());
        }
      }
      d.relink_all();
    }
    return d;
  }

 private:
  using Aux1 = detail::Aux1;
  using Aux2 = detail::Aux2;
  using AuxKey = detail::AuxKey;

  const DomainContext<1>& line_context() const {
    if constexpr (D == 3) return *ctx_->child->child;
    else if constexpr (D == 2) return *ctx_->child;
    else return *ctx_;
  }

  const DomainContext<2>& sheet_context() const {
    if constexpr (D == 3) return *ctx_->child;
    else throw StateError("no two-dimensional sub-problems below this level");
  }

  int kernel_length() const { return static_cast<int>(ctx_->ks.kernel->size()); }

  /// rho of every face at level `n`, from the memory as it stands.
  void closure(int n, std::vector<cplx>& rho) const {
    const Context& c = *ctx_;
    std::fill(rho.begin(), rho.end(), cplx{});
    if (c.ks.mode == BoundaryMode::hard_wall) return;
    if constexpr (D == 1) {
      for (int f = 0; f < 2; ++f) {
        const auto& hist = memory_.history[f];
        if (hist.size() < static_cast<std::size_t>(n))
          throw StateError("boundary history shorter than the requested level");
        const Side side = f == 0 ? Side::lower : Side::upper;
        const std::span<const cplx> past(hist.data(), static_cast<std::size_t>(n));
        const ClosureRow row =
            c.ks.mode == BoundaryMode::fully_discrete_tbc
                ? assemble_closure_row(side, n, *c.ks.coeffs, past, c.exterior, c.ks.nodes - 1,
                                       c.ks.h, c.anchor)
                : bp_discretized_row(side, n, past, c.ks.tau, c.ks.h);
        rho[f] = row.rhs / row.c_ghost;
      }
      if (c.ks.counters) c.ks.counters->convolution_terms[1] += 2 * static_cast<std::uint64_t>(n);
    } else {
      if (n >= kernel_length()) throw StateError("kernel coefficients too short");
      const std::size_t fs = c.face_size;
      for (int f = 0; f < 2 * D; ++f) {
        const auto& kids = memory_.children[f];
        if (static_cast<int>(kids.size()) < n) throw StateError("boundary memory is missing a trace");
        cplx* out = rho.data() + f * fs;
        for (int m = 0; m < n; ++m) {
          const cplx k = -2.0 * c.ks.weight(n, m);
          const cplx* v = kids[m]->field.data();
          for (std::size_t i = 0; i < fs; ++i) out[i] += k * v[i];
        }
      }
      if (c.ks.counters) c.ks.counters->convolution_terms[D] += 2 * D * fs * static_cast<std::uint64_t>(n);
    }
  }

  void sheet_closure(const Aux2& a, int n, std::vector<cplx>& rho) const {
    const auto& sc = sheet_context();
    const std::size_t fs = sc.face_size;
    rho.assign(4 * fs, cplx{});
    for (int f = 0; f < 4; ++f) {
      const auto& kids = a.kids[f];
      if (static_cast<int>(kids.size()) < n) throw StateError("boundary memory is missing a trace");
      cplx* out = rho.data() + f * fs;
      for (int m = 0; m < n; ++m) {
        const cplx k = -2.0 * sc.ks.weight(n, m);
        const cplx* v = kids[m]->field.data();
        for (std::size_t i = 0; i < fs; ++i) out[i] += k * v[i];
      }
    }
    if (sc.ks.counters) sc.ks.counters->convolution_terms[2] += 4 * fs * static_cast<std::uint64_t>(n);
  }

  static void line_closure(const DomainContext<1>& lc, const Aux1& a, int n, cplx rho[2]) {
    for (int s = 0; s < 2; ++s) {
      cplx v{};
      for (int m = 0; m < n; ++m) v += lc.ks.weight(n, m) * a.vertex(s, m);
      rho[s] = -2.0 * v;
    }
    if (lc.ks.counters) lc.ks.counters->convolution_terms[1] += 2 * static_cast<std::uint64_t>(n);
  }

  /// Advances every sub-problem from level step_ to step_ + 1.
  void advance_memory() {
    const int n = step_;
    auto& mem = memory_;
    std::vector<cplx> scratch;
    std::vector<std::vector<cplx>> sheet_old;
    if constexpr (D == 3) {
      sheet_old.resize(mem.sheet_order.size());
      for (std::size_t i = 0; i < mem.sheet_order.size(); ++i)
        sheet_closure(*mem.sheet_order[i], n, sheet_old[i]);
    }
    const DomainContext<1>& lc = line_context();
    const int end = lc.ks.nodes - 1;
    for (Aux1* a : mem.line_order) {
      cplx old_rho[2];
      cplx new_rho[2];
      line_closure(lc, *a, n, old_rho);
      line_closure(lc, *a, n + 1, new_rho);
      detail::cn_solve<1>(lc, a->field, old_rho, new_rho, scratch);
      for (int s = 0; s < 2; ++s)
        if (n + 1 >= a->own_start[s]) a->own[s].push_back(a->field[s == 0 ? 0 : end]);
    }
    if constexpr (D == 3) {
      const DomainContext<2>& sc = sheet_context();
      std::vector<cplx> new_rho;
      for (std::size_t i = 0; i < mem.sheet_order.size(); ++i) {
        Aux2& a = *mem.sheet_order[i];
        sheet_closure(a, n + 1, new_rho);
        detail::cn_solve<2>(sc, a.field, sheet_old[i].data(), new_rho.data(), scratch);
      }
    }
  }

  Aux2& make_sheet(const AuxKey& key) {
    auto a = std::make_unique<Aux2>();
    a->key = key;
    a->birth = key.max_time();
    int j = 0;
    for (int ax = 0; ax < 3; ++ax)
      if (key.time[ax] < 0) a->axes[j++] = ax;
    Aux2& ref = *a;
    if (!memory_.sheets.emplace(key.packed(), std::move(a)).second)
      throw StateError("duplicate boundary sub-problem");
    memory_.sheet_order.push_back(&ref);
    return ref;
  }

  Aux1& make_line(const AuxKey& key) {
    auto a = std::make_unique<Aux1>();
    a->key = key;
    a->birth = key.max_time();
    for (int ax = 0; ax < D; ++ax)
      if (key.time[ax] < 0) a->axis = ax;
    // The endpoint value at the start step is held here unless a higher axis
    // shares the start time.
    bool tie = false;
    for (int ax = a->axis + 1; ax < D; ++ax) tie = tie || key.time[ax] == a->birth;
    for (int s = 0; s < 2; ++s) {
      a->own_start[s] = a->birth + (tie ? 1 : 0);
      a->own[s].reserve(static_cast<std::size_t>(std::max(0, kernel_length() + 1 - a->own_start[s])));
    }
    Aux1& ref = *a;
    if (!memory_.lines.emplace(key.packed(), std::move(a)).second)
      throw StateError("duplicate boundary sub-problem");
    memory_.line_order.push_back(&ref);
    return ref;
  }

  template <typename T>
  static const T& find(const std::unordered_map<std::uint64_t, std::unique_ptr<T>>& map, const AuxKey& key) {
    const auto it = map.find(key.packed());
    if (it == map.end()) throw StateError("boundary memory is missing a sub-problem");
    return *it->second;
  }

  const Aux1& find_line(const AuxKey& key) const { return find(memory_.lines, key); }
  const Aux2& find_sheet(const AuxKey& key) const { return find(memory_.sheets, key); }

  /// Address of the stored value of a vertex (all main axes fixed).
  const cplx* vertex_ref(const AuxKey& v) const {
    const int a = v.last_axis();
    const Aux1& owner = find_line(v.without(a));
    const int s = v.side[a];
    const int idx = v.time[a] - owner.own_start[s];
    if (owner.axis != a || idx < 0 || idx >= static_cast<int>(owner.own[s].size()))
      throw StateError("boundary memory is missing a vertex value");
    return &owner.own[s][static_cast<std::size_t>(idx)];
  }

  void link_line(Aux1& a) const {
    for (int s = 0; s < 2; ++s) {
      a.pre[s].resize(static_cast<std::size_t>(a.own_start[s]));
      for (int m = 0; m < a.own_start[s]; ++m) a.pre[s][m] = vertex_ref(a.key.with(a.axis, m, s));
    }
  }

  void link_sheet(Aux2& a, int from, int to) const {
    for (int j = 0; j < 2; ++j)
      for (int s = 0; s < 2; ++s) {
        auto& kids = a.kids[2 * j + s];
        kids.resize(static_cast<std::size_t>(to + 1));
        for (int m = from; m <= to; ++m) kids[m] = &find_line(a.key.with(a.axes[j], m, s));
      }
  }

  void link_main(int from, int to) {
    for (int ax = 0; ax < D; ++ax)
      for (int s = 0; s < 2; ++s) {
        auto& kids = memory_.children[2 * ax + s];
        kids.resize(static_cast<std::size_t>(to + 1));
        for (int m = from; m <= to; ++m) {
          const AuxKey key = AuxKey{}.with(ax, m, s);
          if constexpr (D == 3) kids[m] = &find_sheet(key);
          else kids[m] = &find_line(key);
        }
      }
  }

  void relink_all() {
    const int to = memory_.born_through;
    if (to < 0) return;
    link_main(0, to);
    if constexpr (D == 3)
      for (Aux2* a : memory_.sheet_order) link_sheet(*a, 0, to);
    for (Aux1* a : memory_.line_order) link_line(*a);
  }

  /// Starts every sub-problem whose last fixed time is the current step.
  void birth() {
    const Context& c = *ctx_;
    const int n = step_;
    auto& mem = memory_;
    if (mem.born_through >= n) return;
    if (mem.born_through != n - 1) throw StateError("boundary memory out of step");

    const std::size_t lines_before = mem.line_order.size();
    const std::size_t sheets_before = mem.sheet_order.size();
    const int end = line_context().ks.nodes - 1;
    auto start_line = [&](Aux1& a, std::vector<cplx> trace) {
      a.field = std::move(trace);
      for (int s = 0; s < 2; ++s)
        if (a.own_start[s] == n) a.own[s].push_back(a.field[s == 0 ? 0 : end]);
    };

    for (int ax = 0; ax < D; ++ax)
      for (int s = 0; s < 2; ++s) {
        const int f = 2 * ax + s;
        std::vector<cplx> trace(c.face_size);
        for (std::size_t m = 0; m < c.face_size; ++m) trace[m] = field_[c.face_nodes[f][m]];
        const AuxKey key = AuxKey{}.with(ax, n, s);
        if constexpr (D == 3) make_sheet(key).field = std::move(trace);
        else start_line(make_line(key), std::move(trace));
      }

    if constexpr (D == 3) {
      const auto& sc = sheet_context();
      for (int a0 = 0; a0 < 3; ++a0)
        for (int a1 = a0 + 1; a1 < 3; ++a1)
          for (int s0 = 0; s0 < 2; ++s0)
            for (int s1 = 0; s1 < 2; ++s1)
              for (int other = 0; other <= n; ++other)
                for (int high = 0; high < 2; ++high) {
                  // high: a1 is fixed at n; otherwise a0 is, with a1 earlier
                  if (!high && other == n) continue;
                  AuxKey key;
                  key.time[a0] = high ? other : n;
                  key.time[a1] = high ? n : other;
                  key.side[a0] = s0;
                  key.side[a1] = s1;
                  const int cut = key.last_axis();
                  const Aux2& parent = find_sheet(key.without(cut));
                  const int f = 2 * (parent.axes[0] == cut ? 0 : 1) + key.side[cut];
                  std::vector<cplx> trace(sc.face_size);
                  for (std::size_t m = 0; m < sc.face_size; ++m) trace[m] = parent.field[sc.face_nodes[f][m]];
                  start_line(make_line(key), std::move(trace));
                }
    }

    link_main(n, n);
    if constexpr (D == 3) {
      for (std::size_t i = 0; i < sheets_before; ++i) link_sheet(*mem.sheet_order[i], n, n);
      for (std::size_t i = sheets_before; i < mem.sheet_order.size(); ++i) link_sheet(*mem.sheet_order[i], 0, n);
    }
    for (std::size_t i = lines_before; i < mem.line_order.size(); ++i) link_line(*mem.line_order[i]);
    mem.born_through = n;
  }

  std::shared_ptr<const Context> ctx_;
  std::vector<cplx> field_;
  int step_ = 0;
  detail::FaceMemory<D> memory_;
  std::vector<cplx> last_rho_;
  SolveStats last_solve_;
};

}  // namespace tbc
