#pragma once

#include <chrono>
#include <istream>
#include <memory>
#include <ostream>
#include <vector>

#include "tbc/binary_io.hpp"
#include "tbc/cn_domain.hpp"
#include "tbc/errors.hpp"
#include "tbc/grid.hpp"
#include "tbc/linalg.hpp"
#include "tbc/tbc1d.hpp"

namespace tbc {

struct SolverSetup {
  GridSpec grid;
  TimeSpec time;
  PotentialSpec potential;
  BoundaryMode mode = BoundaryMode::fully_discrete_tbc;
  SolverPolicy policy;
  double exterior_amplitude = 0.0;  // 1D only
  double exterior_q = 0.0;
  PhaseAnchor anchor = PhaseAnchor::boundary_node;
  bool reverse_time = false;  // alpha -> -alpha, i.e. tau -> -tau
  bool validate_initial = true;
  bool record_closure = false;
};

struct StepReport {
  int step = 0;
  int iterations = 0;
  double residual = 0.0;
  double norm = 0.0;  // node sum of |psi|^2
  double wall_seconds = 0.0;
  bool converged = true;
};

template <int D>
class CnSolver {
 public:
  CnSolver(const SolverSetup& setup, std::vector<cplx> initial) : setup_(setup) {
    build_context();
    if (initial.size() != ctx_->size) throw ConfigError("initial field does not match the grid");
    {
      ComplexField check(setup_.grid.extents(), initial);  // rejects NaN/Inf
    }
    if (setup_.validate_initial && setup_.exterior_amplitude == 0.0)
      validate_boundary_amplitude(setup_.grid, initial);
    domain_ = std::make_unique<CnDomain<D>>(ctx_, std::move(initial));
  }

  StepReport step() {
    if (domain_->step() >= kernel_length_ - 1)
      throw StateError("run is longer than the precomputed kernel");
    const auto t0 = std::chrono::steady_clock::now();
    domain_->advance();
    const auto t1 = std::chrono::steady_clock::now();
    StepReport r;
    r.step = domain_->step();
    r.iterations = domain_->last_solve().iterations;
    r.residual = domain_->last_solve().residual;
    r.converged = domain_->last_solve().converged;
    r.norm = field_norm_sq(domain_->field());
    r.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    return r;
  }

  int step_index() const noexcept { return domain_->step(); }
  double time() const noexcept { return domain_->step() * setup_.time.tau; }
  std::span<const cplx> field() const noexcept { return domain_->field(); }
  ComplexField snapshot() const {
    return ComplexField(setup_.grid.extents(), std::vector<cplx>(field().begin(), field().end()));
  }
  const SolverSetup& setup() const noexcept { return setup_; }
  const DomainContext<D>& context() const noexcept { return *ctx_; }
  CnDomain<D>& domain() noexcept { return *domain_; }
  const CnDomain<D>& domain() const noexcept { return *domain_; }
  const HierarchyCounters& counters() const noexcept { return *counters_; }
  const TbcCoefficients& coefficients() const noexcept { return *coeffs_; }

  /// Complex values held by the boundary memory (main field excluded).
  std::size_t hierarchy_values() const { return domain_->stored_values() - ctx_->size; }

  void save_checkpoint(std::ostream& os) const {
    BinaryWriter w(os);
    w.bytes("TBCK", 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(D));
    w.u32(static_cast<std::uint32_t>(setup_.grid.cells()));
    w.f64(setup_.grid.step());
    w.f64(setup_.time.tau);
    w.u32(static_cast<std::uint32_t>(setup_.mode));
    domain_->save(w);
  }

  static CnSolver restore(const SolverSetup& setup, std::istream& is) {
    BinaryReader r(is);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != "TBCK") throw StateError("checkpoint: bad magic");
    if (r.u32() != 1) throw StateError("checkpoint: unsupported version");
    if (r.u32() != static_cast<std::uint32_t>(D)) throw StateError("checkpoint: dimension mismatch");
    if (r.u32() != static_cast<std::uint32_t>(setup.grid.cells())) throw StateError("checkpoint: grid mismatch");
    if (r.f64() != setup.grid.step() || r.f64() != setup.time.tau)
      throw StateError("checkpoint: step sizes differ from the configuration");
    if (r.u32() != static_cast<std::uint32_t>(setup.mode)) throw StateError("checkpoint: boundary mode mismatch");
    CnSolver s(setup);
    s.domain_ = std::make_unique<CnDomain<D>>(CnDomain<D>::load(s.ctx_, r));
    return s;
  }

 private:
  explicit CnSolver(const SolverSetup& setup) : setup_(setup) { build_context(); }

  void build_context() {
    const GridSpec& g = setup_.grid;
    if (g.dim() != D) throw ConfigError("grid dimension does not match the solver");
    const double h = g.step();
    const double tau = setup_.time.tau;
    kernel_length_ = setup_.time.n_steps + 1;

    KernelSet ks;
    ks.nodes = g.nodes_per_axis();
    ks.h = h;
    ks.tau = tau;
    ks.alpha = make_alpha(h, tau);
    if (setup_.reverse_time) {
      if (setup_.mode == BoundaryMode::discretized_bp)
        throw ConfigError("time reversal is not defined for the Baskakov-Popov condition");
      ks.alpha = -ks.alpha;
    }
    ks.mode = setup_.mode;
    coeffs_ = std::make_shared<TbcCoefficients>(compute_beta(ks.alpha, kernel_length_));
    ks.coeffs = coeffs_;
    if (setup_.mode == BoundaryMode::discretized_bp) {
      ks.kernel = std::make_shared<std::vector<cplx>>(bp_kernel(tau, h, kernel_length_));
      ks.initial_kernel = std::make_shared<std::vector<cplx>>(bp_initial_kernel(tau, h, kernel_length_));
    } else
      ks.kernel = std::shared_ptr<const std::vector<cplx>>(coeffs_, &coeffs_->beta);
    counters_ = std::make_shared<HierarchyCounters>();
    ks.counters = counters_;

    SolverPolicy policy = setup_.policy;
    if constexpr (D == 1) policy.method = SolverMethod::tridiagonal_direct;
    if (D == 3 && policy.method == SolverMethod::banded_direct)
      throw ConfigError("banded direct solve is not offered for 3D");
    if (policy.method == SolverMethod::bicgstab || policy.method == SolverMethod::gmres) policy.validate();

    std::vector<double> h2u = sample_potential(setup_.potential, g);
    for (double& u : h2u) u *= h * h;
    auto ctx = make_domain_context<D>(ks, h2u, policy);
    if (setup_.exterior_amplitude != 0.0) {
      if (D != 1) throw ConfigError("plane-wave exterior data is supported in 1D only");
      if (setup_.mode != BoundaryMode::fully_discrete_tbc)
        throw ConfigError("plane-wave exterior data requires the fully discrete condition");
      ctx->exterior = compute_g(ks.alpha, setup_.exterior_q, h, kernel_length_, setup_.exterior_amplitude);
    }
    ctx->anchor = setup_.anchor;
    ctx->record_closure = setup_.record_closure;
    ctx->check_residual = true;
    ctx_ = ctx;
  }

  SolverSetup setup_;
  std::shared_ptr<const DomainContext<D>> ctx_;
  std::shared_ptr<TbcCoefficients> coeffs_;
  std::shared_ptr<HierarchyCounters> counters_;
  std::unique_ptr<CnDomain<D>> domain_;
  int kernel_length_ = 0;
};

}  // namespace tbc
