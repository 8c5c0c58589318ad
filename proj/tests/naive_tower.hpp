#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <tuple>
#include <vector>

#include "tbc/cn_domain.hpp"
#include "tbc/tbc1d.hpp"

namespace tbc::testing {

// Dense reference for the 2D tower: every ghost is an explicit unknown and
// every edge problem keeps its whole time history.
class NaiveTower2d {
 public:
  NaiveTower2d(int cells, double h, double tau, BoundaryMode mode, std::vector<cplx> init, int steps)
      : n1_(cells + 1), alpha_(make_alpha(h, tau)), psi_(std::move(init)) {
    if (mode == BoundaryMode::fully_discrete_tbc) {
      kernel_ = compute_beta(alpha_, steps + 1).beta;
    } else {
      kernel_ = bp_kernel(tau, h, steps + 1);
      initial_ = bp_initial_kernel(tau, h, steps + 1);
    }
    s_ = 2.0 * kernel_[0];
  }

  const std::vector<cplx>& field() const { return psi_; }
  const std::vector<cplx>& closure(int face) const { return rho_new_[face]; }

  void step() {
    const int n = step_;
    for (int a = 0; a < 2; ++a)
      for (int s = 0; s < 2; ++s) {
        std::vector<cplx> trace(n1_);
        for (int m = 0; m < n1_; ++m) trace[m] = a == 0 ? at(end(s), m) : at(m, end(s));
        lines_[{a, s, n}][n] = trace;
      }

    // edge problems first: they only read values up to level n
    std::map<Key, std::vector<cplx>> advanced;
    for (auto& [key, hist] : lines_) {
      const auto [a, s, m] = key;
      cplx old_rho[2];
      cplx new_rho[2];
      for (int e = 0; e < 2; ++e) {
        old_rho[e] = line_rho(a, s, m, e, n);
        new_rho[e] = line_rho(a, s, m, e, n + 1);
      }
      advanced[key] = cn_1d(hist.at(n), old_rho, new_rho);
    }
    for (auto& [key, v] : advanced) lines_[key][n + 1] = v;

    std::array<std::vector<cplx>, 4> rho_old;
    for (int f = 0; f < 4; ++f) {
      rho_old[f] = main_rho(f / 2, f % 2, n);
      rho_new_[f] = main_rho(f / 2, f % 2, n + 1);
    }
    psi_ = cn_2d(psi_, rho_old, rho_new_);
    ++step_;
  }

 private:
  using Key = std::tuple<int, int, int>;  // fixed axis, side, start step

  int end(int side) const { return side == 0 ? 0 : n1_ - 1; }
  cplx at(int i, int j) const { return psi_[static_cast<std::size_t>(i * n1_ + j)]; }

  cplx weight(int k, int m) const { return m == 0 && !initial_.empty() ? initial_[k] : kernel_[k - m]; }

  // value with axis a fixed at time m (side s) and the other axis fixed at time j (side e)
  cplx vertex(int a, int s, int m, int e, int j) const {
    if (j >= m) return lines_.at({a, s, m}).at(j)[end(e)];
    return lines_.at({1 - a, e, j}).at(m)[end(s)];
  }

  cplx line_rho(int a, int s, int m, int e, int k) const {
    cplx sum{};
    for (int j = 0; j < k; ++j) sum += weight(k, j) * vertex(a, s, m, e, j);
    return -2.0 * sum;
  }

  std::vector<cplx> main_rho(int a, int s, int k) const {
    std::vector<cplx> r(n1_);
    for (int m = 0; m < k; ++m) {
      const auto& v = lines_.at({a, s, m}).at(k);
      for (int i = 0; i < n1_; ++i) r[i] += -2.0 * weight(k, m) * v[i];
    }
    return r;
  }

  // unknowns: u_0..u_{n-1}, ghost below, ghost above
  std::vector<cplx> cn_1d(const std::vector<cplx>& u, const cplx rho_old[2], const cplx rho_new[2]) const {
    const int n = n1_;
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(n + 2, n + 2);
    Eigen::VectorXcd b(n + 2);
    const cplx g_lo = rho_old[0] - s_ * u[0] + u[1];
    const cplx g_hi = rho_old[1] - s_ * u[n - 1] + u[n - 2];
    for (int p = 0; p < n; ++p) {
      A(p, p) = 2.0 - alpha_;
      A(p, p == 0 ? n : p - 1) = -1.0;
      A(p, p == n - 1 ? n + 1 : p + 1) = -1.0;
      const cplx left = p == 0 ? g_lo : u[p - 1];
      const cplx right = p == n - 1 ? g_hi : u[p + 1];
      b(p) = -(2.0 + alpha_) * u[p] + left + right;
    }
    A(n, n) = 1.0;
    A(n, 0) = s_;
    A(n, 1) = -1.0;
    b(n) = rho_new[0];
    A(n + 1, n + 1) = 1.0;
    A(n + 1, n - 1) = s_;
    A(n + 1, n - 2) = -1.0;
    b(n + 1) = rho_new[1];
    const Eigen::VectorXcd x = A.partialPivLu().solve(b);
    return std::vector<cplx>(x.data(), x.data() + n);
  }

  // unknowns: the n1^2 nodes, then four ghost rows of n1 values each (face f = 2 axis + side)
  std::vector<cplx> cn_2d(const std::vector<cplx>& u, const std::array<std::vector<cplx>, 4>& rho_old,
                          const std::array<std::vector<cplx>, 4>& rho_new) const {
    const int n = n1_;
    const int nodes = n * n;
    const int total = nodes + 4 * n;
    auto node = [&](int i, int j) { return i * n + j; };
    auto ghost = [&](int f, int m) { return nodes + f * n + m; };
    auto bnd = [&](int f, int m) { return f / 2 == 0 ? node(end(f % 2), m) : node(m, end(f % 2)); };
    auto inner = [&](int f, int m) {
      const int d = f % 2 == 0 ? 1 : -1;
      return f / 2 == 0 ? node(end(f % 2) + d, m) : node(m, end(f % 2) + d);
    };
    std::vector<cplx> g_old(4 * n);
    for (int f = 0; f < 4; ++f)
      for (int m = 0; m < n; ++m) g_old[f * n + m] = rho_old[f][m] - s_ * u[bnd(f, m)] + u[inner(f, m)];

    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(total, total);
    Eigen::VectorXcd b(total);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const int r = node(i, j);
        A(r, r) = 4.0 - alpha_;
        cplx rhs = -(4.0 + alpha_) * u[r];
        const int nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
        const int face[4] = {0, 1, 2, 3};
        for (int k = 0; k < 4; ++k) {
          const auto [ii, jj] = std::pair{nb[k][0], nb[k][1]};
          if (ii >= 0 && ii < n && jj >= 0 && jj < n) {
            A(r, node(ii, jj)) += -1.0;
            rhs += u[node(ii, jj)];
          } else {
            const int m = k < 2 ? j : i;
            A(r, ghost(face[k], m)) += -1.0;
            rhs += g_old[face[k] * n + m];
          }
        }
        b(r) = rhs;
      }
    for (int f = 0; f < 4; ++f)
      for (int m = 0; m < n; ++m) {
        const int r = ghost(f, m);
        A(r, r) = 1.0;
        A(r, bnd(f, m)) += s_;
        A(r, inner(f, m)) += -1.0;
        b(r) = rho_new[f][m];
      }
    const Eigen::VectorXcd x = A.partialPivLu().solve(b);
    return std::vector<cplx>(x.data(), x.data() + nodes);
  }

  int n1_;
  cplx alpha_;
  cplx s_;
  std::vector<cplx> kernel_;
  std::vector<cplx> initial_;
  std::vector<cplx> psi_;
  std::map<Key, std::map<int, std::vector<cplx>>> lines_;
  std::array<std::vector<cplx>, 4> rho_new_;
  int step_ = 0;
};

}  // namespace tbc::testing
