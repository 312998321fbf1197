#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "curvlab/error.hpp"
#include "curvlab/paths/time_grid.hpp"

namespace curvlab {

// q = (x, D, r), q' = (x', D', r'); all blocks of length N.
struct LagrangianState {
  Eigen::VectorXd x, D, r, xp, Dp, rp;

  std::size_t N() const { return static_cast<std::size_t>(x.size()); }
  void validate() const {
    const auto n = x.size();
    if (D.size() != n || r.size() != n || xp.size() != n || Dp.size() != n || rp.size() != n)
      throw DimensionError("lagrangian state blocks must all have length N");
  }
};

// L = |x'| x.(D' + r D) / (x.D), with r D taken componentwise.
inline double lagrangian(const LagrangianState& q) {
  q.validate();
  const double xD = q.x.dot(q.D);
  if (xD == 0.0 || !std::isfinite(xD)) throw SingularityError("lagrangian: x.D vanishes");
  return q.xp.norm() * q.x.dot(q.Dp + q.r.cwiseProduct(q.D)) / xD;
}

// g(x0, D0, D0') = sum_j (D0.v_j) v_j + (D0'.x0 / |x0|^2) x0 over an orthonormal
// basis v_j of span(x0)^perp; D0 itself when x0 = 0.
inline Eigen::VectorXd g_operator(const Eigen::VectorXd& x0, const Eigen::VectorXd& D0, const Eigen::VectorXd& D0p) {
  if (D0.size() != x0.size() || D0p.size() != x0.size()) throw DimensionError("g_operator: length mismatch");
  const double n2 = x0.squaredNorm();
  if (n2 == 0.0) return D0;
  const Eigen::Index N = x0.size();
  Eigen::VectorXd g = (D0p.dot(x0) / n2) * x0;
  if (N == 1) return g;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x0);
  const Eigen::MatrixXd Q = qr.householderQ();
  for (Eigen::Index j = 1; j < N; ++j) g += D0.dot(Q.col(j)) * Q.col(j);
  return g;
}

// Residuals of the constrained Euler-Lagrange system along a deterministic
// trajectory. eq1 and eq2 are vector equations (max-norm reported), eq3 is the
// self-financing constraint x'.D. Derivatives use five-point finite differences
// (fourth order on uniform grids), so the two points at each end carry NaN.
// A three-point stencil converges at exactly second order from below, which
// makes a fourfold decrease per halving unreachable; five points leave margin.
struct ELResidual {
  std::vector<double> eq1, eq2, eq3;
  double max1 = 0.0, max2 = 0.0, max3 = 0.0;
  double max() const { return std::max({max1, max2, max3}); }
};

namespace detail {

// Fornberg weights for derivatives 0..2 at z on the nodes t (any spacing).
// Returns w[k][j]: weight of f(t_j) in the k-th derivative.
inline std::array<std::array<double, 5>, 3> fd_weights(const std::array<double, 5>& t, double z) {
  constexpr int n = 5, m = 2;
  std::array<std::array<double, 5>, 3> c{};
  double c1 = 1.0, c4 = t[0] - z;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = t[i] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = t[i] - t[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

}  // namespace detail

inline ELResidual euler_lagrange_residual(const TimeGrid& grid, const std::vector<Eigen::VectorXd>& x,
                                          const std::vector<Eigen::VectorXd>& D,
                                          const std::vector<Eigen::VectorXd>& r) {
  const std::size_t nt = grid.size();
  if (x.size() != nt || D.size() != nt || r.size() != nt)
    throw DimensionError("euler_lagrange_residual: trajectory length != grid size");
  if (nt < 5) throw ValidationError("euler_lagrange_residual: trajectory needs at least five grid points");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ELResidual out{std::vector<double>(nt, nan), std::vector<double>(nt, nan), std::vector<double>(nt, nan)};
  for (std::size_t i = 2; i + 2 < nt; ++i) {
    // Offsets from t_i keep the weights free of cancellation at large t.
    const auto w = detail::fd_weights({grid[i - 2] - grid[i], grid[i - 1] - grid[i], 0.0, grid[i + 1] - grid[i],
                                       grid[i + 2] - grid[i]}, 0.0);
    // Derivative weights sum to zero, so differencing against f_i first keeps a
    // constant block exactly stationary instead of leaving rounding noise.
    auto d = [&](int k, const std::vector<Eigen::VectorXd>& f) -> Eigen::VectorXd {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(f[i].size());
      for (std::size_t j = 0; j < 5; ++j)
        if (j != 2) acc += w[k][j] * (f[i + j - 2] - f[i]);
      return acc;
    };
    auto d1 = [&](const std::vector<Eigen::VectorXd>& f) { return d(1, f); };
    auto d2 = [&](const std::vector<Eigen::VectorXd>& f) { return d(2, f); };
    const Eigen::VectorXd &xi = x[i], &Di = D[i], &ri = r[i];
    const Eigen::VectorXd xp = d1(x), xpp = d2(x), Dp = d1(D), Dpp = d2(D), rp = d1(r);
    const Eigen::VectorXd rD = ri.cwiseProduct(Di);
    const double xDp = xi.dot(Dp), xD = xi.dot(Di), ret = xi.dot(rD + Dp);
    const Eigen::VectorXd e1 = Di * xDp - ret * (xDp + xp.dot(Di)) * xp +
                               xD * (-Dp + (xi.dot(ri.cwiseProduct(Dp) + Di.cwiseProduct(rp) + Dpp) + xp.dot(rD + Dp)) * xp) +
                               ret * xpp;
    const Eigen::VectorXd e2 = xD * xp - (xD + xDp + xp.dot(Di)) * xi;
    out.eq1[i] = e1.cwiseAbs().maxCoeff();
    out.eq2[i] = e2.cwiseAbs().maxCoeff();
    out.eq3[i] = std::abs(xp.dot(Di));
    out.max1 = std::max(out.max1, out.eq1[i]);
    out.max2 = std::max(out.max2, out.eq2[i]);
    out.max3 = std::max(out.max3, out.eq3[i]);
  }
  return out;
}

}  // namespace curvlab
