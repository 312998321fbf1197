#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "curvlab/geometry/market.hpp"

namespace curvlab {

// Gamma(x,t,g).(dx,dt) = g (D^{dx}_t / D^x_t - r^x_t dt), scenario s, grid index i.
inline double connection_eval(const MarketModel& m, std::size_t s, std::size_t i, const Eigen::VectorXd& x, double g,
                              const Eigen::VectorXd& dx, double dt) {
  const double Dx = m.nonzero_Dx(s, i, x);
  return g * (m.Dx(s, i, dx) / Dx - m.rx(s, i, x) * dt);
}

// Tangent triple (dx, dt, dg) at (x, t, g).
struct Tangent {
  Eigen::VectorXd dx;
  double dt = 0.0;
  double dg = 0.0;
};

// Horizontal vectors satisfy dg = -Gamma(dx, dt).
inline Tangent horizontal_projection(const MarketModel& m, std::size_t s, std::size_t i, const Eigen::VectorXd& x,
                                     double g, const Tangent& v) {
  return {v.dx, v.dt, -connection_eval(m, s, i, x, g, v.dx, v.dt)};
}

inline Tangent vertical_projection(const MarketModel& m, std::size_t s, std::size_t i, const Eigen::VectorXd& x,
                                   double g, const Tangent& v) {
  return {Eigen::VectorXd::Zero(v.dx.size()), 0.0, v.dg + connection_eval(m, s, i, x, g, v.dx, v.dt)};
}

// Polyline in (nominals, time); vertex times must be grid points.
struct CurvePoint {
  Eigen::VectorXd x;
  double t;
};
using SampledCurveInM = std::vector<CurvePoint>;

namespace detail {

inline double lerp_D(const MarketModel& m, std::size_t s, std::size_t i0, std::size_t i1, double w,
                     const Eigen::VectorXd& x) {
  return (1 - w) * m.Dx(s, i0, x) + w * m.Dx(s, i1, x);
}

// log of the transport factor along one straight segment a -> b.
inline double transport_log_segment(const MarketModel& m, std::size_t s, const CurvePoint& a, const CurvePoint& b,
                                    std::size_t substeps) {
  const auto& grid = m.grid();
  const std::size_t ia = grid.index_of(a.t), ib = grid.index_of(b.t);
  const bool moves_x = (b.x - a.x).norm() > 0.0;
  if (ia == ib) {
    if (!moves_x) return 0.0;
    // Pure nominal segment: multiplication by the exchange rate D^{x_a}/D^{x_b}.
    const double Da = m.nonzero_Dx(s, ia, a.x), Db = m.Dx(s, ia, b.x);
    if (Da / Db <= 0 || !std::isfinite(Da / Db)) throw SingularityError("parallel transport: D^x changes sign on nominal segment");
    // A straight line may still cross D^x = 0 in between; D^x is linear in x.
    return std::log(Da / Db);
  }
  const int dir = ib > ia ? 1 : -1;
  if (!moves_x) {
    // Pure time segment: exp(+int r^x dt), trapezoid on the grid; reversed time gives the inverse.
    double acc = 0.0;
    for (std::size_t i = std::min(ia, ib); i < std::max(ia, ib); ++i)
      acc += 0.5 * (m.rx(s, i, a.x) + m.rx(s, i + 1, a.x)) * (grid[i + 1] - grid[i]);
    return dir * acc;
  }
  // General segment: x linear in t, exponential-midpoint rule with `substeps`
  // pieces per grid interval.
  double acc = 0.0;
  const double T0 = a.t, T1 = b.t;
  for (std::size_t i = std::min(ia, ib); i < std::max(ia, ib); ++i) {
    for (std::size_t k = 0; k < substeps; ++k) {
      const double w0 = double(k) / substeps, w1 = double(k + 1) / substeps, wm = 0.5 * (w0 + w1);
      const double t0 = grid[i] + w0 * (grid[i + 1] - grid[i]), t1 = grid[i] + w1 * (grid[i + 1] - grid[i]);
      const double tm = 0.5 * (t0 + t1);
      const Eigen::VectorXd x0 = a.x + (b.x - a.x) * ((t0 - T0) / (T1 - T0));
      const Eigen::VectorXd x1 = a.x + (b.x - a.x) * ((t1 - T0) / (T1 - T0));
      const Eigen::VectorXd xm = 0.5 * (x0 + x1);
      const double Dm = lerp_D(m, s, i, i + 1, wm, xm);
      if (Dm == 0.0) throw SingularityError("parallel transport: D^x vanishes along curve");
      const double Ddx = lerp_D(m, s, i, i + 1, wm, x1 - x0);
      double rnum = 0.0;
      for (std::size_t j = 0; j < m.N(); ++j)
        rnum += xm[j] * ((1 - wm) * m.D(s, j, i) * m.r(s, j, i) + wm * m.D(s, j, i + 1) * m.r(s, j, i + 1));
      // dg/g = -(D^{dx}/D^x - r^x dt); traversal direction enters through dx and dt signs.
      acc += -(Ddx / Dm - (rnum / Dm) * (t1 - t0)) * dir;
    }
  }
  return acc;
}

}  // namespace detail

// Transport of g1 along the polyline, one value per scenario.
inline std::vector<double> parallel_transport(const MarketModel& m, const SampledCurveInM& curve, double g1,
                                              std::size_t substeps = 4) {
  if (curve.empty()) throw ValidationError("parallel_transport: empty curve");
  for (const auto& p : curve) {
    m.check_x(p.x);
    if (p.t < m.grid().front() - 1e-12 || p.t > m.grid().back() + 1e-12)
      throw DomainError("parallel_transport: curve leaves the time grid");
  }
  std::vector<double> out(m.n_scenarios(), g1);
  for (std::size_t s = 0; s < m.n_scenarios(); ++s) {
    double lg = 0.0;
    for (std::size_t k = 0; k + 1 < curve.size(); ++k) lg += detail::transport_log_segment(m, s, curve[k], curve[k + 1], substeps);
    out[s] = g1 * std::exp(lg);
  }
  return out;
}

// Transport factor around a closed loop; 1 means trivial holonomy for this loop.
inline std::vector<double> holonomy_loop(const MarketModel& m, const SampledCurveInM& loop, std::size_t substeps = 4) {
  if (loop.size() < 1) throw ValidationError("holonomy_loop: empty loop");
  const auto &a = loop.front(), &b = loop.back();
  if (std::abs(a.t - b.t) > 1e-12 || (a.x - b.x).cwiseAbs().maxCoeff() > 1e-12)
    throw ValidationError("holonomy_loop: curve is not closed");
  return parallel_transport(m, loop, 1.0, substeps);
}

// Rectangle (x_a,t0) -> (x_b,t0) -> (x_b,t1) -> (x_a,t1) -> (x_a,t0).
inline SampledCurveInM rectangle_loop(const Eigen::VectorXd& xa, const Eigen::VectorXd& xb, double t0, double t1) {
  return {{xa, t0}, {xb, t0}, {xb, t1}, {xa, t1}, {xa, t0}};
}

}  // namespace curvlab
