#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include "curvlab/dynamics/lagrangian.hpp"
#include "curvlab/io.hpp"
#include "curvlab/parallel.hpp"
#include "curvlab/paths/ensemble.hpp"

namespace curvlab {

// Which list of side conditions the zero-mean perturbations must satisfy.
enum class ConditionSet { arbitrage, no_arbitrage };

struct PerturbationSpec {
  ConditionSet conditions = ConditionSet::arbitrage;
  double sd_x = 0.0, sd_D = 0.0, sd_r = 0.0;  // per-direction standard deviations
  bool any() const { return sd_x != 0.0 || sd_D != 0.0 || sd_r != 0.0; }
};

struct Perturbations {
  std::vector<Eigen::VectorXd> dx, dD, dr;  // one time-constant vector per scenario
  Eigen::MatrixXd basis_x, basis_D;          // orthonormal columns spanning the sampled subspaces
};

namespace detail {

// Orthonormal basis of span(vs)^perp in R^N.
inline Eigen::MatrixXd orthogonal_complement(const std::vector<Eigen::VectorXd>& vs, Eigen::Index N) {
  std::vector<Eigen::VectorXd> kept;
  for (const auto& v : vs) {
    Eigen::VectorXd u = v;
    for (const auto& k : kept) u -= u.dot(k) * k;
    if (u.norm() > 1e-12 * std::max(1.0, v.norm())) kept.push_back(u.normalized());
  }
  std::vector<Eigen::VectorXd> out;
  for (Eigen::Index j = 0; j < N && static_cast<Eigen::Index>(kept.size() + out.size()) < N; ++j) {
    Eigen::VectorXd u = Eigen::VectorXd::Unit(N, j);
    for (const auto& k : kept) u -= u.dot(k) * k;
    for (const auto& k : out) u -= u.dot(k) * k;
    if (u.norm() > 1e-8) out.push_back(u.normalized());
  }
  Eigen::MatrixXd B(N, static_cast<Eigen::Index>(out.size()));
  for (std::size_t j = 0; j < out.size(); ++j) B.col(static_cast<Eigen::Index>(j)) = out[j];
  return B;
}

}  // namespace detail

// Time-constant perturbations (so their mean derivative vanishes) with
// antithetic pairs (so ensemble means vanish exactly). Inner-product reading of
// the product conditions.
//  arbitrage:    dx _|_ g, dD _|_ x0, dD _|_ dx, dr in span(1)
//  no-arbitrage: dx _|_ D0, 1 and dx = 0 unless x0.D0 = 0; dD _|_ x0, dD _|_ dx
// Here D0 is the deflator level of the deterministic core (g for the arbitrage family).
inline Perturbations sample_perturbations(const PerturbationSpec& spec, const Eigen::VectorXd& x0,
                                          const Eigen::VectorXd& D0, std::size_t n_scenarios, std::uint64_t seed) {
  const Eigen::Index N = x0.size();
  if (D0.size() != N) throw DimensionError("sample_perturbations: x0 and D0 lengths differ");
  if (spec.sd_x < 0 || spec.sd_D < 0 || spec.sd_r < 0) throw ValidationError("perturbation sd must be >= 0");
  Perturbations p;
  if (spec.conditions == ConditionSet::arbitrage) {
    // dx along the part of x0 orthogonal to g; dD in span(x0, g)^perp, which is
    // orthogonal to x0 and to that direction. When x0 is parallel to g the
    // complement is split between the two blocks instead.
    const Eigen::MatrixXd W = detail::orthogonal_complement({x0, D0}, N);
    const Eigen::VectorXd u = D0.squaredNorm() > 0 ? Eigen::VectorXd(x0 - (x0.dot(D0) / D0.squaredNorm()) * D0) : x0;
    if (u.norm() > 1e-12 * std::max(1.0, x0.norm())) {
      p.basis_x = u.normalized();
      p.basis_D = W;
    } else {
      p.basis_x = W.leftCols(std::min<Eigen::Index>(1, W.cols()));
      p.basis_D = W.rightCols(W.cols() - p.basis_x.cols());
    }
  } else {
    const bool dx_allowed = std::abs(x0.dot(D0)) <= 1e-12 * std::max(1.0, x0.norm() * D0.norm());
    const Eigen::MatrixXd Wx = detail::orthogonal_complement({D0, Eigen::VectorXd::Ones(N)}, N);
    if (dx_allowed && Wx.cols() > 0) {
      p.basis_x = Wx.leftCols(1);
      p.basis_D = detail::orthogonal_complement({x0, p.basis_x.col(0)}, N);
    } else {
      p.basis_x = Eigen::MatrixXd(N, 0);
      p.basis_D = detail::orthogonal_complement({x0}, N);
    }
  }
  if (spec.sd_x > 0 && p.basis_x.cols() == 0)
    throw PreconditionError("perturbations: no direction satisfies the nominal conditions (set sd_x = 0)");
  if (spec.sd_D > 0 && p.basis_D.cols() == 0)
    throw PreconditionError("perturbations: no direction satisfies the deflator conditions (set sd_D = 0)");
  if (spec.sd_r > 0 && spec.conditions == ConditionSet::no_arbitrage)
    throw PreconditionError("perturbations: the no-arbitrage family has no short-rate perturbation");

  p.dx.assign(n_scenarios, Eigen::VectorXd::Zero(N));
  p.dD.assign(n_scenarios, Eigen::VectorXd::Zero(N));
  p.dr.assign(n_scenarios, Eigen::VectorXd::Zero(N));
  if (!spec.any()) return p;
  for (std::size_t k = 0; k + 1 < n_scenarios; k += 2) {
    auto rng = stream_rng(seed, k / 2, 7);
    std::normal_distribution<double> z;
    Eigen::VectorXd ex = Eigen::VectorXd::Zero(N), eD = Eigen::VectorXd::Zero(N);
    for (Eigen::Index c = 0; c < p.basis_x.cols(); ++c) ex += spec.sd_x * z(rng) * p.basis_x.col(c);
    for (Eigen::Index c = 0; c < p.basis_D.cols(); ++c) eD += spec.sd_D * z(rng) * p.basis_D.col(c);
    const Eigen::VectorXd er = Eigen::VectorXd::Constant(N, spec.sd_r * z(rng));
    p.dx[k] = ex, p.dx[k + 1] = -ex;
    p.dD[k] = eD, p.dD[k + 1] = -eD;
    p.dr[k] = er, p.dr[k + 1] = -er;
  }
  return p;  // an odd last scenario keeps the zero perturbation
}

enum class SolutionFamily { arbitrage, no_arbitrage };

// Deterministic core on a grid plus time-constant perturbations per scenario.
struct DynamicsSolution {
  SolutionFamily family = SolutionFamily::arbitrage;
  TimeGrid grid;
  Eigen::VectorXd x0, g;
  std::vector<Eigen::VectorXd> x_core, D_core, r_core;     // per grid point
  std::vector<Eigen::VectorXd> dx_core, dD_core;           // analytic time derivatives
  std::vector<double> w;                                   // x0.(r D) along the core (arbitrage family)
  Perturbations perturbations;

  std::size_t N() const { return static_cast<std::size_t>(x0.size()); }
  std::size_t n_scenarios() const { return perturbations.dx.size(); }

  Eigen::VectorXd x(std::size_t s, std::size_t i) const { return x_core[i] + perturbations.dx[s]; }
  Eigen::VectorXd D(std::size_t s, std::size_t i) const { return D_core[i] + perturbations.dD[s]; }
  Eigen::VectorXd r(std::size_t s, std::size_t i) const { return r_core[i] + perturbations.dr[s]; }

  // block: 0 = x, 1 = D, 2 = r
  PathEnsemble ensemble(int block) const {
    const std::size_t ns = n_scenarios(), nt = grid.size(), n = N();
    std::vector<double> v(ns * n * nt);
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t i = 0; i < nt; ++i) {
        const Eigen::VectorXd q = block == 0 ? x(s, i) : block == 1 ? D(s, i) : r(s, i);
        for (std::size_t j = 0; j < n; ++j) v[(s * n + j) * nt + i] = q[static_cast<Eigen::Index>(j)];
      }
    return PathEnsemble(grid, ns, n, std::move(v));
  }

  ELResidual core_residual() const { return euler_lagrange_residual(grid, x_core, D_core, r_core); }
};

// max_t |x'.D - d[x,D]/dt| over scenarios, central differences and central
// bracket increments.
inline double self_financing_defect(const DynamicsSolution& sol) {
  const std::size_t nt = sol.grid.size();
  double worst = 0.0;
  for (std::size_t s = 0; s < sol.n_scenarios(); ++s)
    for (std::size_t i = 0; i < nt; ++i) {
      const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 == nt ? i : i + 1;
      const double h = sol.grid[hi] - sol.grid[lo];
      const Eigen::VectorXd dx = sol.x(s, hi) - sol.x(s, lo);
      double bracket = 0.0;
      for (std::size_t k = lo; k < hi; ++k) bracket += (sol.x(s, k + 1) - sol.x(s, k)).dot(sol.D(s, k + 1) - sol.D(s, k));
      worst = std::max(worst, std::abs(dx.dot(sol.D(s, i)) / h - bracket / h));
    }
  return worst;
}

// Short-rate equation of the arbitrage family with p = x0.D0' and
// m_t = z_t = p e^{-t}:
//   (1 - m) w' + (3 + 2/z - z) w = m + z - m^2,   w = x0.(r D).
// Written as w' = a(t) w + b(t).
struct ArbitrageRateEquation {
  double p;

  double m(double t) const { return p * std::exp(-t); }
  double a(double t) const {
    const double e = std::exp(-t);
    return (p * (3 - e * p) + 2 / e) / (p * (p * e - 1));
  }
  double b(double t) const {
    const double mt = m(t);
    return std::exp(-t) * (p - p / (mt - 1));
  }
  // Elementary antiderivative of a, used as an oracle for the quadrature.
  double antiderivative(double t) const { return -2 * std::exp(t) / p - t - 4 * std::log(std::abs(std::exp(t) - p)); }

  // The denominator 1 - m vanishes at t* = log p when p > 0.
  void check_interval(double t0, double t1) const {
    if (p == 0.0 || !std::isfinite(p)) throw PreconditionError("arbitrage dynamics: x0.D0' must be nonzero");
    if (p > 0) {
      const double ts = std::log(p);
      if (ts >= t0 - 1e-12 && ts <= t1 + 1e-12) {
        std::ostringstream os;
        os << "arbitrage dynamics: denominator x0.(e^{-t} g) - 1 vanishes at t=" << ts;
        throw SingularityError(os.str());
      }
    }
  }
};

// Closed form w_t = e^{A(t)} [e^{-A(0)} w_0 + int_0^t e^{-A(v)} b(v) dv] with
// A(t) = int_1^t a. The lower limit 1 cancels between the two factors, so the
// exponent is accumulated from 0. Both integrals use adaptive Gauss-Kronrod.
struct ArbitrageRateQuadrature {
  std::vector<double> A;  // int_0^{t_i} a
  std::vector<double> w;
};

inline ArbitrageRateQuadrature arbitrage_rate_closed_form(double p, double w0, const TimeGrid& grid, double tol = 1e-12) {
  using boost::math::quadrature::gauss_kronrod;
  const ArbitrageRateEquation eq{p};
  if (std::abs(grid[0]) > 1e-15) throw ValidationError("arbitrage dynamics: grid must start at t = 0");
  eq.check_interval(0.0, grid.back());
  const std::size_t nt = grid.size();
  ArbitrageRateQuadrature q{std::vector<double>(nt, 0.0), std::vector<double>(nt, w0)};
  auto a = [&](double u) { return eq.a(u); };
  double I = 0.0;
  for (std::size_t i = 0; i + 1 < nt; ++i) {
    const double t0 = grid[i], t1 = grid[i + 1], A0 = q.A[i];
    auto integrand = [&](double v) {
      // The inner interval is at most one step; deeper recursion only chases
      // rounding noise in the error estimate near v = t0.
      const double Av = A0 + (v > t0 ? gauss_kronrod<double, 31>::integrate(a, t0, v, 2, tol) : 0.0);
      return std::exp(-Av) * eq.b(v);
    };
    q.A[i + 1] = A0 + gauss_kronrod<double, 31>::integrate(a, t0, t1, 8, tol);
    I += gauss_kronrod<double, 31>::integrate(integrand, t0, t1, 8, tol);
    q.w[i + 1] = std::exp(q.A[i + 1]) * (w0 + I);
  }
  return q;
}

// Independent oracle: adaptive Dormand-Prince integration of the linear ODE.
inline std::vector<double> arbitrage_rate_ode(double p, double w0, const TimeGrid& grid, double tol = 1e-12) {
  namespace odeint = boost::numeric::odeint;
  const ArbitrageRateEquation eq{p};
  eq.check_interval(grid[0], grid.back());
  std::vector<double> out;
  out.reserve(grid.size());
  std::vector<double> times = grid.times();
  double w = w0;
  auto rhs = [&](const double& y, double& dy, double t) {
    const double m = eq.m(t), z = m;
    dy = (m + z - m * m - (3 + 2 / z - z) * y) / (1 - m);
  };
  odeint::integrate_times(odeint::make_dense_output(tol, tol, odeint::runge_kutta_dopri5<double>()), rhs, w,
                          times.begin(), times.end(), 1e-3, [&](const double& y, double) { out.push_back(y); });
  return out;
}

struct ArbitrageOptions {
  double eq0_tol = 1e-10;      // |x0.D0' + x0.D0| relative tolerance
  double quadrature_tol = 1e-12;
};

// x_t = x0 + dx, D_t = e^{-t} g + dD, r_t = (w_t / m_t) 1 + dr with w from the
// closed form. The initial data must satisfy x0.D0' = -x0.D0.
inline DynamicsSolution solve_arbitrage_dynamics(const Eigen::VectorXd& x0, const Eigen::VectorXd& D0,
                                                 const Eigen::VectorXd& D0p, const Eigen::VectorXd& r0,
                                                 const TimeGrid& grid, const PerturbationSpec& spec = {},
                                                 std::size_t n_scenarios = 1, std::uint64_t seed = 1,
                                                 const ArbitrageOptions& o = {}) {
  const Eigen::Index N = x0.size();
  if (N < 1) throw ValidationError("arbitrage dynamics: empty nominal vector");
  if (D0.size() != N || D0p.size() != N || r0.size() != N) throw DimensionError("arbitrage dynamics: length mismatch");
  if (spec.conditions != ConditionSet::arbitrage) throw ValidationError("arbitrage dynamics need the arbitrage condition set");
  const double p = x0.dot(D0p), q = x0.dot(D0);
  if (std::abs(p + q) > o.eq0_tol * std::max({1.0, std::abs(p), std::abs(q)})) {
    std::ostringstream os;
    os << "inconsistent initial data: the closed form needs x0.D0' = -x0.D0 (got " << p << " vs " << -q << ")";
    throw PreconditionError(os.str());
  }
  DynamicsSolution sol;
  sol.family = SolutionFamily::arbitrage;
  sol.grid = grid;
  sol.x0 = x0;
  sol.g = g_operator(x0, D0, D0p);
  const double w0 = x0.dot(r0.cwiseProduct(sol.g));
  const auto rate = arbitrage_rate_closed_form(p, w0, grid, o.quadrature_tol);
  sol.w = rate.w;
  const ArbitrageRateEquation eq{p};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double e = std::exp(-grid[i]);
    sol.x_core.push_back(x0);
    sol.dx_core.push_back(Eigen::VectorXd::Zero(N));
    sol.D_core.push_back(e * sol.g);
    sol.dD_core.push_back(-e * sol.g);
    sol.r_core.push_back(Eigen::VectorXd::Constant(N, rate.w[i] / eq.m(grid[i])));
  }
  sol.perturbations = sample_perturbations(spec, x0, sol.g, n_scenarios, seed);
  return sol;
}

// x_t = x0 + dx, D_t = D0 + dD; the core short rate vanishes because
// D' + r D = 0 with constant D.
inline DynamicsSolution solve_noarb_dynamics(const Eigen::VectorXd& x0, const Eigen::VectorXd& D0, const TimeGrid& grid,
                                             PerturbationSpec spec = {ConditionSet::no_arbitrage},
                                             std::size_t n_scenarios = 1, std::uint64_t seed = 1) {
  const Eigen::Index N = x0.size();
  if (N < 1 || D0.size() != N) throw DimensionError("no-arbitrage dynamics: length mismatch");
  if (spec.conditions != ConditionSet::no_arbitrage)
    throw ValidationError("no-arbitrage dynamics need the no-arbitrage condition set");
  DynamicsSolution sol;
  sol.family = SolutionFamily::no_arbitrage;
  sol.grid = grid;
  sol.x0 = x0;
  sol.g = D0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    sol.x_core.push_back(x0);
    sol.dx_core.push_back(Eigen::VectorXd::Zero(N));
    sol.D_core.push_back(D0);
    sol.dD_core.push_back(Eigen::VectorXd::Zero(N));
    sol.r_core.push_back(Eigen::VectorXd::Zero(N));
  }
  sol.perturbations = sample_perturbations(spec, x0, D0, n_scenarios, seed);
  return sol;
}

// E[D_t^x] - D_0^x per time for one portfolio, with the MC standard error.
struct MartingaleSeries {
  std::vector<double> gap, stderr_;
  double max_z() const {
    double z = 0.0;
    for (std::size_t i = 0; i < gap.size(); ++i)
      z = std::max(z, stderr_[i] > 0 ? std::abs(gap[i]) / stderr_[i] : (gap[i] == 0.0 ? 0.0 : HUGE_VAL));
    return z;
  }
  double max_abs_gap() const {
    double m = 0.0;
    for (double g : gap) m = std::max(m, std::abs(g));
    return m;
  }
};

inline MartingaleSeries martingale_pricing_check(const DynamicsSolution& sol, const Eigen::VectorXd& x) {
  if (x.size() != sol.x0.size()) throw DimensionError("martingale check: portfolio length mismatch");
  const std::size_t ns = sol.n_scenarios(), nt = sol.grid.size();
  MartingaleSeries out{std::vector<double>(nt), std::vector<double>(nt)};
  for (std::size_t i = 0; i < nt; ++i) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      const double v = x.dot(sol.D(s, i));
      sum += v;
      sq += v * v;
    }
    const double mean = sum / ns;
    const double var = ns > 1 ? std::max(0.0, (sq - ns * mean * mean) / (ns - 1)) : 0.0;
    out.gap[i] = mean - x.dot(sol.D_core[0]);
    out.stderr_[i] = std::sqrt(var / ns);
  }
  return out;
}

inline void write_solution_csv(std::ostream& os, const DynamicsSolution& sol) {
  os << "scenario,t,block,j,value\n";
  static const char* names[] = {"x", "D", "r"};
  for (std::size_t s = 0; s < sol.n_scenarios(); ++s)
    for (std::size_t i = 0; i < sol.grid.size(); ++i)
      for (int b = 0; b < 3; ++b) {
        const Eigen::VectorXd q = b == 0 ? sol.x(s, i) : b == 1 ? sol.D(s, i) : sol.r(s, i);
        for (Eigen::Index j = 0; j < q.size(); ++j)
          os << s << ',' << io::num(sol.grid[i]) << ',' << names[b] << ',' << j << ',' << io::num(q[j]) << '\n';
      }
}

}  // namespace curvlab
