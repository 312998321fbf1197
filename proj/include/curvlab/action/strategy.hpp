#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "curvlab/geometry/market.hpp"
#include "curvlab/io.hpp"
#include "curvlab/paths/nelson.hpp"

namespace curvlab {

// Nominal vector x(t) per scenario on a contiguous run of the market grid.
// A single-scenario strategy is deterministic and is broadcast over the market.
struct Strategy {
  PathEnsemble x;
  bool closed = false;
  bool arc_length = false;
  bool backward = false;  // traversed from the last grid time to the first

  Strategy() = default;
  explicit Strategy(PathEnsemble nominals, bool is_closed = false, bool arc = false)
      : x(std::move(nominals)), closed(is_closed), arc_length(arc) {
    if (x.n_times() < 2) throw ValidationError("strategy needs at least two time points");
    if (closed)
      for (std::size_t s = 0; s < x.n_scenarios(); ++s)
        for (std::size_t j = 0; j < x.n_dims(); ++j)
          if (std::abs(x(s, j, 0) - x(s, j, x.n_times() - 1)) > 1e-12)
            throw ValidationError("closed strategy does not return to its start (scenario " + std::to_string(s) + ")");
  }

  std::size_t N() const { return x.n_dims(); }
  std::size_t n_scenarios() const { return x.n_scenarios(); }
  const TimeGrid& grid() const { return x.grid(); }

  Eigen::VectorXd at(std::size_t s, std::size_t i) const {
    Eigen::VectorXd v(N());
    const std::size_t ss = x.n_scenarios() == 1 ? 0 : s;
    for (std::size_t j = 0; j < N(); ++j) v[j] = x(ss, j, i);
    return v;
  }

  bool deterministic() const {
    for (std::size_t s = 1; s < x.n_scenarios(); ++s)
      for (std::size_t j = 0; j < N(); ++j)
        for (std::size_t i = 0; i < x.n_times(); ++i)
          if (x(s, j, i) != x(0, j, i)) return false;
    return true;
  }

  // The inverse curve: same points traversed from the last time back to the first.
  Strategy reversed() const {
    Strategy r = *this;
    r.backward = !backward;
    return r;
  }

  static Strategy deterministic_path(const TimeGrid& grid, std::size_t N,
                                     const std::function<Eigen::VectorXd(double)>& f, bool closed = false) {
    const std::size_t nt = grid.size();
    std::vector<double> v(N * nt);
    for (std::size_t i = 0; i < nt; ++i) {
      const Eigen::VectorXd xi = f(grid[i]);
      if (static_cast<std::size_t>(xi.size()) != N) throw DimensionError("strategy function returned wrong length");
      for (std::size_t j = 0; j < N; ++j) v[j * nt + i] = xi[j];
    }
    return Strategy(PathEnsemble(grid, 1, N, std::move(v)), closed);
  }

  static Strategy constant(const TimeGrid& grid, const Eigen::VectorXd& x0) {
    return deterministic_path(grid, x0.size(), [&](double) { return x0; }, false);
  }
};

// Index of the strategy's first time in the market grid; every later point must
// coincide with the following market points.
inline std::size_t strategy_offset(const Strategy& s, const MarketModel& m) {
  m.check_x(Eigen::VectorXd::Zero(s.N()));
  if (s.n_scenarios() != 1 && s.n_scenarios() != m.n_scenarios())
    throw DimensionError("strategy scenario count must be 1 or match the market");
  const auto& g = s.grid();
  const auto& mg = m.grid();
  std::size_t off = 0;
  try {
    off = mg.index_of(g[0]);
  } catch (const Error&) {
    throw DimensionError("strategy grid does not lie on the market grid");
  }
  if (off + g.size() > mg.size()) throw DimensionError("strategy grid runs past the market grid");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::abs(g[i] - mg[off + i]) > 1e-9 * std::max(1.0, std::abs(g[i])))
      throw DimensionError("strategy grid does not match the market grid");
  return off;
}

struct SelfFinancingReport {
  std::vector<double> defect;  // max_t |Dx.D - d[x,D]/dt| per scenario
  std::vector<bool> ok;
  bool all() const {
    for (bool b : ok)
      if (!b) return false;
    return true;
  }
};

// Deterministic strategies: central differences of x and a zero bracket.
// Stochastic ones: Nelson mean derivative of x and central bracket increments.
inline SelfFinancingReport is_self_financing(const Strategy& st, const MarketModel& m, double tol,
                                             const NelsonOptions& nelson = {}) {
  const std::size_t off = strategy_offset(st, m);
  const std::size_t ns = m.n_scenarios(), nt = st.grid().size(), N = st.N();
  const auto& g = st.grid();
  const bool det = st.deterministic();
  std::optional<Field> dx;
  if (!det) dx = nelson_derivatives(st.x, nelson).mean;
  SelfFinancingReport rep{std::vector<double>(ns, 0.0), std::vector<bool>(ns, true)};
  for (std::size_t s = 0; s < ns; ++s) {
    const std::size_t ss = st.n_scenarios() == 1 ? 0 : s;
    double worst = 0.0;
    for (std::size_t i = 0; i < nt; ++i) {
      const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 == nt ? i : i + 1;
      const double h = g[hi] - g[lo];
      double lhs = 0.0, bracket = 0.0;
      for (std::size_t j = 0; j < N; ++j) {
        double dxj;
        if (det) {
          dxj = (st.x(0, j, hi) - st.x(0, j, lo)) / h;
        } else {
          dxj = (*dx)(ss, j, i);
          if (std::isnan(dxj)) continue;
        }
        lhs += dxj * m.D(s, j, off + i);
        if (!det)
          for (std::size_t k = lo; k < hi; ++k)
            bracket += (st.x(ss, j, k + 1) - st.x(ss, j, k)) * (m.D(s, j, off + k + 1) - m.D(s, j, off + k));
      }
      worst = std::max(worst, std::abs(lhs - bracket / h));
    }
    rep.defect[s] = worst;
    rep.ok[s] = worst <= tol;
  }
  return rep;
}

struct ArcLengthResult {
  Strategy strategy;  // on tau in [0, length], unit speed
  double length = 0.0;
};

// Polygonal arc length of a deterministic strategy, resampled uniformly in
// arc length with the same number of points.
inline ArcLengthResult arc_length_reparameterize(const Strategy& st) {
  if (!st.deterministic()) throw PreconditionError("arc-length reparameterization needs a deterministic strategy");
  const std::size_t nt = st.grid().size(), N = st.N();
  std::vector<double> cum{0.0};
  std::vector<Eigen::VectorXd> pts{st.at(0, 0)};
  for (std::size_t i = 1; i < nt; ++i) {
    const Eigen::VectorXd p = st.at(0, i);
    const double d = (p - pts.back()).norm();
    if (d == 0.0) continue;  // stationary stretch collapses
    cum.push_back(cum.back() + d);
    pts.push_back(p);
  }
  const double L = cum.back();
  if (!(L > 0)) throw PreconditionError("arc length undefined: strategy is stationary");
  const TimeGrid tau = TimeGrid::uniform(0.0, L, L / static_cast<double>(nt - 1));
  std::vector<double> v(N * tau.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double u = std::min(tau[i], L);
    while (k + 2 < cum.size() && cum[k + 1] < u) ++k;
    const double w = (u - cum[k]) / (cum[k + 1] - cum[k]);
    const Eigen::VectorXd p = (1 - w) * pts[k] + w * pts[k + 1];
    for (std::size_t j = 0; j < N; ++j) v[j * tau.size() + i] = p[j];
  }
  return {Strategy(PathEnsemble(tau, 1, N, std::move(v)), st.closed, true), L};
}

inline void write_strategy_csv(std::ostream& os, const Strategy& st) {
  os << "scenario,t,j,x\n";
  for (std::size_t s = 0; s < st.n_scenarios(); ++s)
    for (std::size_t i = 0; i < st.grid().size(); ++i)
      for (std::size_t j = 0; j < st.N(); ++j)
        os << s << ',' << io::num(st.grid()[i]) << ',' << j << ',' << io::num(st.x(s, j, i)) << '\n';
}

inline Strategy read_strategy_csv(std::istream& is, bool closed = false) {
  std::string line;
  if (!std::getline(is, line) || io::split(line) != std::vector<std::string>{"scenario", "t", "j", "x"})
    throw InputError("strategy csv: expected header scenario,t,j,x");
  std::map<std::tuple<long long, double, long long>, double> rows;
  std::set<double> times;
  long long ns = 0, nd = 0;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (io::trim(line).empty()) continue;
    const auto f = io::split(line);
    const std::string where = "strategy csv line " + std::to_string(lineno);
    if (f.size() != 4) throw InputError(where + ": expected 4 fields");
    const long long s = io::to_int(f[0], where), j = io::to_int(f[2], where);
    const double t = io::to_double(f[1], where), v = io::to_double(f[3], where);
    if (s < 0 || j < 0) throw InputError(where + ": negative index");
    if (!rows.emplace(std::tuple{s, t, j}, v).second) throw InputError(where + ": duplicate row");
    times.insert(t);
    ns = std::max(ns, s + 1);
    nd = std::max(nd, j + 1);
  }
  if (rows.empty()) throw InputError("strategy csv: no data rows");
  TimeGrid grid(std::vector<double>(times.begin(), times.end()));
  const std::size_t nt = grid.size();
  if (rows.size() != static_cast<std::size_t>(ns * nd) * nt)
    throw InputError("strategy csv: ragged data (every scenario/asset needs every time)");
  std::vector<double> v(rows.size());
  for (const auto& [k, val] : rows) {
    const auto [s, t, j] = k;
    v[(static_cast<std::size_t>(s) * nd + j) * nt + grid.index_of(t, 0.0)] = val;
  }
  return Strategy(PathEnsemble(std::move(grid), ns, nd, std::move(v)), closed);
}

}  // namespace curvlab
