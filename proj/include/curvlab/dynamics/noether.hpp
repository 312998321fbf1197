#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "curvlab/action/strategy.hpp"
#include "curvlab/dynamics/solutions.hpp"
#include "curvlab/geometry/market.hpp"

namespace curvlab {

// Expected first integral E_0[I(Q_t, DQ_t)] of one symmetry family, possibly
// vector valued, with its drift I_t - I_ref and the MC standard error of that drift.
struct FirstIntegral {
  std::string symmetry;  // rotation | nominal-translation | deflator-translation | deflator-dilation
  std::string label;
  bool defined = true;
  std::string note;
  std::vector<std::vector<double>> value;         // [t][component]
  std::vector<std::vector<double>> drift_stderr;  // [t][component]
  double max_drift = 0.0;
  double max_abs = 0.0;  // largest |E_0[I]| over time and components
  double max_z = 0.0;    // max |drift| / stderr where stderr > 0

  // Drift within k standard errors, or below the absolute floor when the
  // ensemble has no spread.
  bool conserved(double k = 3.0, double floor = 1e-10) const {
    if (!defined) return false;
    for (std::size_t i = 0; i < value.size(); ++i)
      for (std::size_t c = 0; c < value[i].size(); ++c) {
        const double d = std::abs(value[i][c] - value.front()[c]);
        if (d > k * drift_stderr[i][c] + floor * std::max(1.0, std::abs(value.front()[c]))) return false;
      }
    return true;
  }
};

struct FirstIntegralReport {
  std::vector<double> times;
  std::vector<FirstIntegral> integrals;

  const FirstIntegral& get(const std::string& label) const {
    for (const auto& f : integrals)
      if (f.label == label) return f;
    throw ValidationError("no first integral labelled '" + label + "'");
  }

  nlohmann::json to_json(double k = 3.0) const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : integrals) {
      nlohmann::json j{{"symmetry", f.symmetry}, {"label", f.label}, {"defined", f.defined}};
      if (!f.defined) {
        j["note"] = f.note;
      } else {
        j["initial"] = f.value.front();
        j["max_drift"] = f.max_drift;
        j["max_abs"] = f.max_abs;
        j["max_z"] = f.max_z;
        j["conserved"] = f.conserved(k);
      }
      arr.push_back(j);
    }
    return {{"t_first", times.empty() ? 0.0 : times.front()},
            {"t_last", times.empty() ? 0.0 : times.back()},
            {"points", times.size()},
            {"integrals", arr}};
  }
};

struct NoetherOptions {
  double t_min = 0.0;
  NelsonOptions nelson;        // for stochastic strategies and markets without closed-form drifts
  bool prefer_analytic = true;
};

namespace detail {

// Sampled state at (scenario, time): q, q' with q' = mean derivatives.
struct NoetherSample {
  Eigen::VectorXd x, D, r, Dx, DD;
  bool ok = true;
};

inline std::vector<std::pair<Eigen::Index, Eigen::Index>> antisymmetric_basis(Eigen::Index N) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> b;
  for (Eigen::Index a = 0; a < N; ++a)
    for (Eigen::Index c = a + 1; c < N; ++c) b.emplace_back(a, c);
  return b;
}

// xi_{ac} y = y_c e_a - y_a e_c for each basis element; only the two nonzero
// components are kept.
inline void apply_xi(const Eigen::VectorXd& y, Eigen::Index N, std::vector<double>& out) {
  for (auto [a, c] : antisymmetric_basis(N)) {
    out.push_back(y[c]);
    out.push_back(-y[a]);
  }
}

using Sampler = std::function<void(std::size_t s, std::size_t i, NoetherSample&)>;

inline FirstIntegralReport noether_core(const TimeGrid& grid, std::size_t ns, Eigen::Index N, const Sampler& sample,
                                        const NoetherOptions& o) {
  const std::size_t nt = grid.size();
  struct Kind {
    const char* symmetry;
    const char* label;
    bool needs_speed;
  };
  const Kind kinds[] = {{"rotation", "rotation-return", true},
                        {"rotation", "rotation-position", false},
                        {"nominal-translation", "nominal-translation", true},
                        {"deflator-translation", "deflator-translation", false},
                        {"deflator-dilation", "deflator-dilation", false}};
  constexpr std::size_t K = 5;
  auto integrands = [&](const NoetherSample& q, std::vector<double> (&out)[K], bool& stationary) {
    for (auto& v : out) v.clear();
    const double xD = q.x.dot(q.D);
    if (xD == 0.0) throw SingularityError("first integrals: x.D vanishes");
    const double speed = q.Dx.norm();
    stationary = !(speed > 0);
    const double R = q.x.dot(q.DD + q.r.cwiseProduct(q.D)) / xD;
    if (!stationary) {
      apply_xi(R * q.Dx / speed, N, out[0]);
      out[2].push_back(R * q.Dx.sum() / speed);
    }
    apply_xi(q.x / xD, N, out[1]);
    out[3].push_back(q.x.sum() / xD);
    out[4].push_back(xD / xD);
  };

  // First time at or after t_min where every scenario has its derivatives.
  NoetherSample q;
  std::vector<std::size_t> times;
  for (std::size_t i = 0; i < nt; ++i) {
    if (grid[i] < o.t_min - 1e-12) continue;
    bool ok = true;
    for (std::size_t s = 0; s < ns && ok; ++s) {
      sample(s, i, q);
      ok = q.ok;
    }
    if (ok) times.push_back(i);
  }
  FirstIntegralReport rep;
  for (std::size_t i : times) rep.times.push_back(grid[i]);
  for (const auto& k : kinds) rep.integrals.push_back(FirstIntegral{k.symmetry, k.label});
  if (times.empty()) {
    for (auto& f : rep.integrals) {
      f.defined = false;
      f.note = "no time with available mean derivatives";
    }
    return rep;
  }

  std::vector<double> buf[K];
  bool stationary = false;
  std::vector<std::vector<double>> ref[K];  // [scenario][component] at the reference time
  for (auto& r : ref) r.resize(ns);
  bool any_stationary = false;
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const std::size_t i = times[ti];
    std::vector<double> sum[K], sq[K];
    for (std::size_t s = 0; s < ns; ++s) {
      sample(s, i, q);
      integrands(q, buf, stationary);
      any_stationary = any_stationary || stationary;
      for (std::size_t k = 0; k < K; ++k) {
        if (ti == 0) ref[k][s] = buf[k];
        if (buf[k].size() != ref[k][s].size()) continue;  // stationary point: component missing
        if (sum[k].empty()) sum[k].assign(buf[k].size(), 0.0), sq[k].assign(buf[k].size(), 0.0);
        for (std::size_t c = 0; c < buf[k].size(); ++c) {
          sum[k][c] += buf[k][c];
          const double d = buf[k][c] - ref[k][s][c];
          sq[k][c] += d;  // accumulate drift sums separately below
        }
      }
    }
    // Second pass for the drift variance (needs the mean drift).
    std::vector<double> dvar[K];
    for (std::size_t k = 0; k < K; ++k) dvar[k].assign(sum[k].size(), 0.0);
    for (std::size_t s = 0; s < ns; ++s) {
      sample(s, i, q);
      integrands(q, buf, stationary);
      for (std::size_t k = 0; k < K; ++k) {
        if (buf[k].size() != ref[k][s].size() || buf[k].size() != sum[k].size()) continue;
        for (std::size_t c = 0; c < buf[k].size(); ++c) {
          const double d = buf[k][c] - ref[k][s][c] - sq[k][c] / ns;
          dvar[k][c] += d * d;
        }
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      auto& f = rep.integrals[k];
      std::vector<double> mean(sum[k].size()), se(sum[k].size());
      for (std::size_t c = 0; c < sum[k].size(); ++c) {
        mean[c] = sum[k][c] / ns;
        se[c] = ns > 1 ? std::sqrt(dvar[k][c] / (ns - 1) / ns) : 0.0;
      }
      f.value.push_back(std::move(mean));
      f.drift_stderr.push_back(std::move(se));
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    auto& f = rep.integrals[k];
    if (kinds[k].needs_speed && any_stationary) {
      f.defined = false;
      f.note = "undefined (stationary strategy: |Dx| = 0)";
      f.value.clear();
      f.drift_stderr.clear();
      continue;
    }
    for (std::size_t t = 0; t < f.value.size(); ++t)
      for (std::size_t c = 0; c < f.value[t].size(); ++c) {
        const double d = std::abs(f.value[t][c] - f.value[0][c]);
        f.max_drift = std::max(f.max_drift, d);
        f.max_abs = std::max(f.max_abs, std::abs(f.value[t][c]));
        if (f.drift_stderr[t][c] > 0) f.max_z = std::max(f.max_z, d / f.drift_stderr[t][c]);
      }
  }
  return rep;
}

}  // namespace detail

// First integrals along a solution: Dx and DD are the analytic derivatives of
// the deterministic core (the perturbations are time-constant).
inline FirstIntegralReport noether_integrals(const DynamicsSolution& sol, const NoetherOptions& o = {}) {
  const auto sampler = [&](std::size_t s, std::size_t i, detail::NoetherSample& q) {
    q.x = sol.x(s, i);
    q.D = sol.D(s, i);
    q.r = sol.r(s, i);
    q.Dx = sol.dx_core[i];
    q.DD = sol.dD_core[i];
    q.ok = true;
  };
  return detail::noether_core(sol.grid, sol.n_scenarios(), static_cast<Eigen::Index>(sol.N()), sampler, o);
}

// First integrals of a strategy in a market: DD_j = D_j Dlog D_j, Dx by
// central differences (deterministic strategy) or Nelson estimates.
inline FirstIntegralReport noether_integrals(const MarketModel& m, const Strategy& st, const NoetherOptions& o = {}) {
  const std::size_t off = strategy_offset(st, m);
  const Field ld = market_log_drifts(m, o.nelson, o.prefer_analytic);
  const std::size_t nt = st.grid().size(), N = m.N();
  const bool det = st.deterministic();
  std::optional<Field> dx;
  if (!det) dx = nelson_derivatives(st.x, o.nelson).mean;
  const auto& g = st.grid();
  const auto sampler = [&](std::size_t s, std::size_t i, detail::NoetherSample& q) {
    q.x = st.at(s, i);
    q.D = m.D_vec(s, off + i);
    q.r = m.r_vec(s, off + i);
    q.DD.resize(static_cast<Eigen::Index>(N));
    q.Dx.resize(static_cast<Eigen::Index>(N));
    q.ok = true;
    const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 == nt ? i : i + 1;
    for (std::size_t j = 0; j < N; ++j) {
      const double l = ld(s, j, off + i);
      q.DD[j] = q.D[j] * l;
      q.Dx[j] = det ? (st.x(0, j, hi) - st.x(0, j, lo)) / (g[hi] - g[lo]) : (*dx)(st.n_scenarios() == 1 ? 0 : s, j, i);
      if (std::isnan(l) || std::isnan(q.Dx[j])) q.ok = false;
    }
  };
  return detail::noether_core(g, m.n_scenarios(), static_cast<Eigen::Index>(N), sampler, o);
}

// Multiplies every deflator by the state price deflator. With beta D^j a
// martingale deflated by its own short rate, the result satisfies
// Dlog D + r = 0 in the closed form.
inline MarketModel deflate_market(const MarketModel& m, const StatePriceDeflator& beta) {
  const std::size_t ns = m.n_scenarios(), nt = m.grid().size(), N = m.N();
  if (beta.beta.n_scenarios() != ns || beta.beta.n_times() != nt)
    throw DimensionError("deflate_market: state price deflator shape does not match the market");
  std::vector<Gauge> gs;
  for (std::size_t j = 0; j < N; ++j) {
    std::vector<double> d(ns * nt);
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t i = 0; i < nt; ++i) d[s * nt + i] = m.D(s, j, i) * beta.beta(s, i);
    gs.push_back(Gauge{PathEnsemble(m.grid(), ns, 1, std::move(d), m.gauges()[j].deflator.seed()),
                       m.gauges()[j].term_structure, m.gauges()[j].label});
  }
  std::optional<Field> ld;
  if (m.log_drift() && beta.log_drift) {
    std::vector<double> v(ns * N * nt);
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t j = 0; j < N; ++j)
        for (std::size_t i = 0; i < nt; ++i) v[(s * N + j) * nt + i] = (*m.log_drift())(s, j, i) + (*beta.log_drift)(s, 0, i);
    ld = Field(m.grid(), ns, N, std::move(v));
  }
  return MarketModel(std::move(gs), std::move(ld));
}

}  // namespace curvlab
