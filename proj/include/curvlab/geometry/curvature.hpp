#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "curvlab/geometry/market.hpp"
#include "curvlab/io.hpp"

namespace curvlab {

struct CurvatureOptions {
  NelsonOptions nelson;
  bool prefer_analytic = true;  // use the market's closed-form log drifts when present
  double fd_step = 1e-6;        // relative step of the finite-difference cross-check in x
};

// rho_j(x,t) multiplies g dx_j ^ dt in the curvature; fd_check holds -d/dx_j [Dlog D^x + r^x].
struct CurvatureField {
  Eigen::VectorXd x;
  Field rho;
  Field fd_check;
};

namespace detail {

// mu^x = sum_j x_j D^j (m_j + r_j) / D^x, i.e. Dlog D^x + r^x by the chain rule.
inline double portfolio_mu(const MarketModel& m, const Field& drift, std::size_t s, std::size_t i,
                           const Eigen::VectorXd& x) {
  const double Dx = m.nonzero_Dx(s, i, x);
  double v = 0.0;
  for (std::size_t j = 0; j < m.N(); ++j) v += x[j] * m.D(s, j, i) * (drift(s, j, i) + m.r(s, j, i));
  return v / Dx;
}

}  // namespace detail

inline CurvatureField curvature(const MarketModel& m, const Field& drift, const Eigen::VectorXd& x,
                                double fd_step = 1e-6) {
  m.check_x(x);
  require_same_shape(m.gauges().front().deflator, drift, "curvature drift");
  const std::size_t ns = m.n_scenarios(), nt = m.grid().size(), N = m.N();
  CurvatureField c{x, Field::unavailable(m.grid(), ns, N), Field::unavailable(m.grid(), ns, N)};
  const double h = fd_step * (1.0 + x.norm());
  parallel_for(ns, [&](std::size_t s) {
    for (std::size_t i = 0; i < nt; ++i) {
      bool ok = true;
      for (std::size_t j = 0; j < N; ++j) ok = ok && !std::isnan(drift(s, j, i));
      if (!ok) continue;
      const double Dx = m.nonzero_Dx(s, i, x);
      const double mux = detail::portfolio_mu(m, drift, s, i, x);
      for (std::size_t j = 0; j < N; ++j) {
        const double muj = drift(s, j, i) + m.r(s, j, i);
        c.rho.at(s, j, i) = N == 1 ? 0.0 : (m.D(s, j, i) / Dx) * (mux - muj);
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        c.fd_check.at(s, j, i) =
            -(detail::portfolio_mu(m, drift, s, i, xp) - detail::portfolio_mu(m, drift, s, i, xm)) / (2 * h);
      }
    }
  });
  return c;
}

inline CurvatureField curvature(const MarketModel& m, const Eigen::VectorXd& x, const CurvatureOptions& o = {}) {
  return curvature(m, market_log_drifts(m, o.nelson, o.prefer_analytic), x, o.fd_step);
}

// Cross-check independent of the chain rule: Nelson estimates of Dlog D^{x +- h e_j}
// on the portfolio value paths themselves, differenced in x, at grid index i.
inline std::vector<std::vector<double>> curvature_fd_nelson(const MarketModel& m, const Eigen::VectorXd& x,
                                                            std::size_t i, double h, const NelsonOptions& o = {}) {
  m.check_x(x);
  const std::size_t ns = m.n_scenarios(), nt = m.grid().size(), N = m.N();
  auto mu_of = [&](const Eigen::VectorXd& y) {
    std::vector<double> v(ns * nt);
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t k = 0; k < nt; ++k) {
        const double d = m.nonzero_Dx(s, k, y);
        if (!(d > 0)) throw DomainError("curvature_fd_nelson needs positive portfolio values");
        v[s * nt + k] = std::log(d);
      }
    const auto p = nelson_at(PathEnsemble(m.grid(), ns, 1, std::move(v)), 0, i, o);
    std::vector<double> mu(ns);
    for (std::size_t s = 0; s < ns; ++s) mu[s] = p.mean[s] + m.rx(s, i, y);
    return mu;
  };
  std::vector<std::vector<double>> out(N, std::vector<double>(ns));
  for (std::size_t j = 0; j < N; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const auto a = mu_of(xp), b = mu_of(xm);
    for (std::size_t s = 0; s < ns; ++s) out[j][s] = -(a[s] - b[s]) / (2 * h);
  }
  return out;
}

// Log value density and current. J_j = r^j int_0^{x_j} u D^j/(c_j + u D^j) du with
// c_j = sum_{k != j} x_k D^k, so that div_x J = r^x.
inline double log_value_current(const MarketModel& m, std::size_t s, std::size_t i, const Eigen::VectorXd& x,
                                std::size_t j) {
  const double d = m.D(s, j, i);
  double c = 0.0;
  for (std::size_t k = 0; k < m.N(); ++k)
    if (k != j) c += x[k] * m.D(s, k, i);
  const double X = x[j];
  if (d == 0.0 || X == 0.0) return 0.0;
  if (c == 0.0) return m.r(s, j, i) * X;
  const double ratio = X * d / c;
  if (!(1.0 + ratio > 0)) throw SingularityError("log value current: D^x vanishes between 0 and x_j");
  return m.r(s, j, i) * (X - (c / d) * std::log1p(ratio));
}

struct ValueFlow {
  PathEnsemble rho_beta;    // log(beta D^x)
  Field J;                  // N components
  Field div_fd;             // finite-difference divergence of J
  PathEnsemble div_exact;   // r^x
};

inline ValueFlow value_flow(const MarketModel& m, const StatePriceDeflator& b, const Eigen::VectorXd& x,
                            double fd_step = 1e-5) {
  m.check_x(x);
  require_same_shape(m.gauges().front().deflator, b.beta, "value_flow beta");
  const std::size_t ns = m.n_scenarios(), nt = m.grid().size(), N = m.N();
  std::vector<double> rho(ns * nt), rx(ns * nt);
  ValueFlow vf{{}, Field::unavailable(m.grid(), ns, N), Field::unavailable(m.grid(), ns, 1), {}};
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < nt; ++i) {
      const double Dx = m.nonzero_Dx(s, i, x);
      if (!(Dx > 0)) throw DomainError("value flow needs D^x > 0 for the log density");
      rho[s * nt + i] = std::log(b.beta(s, i) * Dx);
      rx[s * nt + i] = m.rx(s, i, x);
      double div = 0.0;
      for (std::size_t j = 0; j < N; ++j) {
        vf.J.at(s, j, i) = log_value_current(m, s, i, x, j);
        const double h = fd_step * (1.0 + std::abs(x[j]));
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        div += (log_value_current(m, s, i, xp, j) - log_value_current(m, s, i, xm, j)) / (2 * h);
      }
      vf.div_fd.at(s, 0, i) = div;
    }
  vf.rho_beta = PathEnsemble(m.grid(), ns, 1, std::move(rho));
  vf.div_exact = PathEnsemble(m.grid(), ns, 1, std::move(rx));
  return vf;
}

// D rho^beta + div_x J with D rho^beta = Dlog beta + Dlog D^x; NaN where drifts are unavailable.
inline Field continuity_residual(const MarketModel& m, const Field& drift, const Field& beta_drift,
                                 const Eigen::VectorXd& x, double fd_step = 1e-5) {
  m.check_x(x);
  const std::size_t ns = m.n_scenarios(), nt = m.grid().size(), N = m.N();
  Field out = Field::unavailable(m.grid(), ns, 1);
  parallel_for(ns, [&](std::size_t s) {
    for (std::size_t i = 0; i < nt; ++i) {
      const double Dx = m.nonzero_Dx(s, i, x);
      double mx = 0.0, div = 0.0;
      for (std::size_t j = 0; j < N; ++j) {
        mx += x[j] * m.D(s, j, i) * drift(s, j, i);
        const double h = fd_step * (1.0 + std::abs(x[j]));
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        div += (log_value_current(m, s, i, xp, j) - log_value_current(m, s, i, xm, j)) / (2 * h);
      }
      out.at(s, 0, i) = beta_drift(s, 0, i) + mx / Dx + div;
    }
  });
  return out;
}

inline Field continuity_residual(const MarketModel& m, const StatePriceDeflator& b, const Eigen::VectorXd& x,
                                 const CurvatureOptions& o = {}) {
  return continuity_residual(m, market_log_drifts(m, o.nelson, o.prefer_analytic),
                             deflator_log_drift(b, o.nelson, o.prefer_analytic), x);
}

// Portfolios sampled for aggregate statistics: unit vectors, pairwise midpoints,
// and random simplex points.
inline std::vector<Eigen::VectorXd> sample_portfolios(std::size_t N, std::size_t n_random = 16, std::uint64_t seed = 7) {
  std::vector<Eigen::VectorXd> xs;
  for (std::size_t j = 0; j < N; ++j) xs.push_back(Eigen::VectorXd::Unit(N, j));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) xs.push_back(0.5 * (Eigen::VectorXd::Unit(N, i) + Eigen::VectorXd::Unit(N, j)));
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> e(1.0);
  for (std::size_t k = 0; k < n_random && N > 1; ++k) {
    Eigen::VectorXd x(N);
    for (std::size_t j = 0; j < N; ++j) x[j] = e(rng);
    xs.push_back(x / x.sum());
  }
  return xs;
}

struct NflvrOptions {
  CurvatureOptions curvature;
  double t_min = 0.1;            // Nelson-type drifts are singular near t = 0
  double stderr_multiple = 5.0;
  double abs_floor = 1e-10;      // numerical floor for exactly-zero curvature
  std::size_t n_random_portfolios = 16;
  std::uint64_t portfolio_seed = 7;
  std::vector<Eigen::VectorXd> portfolios;  // overrides the default sample
};

struct NflvrReport {
  double curvature_rms = 0.0;    // RMS over (t, x, j) of the ensemble mean of rho_j
  double pathwise_rms = 0.0;     // RMS over (scenario, t, x, j) of rho_j
  double stderr = 0.0;           // RMS over (t, x, j) of sd(rho_j)/sqrt(n)
  double threshold = 0.0;
  double beta_residual = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_beta = 0;
  std::string verdict;
  std::size_t n_points = 0;
  bool empirical = false;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["curvature_rms"] = curvature_rms;
    j["pathwise_rms"] = pathwise_rms;
    j["stderr"] = stderr;
    j["threshold"] = threshold;
    j["verdict"] = verdict;
    j["beta_residual"] = std::isnan(beta_residual) ? nlohmann::json(nullptr) : nlohmann::json(beta_residual);
    j["samples"] = n_points;
    if (empirical) j["mode"] = "empirical (single path)";
    return j;
  }
};

inline NflvrReport nflvr_report(const MarketModel& m, const std::vector<StatePriceDeflator>& betas = {},
                                const NflvrOptions& o = {}) {
  const Field drift = market_log_drifts(m, o.curvature.nelson, o.curvature.prefer_analytic);
  const auto xs = o.portfolios.empty() ? sample_portfolios(m.N(), o.n_random_portfolios, o.portfolio_seed) : o.portfolios;
  const std::size_t ns = m.n_scenarios(), nt = m.grid().size(), N = m.N();
  double sum_mean2 = 0, sum_var = 0, sum_path2 = 0;
  std::size_t cnt = 0;
  for (const auto& x : xs) {
    const auto c = curvature(m, drift, x, o.curvature.fd_step);
    for (std::size_t i = 0; i < nt; ++i) {
      if (m.grid()[i] < o.t_min || !c.rho.available_at(i)) continue;
      for (std::size_t j = 0; j < N; ++j) {
        double mean = 0, m2 = 0;
        for (std::size_t s = 0; s < ns; ++s) {
          const double v = c.rho(s, j, i);
          mean += v;
          m2 += v * v;
        }
        mean /= ns;
        const double var = ns > 1 ? std::max(0.0, (m2 - ns * mean * mean) / (ns - 1)) : 0.0;
        sum_mean2 += mean * mean;
        sum_var += var / ns;
        sum_path2 += m2 / ns;
        ++cnt;
      }
    }
  }
  if (cnt == 0) throw ValidationError("nflvr_report: no grid times with available drifts after t_min");
  NflvrReport r;
  r.n_points = cnt;
  r.curvature_rms = std::sqrt(sum_mean2 / cnt);
  r.pathwise_rms = std::sqrt(sum_path2 / cnt);
  r.stderr = std::sqrt(sum_var / cnt);
  r.threshold = o.stderr_multiple * r.stderr + o.abs_floor;
  r.verdict = r.curvature_rms <= r.threshold ? "consistent-with-NFLVR" : "arbitrage-detected";

  for (std::size_t b = 0; b < betas.size(); ++b) {
    const Field bd = deflator_log_drift(betas[b], o.curvature.nelson, o.curvature.prefer_analytic);
    double acc = 0;
    std::size_t k = 0;
    for (const auto& x : xs) {
      const Field res = continuity_residual(m, drift, bd, x);
      for (std::size_t i = 0; i < nt; ++i) {
        if (m.grid()[i] < o.t_min || !res.available_at(i)) continue;
        double mean = 0;
        for (std::size_t s = 0; s < ns; ++s) mean += res(s, 0, i);
        mean /= ns;
        acc += mean * mean;
        ++k;
      }
    }
    const double v = k ? std::sqrt(acc / k) : std::numeric_limits<double>::quiet_NaN();
    if (std::isnan(r.beta_residual) || v < r.beta_residual) {
      r.beta_residual = v;
      r.best_beta = b;
    }
  }
  return r;
}

inline void write_curvature_csv(std::ostream& os, const CurvatureField& c, bool header = true) {
  if (header) os << "scenario,t,j,rho\n";
  for (std::size_t s = 0; s < c.rho.n_scenarios(); ++s)
    for (std::size_t i = 0; i < c.rho.n_times(); ++i)
      for (std::size_t j = 0; j < c.rho.n_dims(); ++j)
        if (c.rho.available(s, j, i))
          os << s << ',' << io::num(c.rho.grid()[i]) << ',' << j << ',' << io::num(c.rho(s, j, i)) << '\n';
}

}  // namespace curvlab
