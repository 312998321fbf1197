#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "curvlab/geometry/market.hpp"
#include "curvlab/marketsim/model.hpp"
#include "curvlab/paths/simulate.hpp"

namespace curvlab {

enum class TermStructureMethod { Auto, ClosedFormGaussian, NestedMC };

inline std::string to_string(TermStructureMethod m) {
  switch (m) {
    case TermStructureMethod::ClosedFormGaussian: return "closed-form-gaussian";
    case TermStructureMethod::NestedMC: return "nested-mc";
    default: return "auto";
  }
}

inline TermStructureMethod parse_term_structure_method(const std::string& s) {
  if (s == "auto") return TermStructureMethod::Auto;
  if (s == "closed-form-gaussian") return TermStructureMethod::ClosedFormGaussian;
  if (s == "nested-mc") return TermStructureMethod::NestedMC;
  throw InputError("unknown term structure method '" + s + "' (auto | closed-form-gaussian | nested-mc)");
}

struct BuildOptions {
  TermStructureMethod method = TermStructureMethod::Auto;
  std::size_t n_inner = 256;   // nested MC inner paths (antithetic pairs)
  double inner_dt = 0.01;      // nested MC inner step
  std::vector<double> maturities{0.0, 0.25, 0.5, 1, 2, 3, 5, 7, 10, 15, 20, 30};  // nested MC nodes
  GaugeCheck check;
  bool analytic_drift = true;  // attach the closed-form Dlog S^j
};

struct CalibrationResult {
  PathEnsemble C1, C2;
  StatePriceDeflator beta;
};

struct SimulatedMarket {
  ItoModel model;
  PathEnsemble W;  // K factors
  PathEnsemble S;  // N prices = deflators
  PathEnsemble r;  // N short rates
  MarketModel market;
  std::optional<CalibrationResult> calibration;
  TermStructureMethod method = TermStructureMethod::ClosedFormGaussian;
};

struct BondEstimate {
  double mean = 0.0;
  double stderr = 0.0;
};

// P(t, t+tau) = E[exp(-int r)] by inner simulation from the current rate r_t.
// Antithetic pairs share one normal draw; the stderr uses pair averages.
inline std::vector<BondEstimate> nested_mc_bond_prices(const ItoModel& m, std::size_t j, double r_t,
                                                       const std::vector<double>& taus, std::size_t n_inner,
                                                       double inner_dt, std::mt19937_64& rng) {
  if (n_inner < 2) throw ValidationError("nested MC needs n_inner >= 2");
  if (!(inner_dt > 0)) throw ValidationError("nested MC needs inner_dt > 0");
  for (std::size_t k = 0; k < taus.size(); ++k)
    if (taus[k] < 0 || (k > 0 && taus[k] < taus[k - 1])) throw ValidationError("nested MC maturities must be sorted and >= 0");
  const auto& as = m.assets[j];
  const double vol = std::sqrt(squared_norm(as.b));
  const std::size_t pairs = n_inner / 2, nm = taus.size();
  std::vector<double> sum(nm, 0.0), sum2(nm, 0.0);
  std::normal_distribution<double> z(0.0, 1.0);
  const double T = taus.empty() ? 0.0 : taus.back();
  for (std::size_t p = 0; p < pairs; ++p) {
    double r[2] = {r_t, r_t}, I[2] = {0.0, 0.0}, t = 0.0;
    std::size_t next = 0;
    std::vector<double> pay(nm, 0.0);
    auto record = [&] {
      while (next < nm && taus[next] <= t + 1e-12) {
        pay[next] = 0.5 * (std::exp(-I[0]) + std::exp(-I[1]));
        ++next;
      }
    };
    record();
    while (next < nm) {
      const double h = std::min(inner_dt, T - t);
      const double dw = std::sqrt(h) * z(rng);
      for (int a = 0; a < 2; ++a) {
        const double rn = r[a] + (as.a - m.kappa * r[a]) * h + (a == 0 ? vol : -vol) * dw;
        I[a] += 0.5 * (r[a] + rn) * h;
        r[a] = rn;
      }
      t += h;
      record();
    }
    for (std::size_t k = 0; k < nm; ++k) {
      sum[k] += pay[k];
      sum2[k] += pay[k] * pay[k];
    }
  }
  std::vector<BondEstimate> out(nm);
  const double n = static_cast<double>(pairs);
  for (std::size_t k = 0; k < nm; ++k) {
    const double mean = sum[k] / n;
    const double var = pairs > 1 ? std::max(0.0, (sum2[k] - n * mean * mean) / (n - 1)) : 0.0;
    out[k] = {mean, std::sqrt(var / n)};
  }
  return out;
}

// Closed-form bond price for the constant-coefficient Gaussian rate.
inline double gaussian_bond_price(const ItoModel& m, std::size_t j, double r_t, double tau) {
  const auto& as = m.assets[j];
  if (m.kappa == 0.0) return ExpPolyCurve::exp_poly({0.0, -r_t, -0.5 * as.a, squared_norm(as.b) / 6.0})->value(tau);
  return VasicekCurve(r_t, as.a, squared_norm(as.b), m.kappa).value(tau);
}

// Closed-form Dlog S^j = alpha_j - |sigma_j|^2/2 + sigma_j.W/(2t); NaN at t = 0
// where the Brownian mean derivative is singular.
inline Field analytic_log_drift(const ItoModel& m, const PathEnsemble& W) {
  const std::size_t ns = W.n_scenarios(), nt = W.n_times(), N = m.N(), K = m.K;
  Field f = Field::unavailable(W.grid(), ns, N);
  parallel_for(ns, [&](std::size_t s) {
    for (std::size_t j = 0; j < N; ++j) {
      const auto& a = m.assets[j];
      const double base = a.alpha - 0.5 * squared_norm(a.sigma);
      for (std::size_t i = 0; i < nt; ++i) {
        const double t = W.grid()[i];
        if (t <= 0.0) {
          if (squared_norm(a.sigma) == 0.0) f.at(s, j, i) = base;
          continue;
        }
        double sw = 0.0;
        for (std::size_t k = 0; k < K; ++k) sw += a.sigma[k] * W(s, k, i);
        f.at(s, j, i) = base + sw / (2 * t);
      }
    }
  });
  return f;
}

// C1, C2 and beta = exp(-int C1 - sigma.W - int b.W) for a calibrated model.
// The sigma.W term is the primitive whose mean derivative is sigma.W/(2t); with
// it beta S^j = S0_j exp(-int r^j) pathwise.
inline CalibrationResult pricing_kernel(const ItoModel& m, const PathEnsemble& W) {
  if (!m.calibration) throw ValidationError("pricing_kernel: model is not calibrated");
  const auto& c = *m.calibration;
  const auto& sg = m.assets.front().sigma;
  const auto& b = m.assets.front().b;
  const std::size_t ns = W.n_scenarios(), nt = W.n_times(), K = m.K;
  const auto& g = W.grid();
  std::vector<double> c1(ns * nt), c2(ns * nt), beta(ns * nt);
  Field drift = Field::unavailable(g, ns, 1);
  const bool zero_c2 = c.c2 == Calibration::C2Mode::Zero;
  parallel_for(ns, [&](std::size_t s) {
    double intbw = 0.0, prev_bw = 0.0;
    for (std::size_t i = 0; i < nt; ++i) {
      const double t = g[i];
      double sw = 0.0, bw = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        sw += sg[k] * W(s, k, i);
        bw += b[k] * W(s, k, i);
      }
      if (i > 0) intbw += 0.5 * (prev_bw + bw) * (t - g[i - 1]);
      prev_bw = bw;
      const std::size_t o = s * nt + i;
      c1[o] = c.c0 + c.c1 * t;
      c2[o] = zero_c2 ? 0.0 : (t > 0 ? sw / (2 * t) : 0.0) + bw;
      const double logb = -(c.c0 * t + 0.5 * c.c1 * t * t) - (zero_c2 ? 0.0 : sw + intbw);
      beta[o] = std::exp(logb);
      if (t > 0 || zero_c2 || squared_norm(sg) == 0.0) drift.at(s, 0, i) = -(c1[o] + c2[o]);
    }
  });
  return {PathEnsemble(g, ns, 1, std::move(c1), W.seed()), PathEnsemble(g, ns, 1, std::move(c2), W.seed()),
          StatePriceDeflator(PathEnsemble(g, ns, 1, std::move(beta), W.seed()), std::move(drift))};
}

// Prices by exact log stepping (constant coefficients), rates by Euler-Maruyama,
// term structures in closed form or by nested Monte Carlo.
inline SimulatedMarket build_market(const ItoModel& model, const TimeGrid& grid, std::size_t n_scenarios,
                                    std::uint64_t seed, const BuildOptions& o = {}) {
  model.validate();
  const std::size_t N = model.N(), K = model.K, ns = n_scenarios, nt = grid.size();
  SimulatedMarket out;
  out.model = model;
  out.W = simulate_brownian(grid, ns, K, seed);
  const auto& W = out.W;
  std::vector<double> S(ns * N * nt), r(ns * N * nt);
  parallel_for(ns, [&](std::size_t s) {
    for (std::size_t j = 0; j < N; ++j) {
      const auto& a = model.assets[j];
      const double mu = a.alpha - 0.5 * squared_norm(a.sigma);
      double logS = std::log(a.S0), rate = a.r0;
      const std::size_t base = (s * N + j) * nt;
      S[base] = a.S0;
      r[base] = rate;
      for (std::size_t i = 1; i < nt; ++i) {
        const double h = grid[i] - grid[i - 1];
        double sdw = 0.0, bdw = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double dw = W(s, k, i) - W(s, k, i - 1);
          sdw += a.sigma[k] * dw;
          bdw += a.b[k] * dw;
        }
        logS += mu * h + sdw;
        rate += (a.a - model.kappa * rate) * h + bdw;
        S[base + i] = std::exp(logS);
        r[base + i] = rate;
        if (!std::isfinite(S[base + i]) || !std::isfinite(rate)) {
          std::ostringstream os;
          os << "build_market: non-finite price or rate for asset " << j << " at scenario " << s << ", t=" << grid[i];
          throw SimulationError(os.str());
        }
      }
    }
  });
  out.S = PathEnsemble(grid, ns, N, std::move(S), seed);
  out.r = PathEnsemble(grid, ns, N, std::move(r), seed);

  out.method = o.method == TermStructureMethod::NestedMC ? TermStructureMethod::NestedMC
                                                         : TermStructureMethod::ClosedFormGaussian;
  std::vector<Gauge> gauges;
  for (std::size_t j = 0; j < N; ++j) {
    const auto& a = model.assets[j];
    const std::string label = a.label.empty() ? "asset" + std::to_string(j) : a.label;
    PathEnsemble rj = out.r.component(j);
    TermStructurePtr ts;
    if (out.method == TermStructureMethod::ClosedFormGaussian) {
      ts = std::make_shared<AffineShortRateTermStructure>(std::move(rj), a.a, squared_norm(a.b), model.kappa);
    } else {
      const std::size_t nm = o.maturities.size();
      std::vector<double> P(ns * nt * nm);
      parallel_for(ns, [&](std::size_t s) {
        for (std::size_t i = 0; i < nt; ++i) {
          auto rng = stream_rng(seed, s, 1 + i * N + j);
          const auto est = nested_mc_bond_prices(model, j, rj(s, i), o.maturities, o.n_inner, o.inner_dt, rng);
          for (std::size_t k = 0; k < nm; ++k) P[(s * nt + i) * nm + k] = est[k].mean;
        }
      });
      ts = std::make_shared<SampledTermStructure>(grid, ns, o.maturities, std::move(P));
    }
    gauges.push_back(make_gauge(out.S.component(j), ts, label, o.check));
  }
  std::optional<Field> drift;
  if (o.analytic_drift) drift = analytic_log_drift(model, W);
  out.market = MarketModel(std::move(gauges), std::move(drift));
  if (model.calibration) out.calibration = pricing_kernel(model, W);
  return out;
}

// Ret = Dlog D^x next to -Dlog beta - r^x; the gap vanishes on NFLVR markets.
struct TotalReturn {
  Field ret, rhs, gap;
};

inline TotalReturn instantaneous_total_return(const MarketModel& m, const Eigen::VectorXd& x,
                                              const StatePriceDeflator* beta = nullptr,
                                              const NelsonOptions& opt = {}, bool prefer_analytic = true) {
  m.check_x(x);
  const Field drift = market_log_drifts(m, opt, prefer_analytic);
  std::optional<Field> bd;
  if (beta) bd = deflator_log_drift(*beta, opt, prefer_analytic);
  const std::size_t ns = m.n_scenarios(), nt = m.grid().size();
  TotalReturn tr{Field::unavailable(m.grid(), ns, 1), Field::unavailable(m.grid(), ns, 1),
                 Field::unavailable(m.grid(), ns, 1)};
  parallel_for(ns, [&](std::size_t s) {
    for (std::size_t i = 0; i < nt; ++i) {
      const double Dx = m.nonzero_Dx(s, i, x);
      double mx = 0.0;
      for (std::size_t j = 0; j < m.N(); ++j) mx += x[j] * m.D(s, j, i) * drift(s, j, i);
      tr.ret.at(s, 0, i) = mx / Dx;
      if (bd) {
        tr.rhs.at(s, 0, i) = -(*bd)(s, 0, i) - m.rx(s, i, x);
        tr.gap.at(s, 0, i) = tr.ret(s, 0, i) - tr.rhs(s, 0, i);
      }
    }
  });
  return tr;
}

// E_0[beta_t S^j_t P^j(t, T)] against S^j_0 P^j(0, T) at the requested grid times.
struct MartingaleCheck {
  std::size_t asset = 0;
  double t = 0.0;
  double mean = 0.0, target = 0.0, stderr = 0.0;
  double z() const { return stderr > 0 ? (mean - target) / stderr : (mean == target ? 0.0 : INFINITY); }
};

inline std::vector<MartingaleCheck> deflated_bond_martingale(const SimulatedMarket& sm, double T,
                                                             const std::vector<double>& times) {
  if (!sm.calibration) throw ValidationError("martingale check needs a calibrated market");
  const auto& m = sm.market;
  const auto& beta = sm.calibration->beta.beta;
  const std::size_t ns = m.n_scenarios();
  std::vector<MartingaleCheck> out;
  for (std::size_t j = 0; j < m.N(); ++j) {
    const auto& ts = *m.gauges()[j].term_structure;
    const double target = m.D(0, j, 0) * ts.discount(0, 0, T);
    for (double t : times) {
      if (t > T) throw ValidationError("martingale check time beyond maturity");
      const std::size_t i = m.grid().index_of(t);
      double sum = 0, sum2 = 0;
      for (std::size_t s = 0; s < ns; ++s) {
        const double v = beta(s, i) * m.D(s, j, i) * ts.discount(s, i, T - m.grid()[i]);
        sum += v;
        sum2 += v * v;
      }
      const double mean = sum / ns;
      const double var = ns > 1 ? std::max(0.0, (sum2 - ns * mean * mean) / (ns - 1)) : 0.0;
      out.push_back({j, m.grid()[i], mean, target, std::sqrt(var / ns)});
    }
  }
  return out;
}

}  // namespace curvlab
