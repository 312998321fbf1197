// Acceptance suite at desk scale: one PASS/FAIL line per criterion.
// Usage: acceptance [--only 1,4,...] [--xfail 10,...]
// Exit status is 0 when every failing criterion is listed in --xfail and every
// listed one does fail, so a known gap stays visible without hiding regressions.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "curvlab/action.hpp"
#include "curvlab/dynamics.hpp"
#include "curvlab/gauges.hpp"
#include "curvlab/geometry.hpp"
#include "curvlab/marketsim.hpp"
#include "curvlab/paths.hpp"

using namespace curvlab;
using Eigen::VectorXd;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(v.size());
  std::size_t k = 0;
  for (double e : v) x[k++] = e;
  return x;
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

ItoModel three_assets() {
  ItoModel m;
  m.K = 2;
  m.assets = {{0.05, {0.2, 0.05}, 0.001, {0.004, 0.001}, 1.0, 0.03, "eq"},
              {0.03, {0.2, 0.05}, 0.000, {0.004, 0.001}, 2.0, 0.04, "fx"},
              {0.08, {0.2, 0.05}, 0.002, {0.004, 0.001}, 0.5, 0.035, "cmd"}};
  return m;
}

constexpr double kDt = 1e-3;
TimeGrid unit_grid(double dt = kDt) { return TimeGrid::uniform(0.0, 1.0, dt); }

// Calibrated desk-scale market shared by criteria 4, 11 and 12.
const SimulatedMarket& calibrated_market() {
  static const SimulatedMarket sm = build_market(calibrate_arbitrage_free(three_assets(), {0.03, 0.0}), unit_grid(), 10000, 2024);
  return sm;
}

NelsonOptions desk_nelson(const TimeGrid& g) {
  NelsonOptions o;
  o.window = 100;  // h = 0.1 at dt = 1e-3
  for (double t : {0.2, 0.5, 0.8}) o.times.push_back(g.index_of(t));
  return o;
}

// ------------------------------------------------------------------ 1
Result nelson_brownian() {
  const auto g = TimeGrid::uniform(0.0, 1.2, kDt);
  const auto W = simulate_brownian(g, 50000, 1, 101);
  NelsonOptions o;
  o.window = 200;  // h = 0.2; both conditional increments are linear in W, so a wider h adds no bias
  std::string d;
  bool ok = true;
  for (double t : {0.25, 0.5, 1.0}) {
    const std::size_t i = g.index_of(t);
    const auto p = nelson_at(W, 0, i, o);
    double se = 0;
    for (std::size_t s = 0; s < W.n_scenarios(); ++s) {
      const double e = p.mean[s] - W(s, 0, i) / (2 * t);
      se += e * e;
    }
    const double rmse = std::sqrt(se / W.n_scenarios());
    ok = ok && rmse <= 0.05;
    d += "t=" + fmt(t) + " rmse=" + fmt(rmse) + " ";
  }
  return {ok, d + "(<= 0.05, 5e4 paths, window 0.2, Silverman bandwidth)"};
}

// ------------------------------------------------------------------ 2
Result ito_stratonovich() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto g = TimeGrid::uniform(0.0, 1.0, 0.005);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto W = simulate_brownian(g, 8, 2, 500 + k);
    const double a0 = U(rng), a1 = U(rng), a2 = U(rng), a3 = U(rng), b1 = U(rng), b2 = U(rng), b3 = U(rng), b4 = U(rng);
    std::vector<double> x, y;
    for (std::size_t s = 0; s < 8; ++s)
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double w1 = W(s, 0, i), w2 = W(s, 1, i), t = g[i];
        x.push_back(a0 + a1 * w1 + a2 * std::sin(w2) + a3 * t);
        y.push_back(b1 * w1 + b2 * w2 + b3 * t * t + b4 * w1 * w2);
      }
    const PathEnsemble X(g, 8, 1, std::move(x)), Y(g, 8, 1, std::move(y));
    const auto I = ito_integral(X, Y), S = stratonovich_integral(X, Y), Q = quadratic_covariation(X, Y);
    for (std::size_t s = 0; s < 8; ++s)
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double scale = 1.0 + std::abs(S(s, i)) + std::abs(I(s, i)) + std::abs(Q(s, i));
        worst = std::max(worst, std::abs(S(s, i) - I(s, i) - 0.5 * Q(s, i)) / scale);
      }
  }
  // int W dW against (W_T^2 - T)/2 on nested grids.
  const auto fine = simulate_brownian(TimeGrid::uniform(0.0, 1.0, kDt / 2), 4000, 1, 33);
  auto endpoint_mse = [](const PathEnsemble& W) {
    const auto I = ito_integral(W, W);
    const std::size_t last = W.n_times() - 1;
    double m = 0;
    for (std::size_t s = 0; s < W.n_scenarios(); ++s) {
      const double e = I(s, last) - 0.5 * (W(s, last) * W(s, last) - 1.0);
      m += e * e;
    }
    return m / W.n_scenarios();
  };
  const double mse_c = endpoint_mse(fine.subsample(2)), mse_f = endpoint_mse(fine);
  const double rms = std::sqrt(mse_c), ratio = mse_c / mse_f;
  const bool ok = worst <= 1e-13 && rms <= 5e-2 && ratio >= 1.6 && ratio <= 2.4;
  return {ok, "bridge max rel=" + fmt(worst) + "; int WdW rms=" + fmt(rms) + " at dt=1e-3, mean-square ratio under dt/2=" +
                  fmt(ratio) + " (rms ratio " + fmt(std::sqrt(ratio)) + ")"};
}

// ------------------------------------------------------------------ 3
Result gauge_algebra() {
  using CI = CashflowIntensity;
  bool ladder = true;
  for (int m = -2; m <= 2; ++m)
    for (int n = -2; n <= 2; ++n) ladder = ladder && convolve(CI::ladder_element(m), CI::ladder_element(n)).same_as(CI::ladder_element(m + n), 0.0);

  const auto grid = TimeGrid::uniform(0.0, 1.0, 0.25);
  auto curve_gauge = [](std::shared_ptr<const Curve> c, const TimeGrid& g) {
    return make_gauge(PathEnsemble::constant(g, 1, 1, 1.0), CurveTermStructure::constant(g, 1, std::move(c)));
  };
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double round_trip = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const double r = 0.005 + 0.06 * U(rng), a = 0.0005 + 0.01 * U(rng);
    const auto g = curve_gauge(ExpPolyCurve::exp_poly({0.0, -r, -a}), grid);
    const auto back = apply_intensity(apply_intensity(g, CI::ladder_element(1)), CI::ladder_element(-1));
    for (double tau : {0.25, 1.0, 3.0, 10.0, 25.0})
      round_trip = std::max(round_trip, std::abs(back.term_structure->discount(0, 2, tau) - g.term_structure->discount(0, 2, tau)));
    round_trip = std::max(round_trip, std::abs(back.deflator(0, 2) - g.deflator(0, 2)));
  }

  const auto mix = std::make_shared<ExpPolyCurve>(std::vector<ExpPolyCurve::Term>{{0.4, {0.0, -0.02}}, {0.6, {0.0, -0.07}}});
  const auto g = curve_gauge(mix, TimeGrid::uniform(0.0, 0.25, 0.25));
  double comp = 0.0;
  for (int m = -2; m <= 2; ++m)
    for (int n = -2; n <= 2; ++n) {
      const auto two = apply_intensity(apply_intensity(g, CI::ladder_element(m)), CI::ladder_element(n));
      const auto one = apply_intensity(g, convolve(CI::ladder_element(m), CI::ladder_element(n)));
      comp = std::max(comp, std::abs(two.deflator(0, 1) - one.deflator(0, 1)) / std::max(1.0, std::abs(one.deflator(0, 1))));
      for (double tau : {0.5, 4.0, 12.0})
        comp = std::max(comp, std::abs(two.term_structure->discount(0, 1, tau) - one.term_structure->discount(0, 1, tau)));
    }
  const bool ok = ladder && round_trip <= 1e-6 && comp <= 1e-9;
  return {ok, std::string("ladder [m]*[n]=[m+n] ") + (ladder ? "exact" : "BROKEN") + "; perpetuity/short-rate round trip " +
                  fmt(round_trip) + " (<= 1e-6); composition " + fmt(comp) + " (<= 1e-9)"};
}

// ------------------------------------------------------------------ 4
Result zero_curvature_calibration() {
  const auto& sm = calibrated_market();
  NflvrOptions o;
  o.curvature.prefer_analytic = false;
  o.curvature.nelson = desk_nelson(sm.market.grid());
  const auto rep = nflvr_report(sm.market, {}, o);
  double zmax = 0.0;
  for (const auto& c : deflated_bond_martingale(sm, 2.0, {0.25, 0.5, 1.0})) zmax = std::max(zmax, std::abs(c.z()));
  const bool ok = rep.curvature_rms <= 5 * rep.stderr + o.abs_floor && zmax <= 3.0;
  return {ok, "curvature rms=" + fmt(rep.curvature_rms) + " vs 5 stderr + floor=" + fmt(rep.threshold) +
                  " (Nelson drifts, 1e4 paths); beta S P martingale max |z|=" + fmt(zmax) + " (<= 3)"};
}

// ------------------------------------------------------------------ 5
Result arbitrage_detection() {
  const auto cal = calibrate_arbitrage_free(three_assets(), {0.03, 0.0});
  const auto grid = unit_grid();
  const std::size_t ns = 2000;
  NflvrOptions o;
  o.n_random_portfolios = 4;
  const auto base = build_market(cal, grid, ns, 7);
  const auto v0 = nflvr_report(base.market, {}, o).verdict;
  const auto v1 = nflvr_report(build_market(inject_arbitrage(cal, 0, 0.05), grid, ns, 7).market, {}, o).verdict;

  const VectorXd x = vec({1, 1, 0});
  const std::size_t i = grid.index_of(0.5);
  std::vector<double> ds{0.01, 0.02, 0.04}, rho;
  for (double d : ds) {
    const auto sm = build_market(inject_arbitrage(cal, 0, d), grid, ns, 7);
    const auto c = curvature(sm.market, x);
    double m = 0;
    for (std::size_t s = 0; s < ns; ++s) m += c.rho(s, 1, i);
    rho.push_back(m / ns);
  }
  double analytic = 0;
  for (std::size_t s = 0; s < ns; ++s) {
    const double Dx = base.market.Dx(s, i, x);
    analytic += x[0] * base.market.D(s, 0, i) * base.market.D(s, 1, i) / (Dx * Dx);
  }
  analytic /= ns;
  const double md = (ds[0] + ds[1] + ds[2]) / 3, mr = (rho[0] + rho[1] + rho[2]) / 3;
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < 3; ++k) sxy += (ds[k] - md) * (rho[k] - mr), sxx += (ds[k] - md) * (ds[k] - md);
  const double slope = sxy / sxx, rel = std::abs(slope - analytic) / std::abs(analytic);
  const bool ok = v0 == "consistent-with-NFLVR" && v1 == "arbitrage-detected" && rel <= 0.15;
  return {ok, "verdict " + v0 + " -> " + v1 + " at delta=0.05; slope=" + fmt(slope) + " analytic=" + fmt(analytic) +
                  " rel.err=" + fmt(rel) + " (<= 0.15)"};
}

// ------------------------------------------------------------------ 6
MarketModel two_rate_market(double dt) {
  return make_deterministic_market(unit_grid(dt), {{{0.0, -0.03}, {0.03}, "a"}, {{std::log(2.0), -0.01}, {0.01}, "b"}});
}

VectorXd rebalanced(double t) {
  const double c = 0.5;
  return vec({1.0 + c * 2.0 * (1 - std::exp(-0.01 * t)) / 0.01, 1.0 - c * (1 - std::exp(-0.03 * t)) / 0.03});
}

std::pair<VectorXd, VectorXd> perp_basis(const VectorXd& k) {
  Eigen::Matrix3d q = Eigen::Matrix3d::Identity();
  q.col(0) = k.normalized();
  const Eigen::Matrix3d Q = Eigen::HouseholderQR<Eigen::Matrix3d>(q).householderQ();
  return {Q.col(1), Q.col(2)};
}

Result action_formula() {
  std::vector<double> gaps;
  for (double dt : {kDt, kDt / 2}) {
    const auto m = two_rate_market(dt);
    const auto st = Strategy::deterministic_path(m.grid(), 2, [](double t) { return rebalanced(t); });
    gaps.push_back(arbitrage_action(st, m, StatePriceDeflator::unit(m.grid(), 1)).max_abs_gap());
  }
  // Calibrated market with zero rates and common loadings: D^j = S0_j Z_t.
  ItoModel flat;
  flat.K = 2;
  flat.assets = {{0.0, {0.2, 0.05}, 0.0, {0.0, 0.0}, 1.0, 0.0, "a"},
                 {0.0, {0.2, 0.05}, 0.0, {0.0, 0.0}, 2.0, 0.0, "b"},
                 {0.0, {0.2, 0.05}, 0.0, {0.0, 0.0}, 0.5, 0.0, "c"}};
  BuildOptions bo;
  bo.check.tail_cap = 1.5;  // P = 1 at every maturity when rates vanish
  const auto sm = build_market(calibrate_arbitrage_free(flat, {0.02, 0.0}), unit_grid(), 2000, 11, bo);
  const auto [u, v] = perp_basis(vec({1.0, 2.0, 0.5}));
  const VectorXd x0 = vec({1.0, 1.0, 1.0});
  const auto loop = Strategy::deterministic_path(sm.market.grid(), 3, [&, u = u, v = v](double t) {
    const double a = 2 * std::numbers::pi * t;
    return VectorXd(x0 + 0.4 * ((std::cos(a) - 1) * u + std::sin(a) * v));
  }, true);
  ActionOptions o;
  o.self_financing_tol = 1e-9;
  const auto r = arbitrage_action(loop, sm.market, sm.calibration->beta, o);
  double dd = 0, da = 0;
  for (std::size_t s = 0; s < r.action.size(); ++s) dd = std::max(dd, std::abs(r.d01[s] - 1)), da = std::max(da, std::abs(r.action[s]));
  const double ratio = gaps[0] / gaps[1];
  const bool ok = gaps[0] <= 1e-3 && ratio >= 2.0 && dd <= 1e-6 && da <= 1e-4;
  return {ok, "open arc gap=" + fmt(gaps[0]) + " at dt=1e-3, refinement ratio " + fmt(ratio) + " (>= 2); loop max|d01-1|=" +
                  fmt(dd) + " max|A|=" + fmt(da) + " (2000 paths)"};
}

// ------------------------------------------------------------------ 7
Result homotopy_invariance() {
  const auto m = make_deterministic_market(unit_grid(), {{{0.0, -0.03, -0.01}, {0.03, 0.02}, "a"},
                                                          {{std::log(2.0), -0.03, -0.01}, {0.03, 0.02}, "b"},
                                                          {{std::log(0.5), -0.03, -0.01}, {0.03, 0.02}, "c"}});
  const auto [u, v] = perp_basis(vec({1.0, 2.0, 0.5}));
  const VectorXd x0 = vec({1.0, 1.0, 1.0}), x1 = x0 + 0.7 * u - 0.3 * v;
  // Gamma(eps, t) = straight + eps * bump; eps = 0 and eps = 1 are compared.
  const auto arc = [&, v = v](double eps) {
    return Strategy::deterministic_path(m.grid(), 3, [&, eps](double t) {
      return VectorXd(x0 + t * (x1 - x0) + eps * 0.5 * std::sin(std::numbers::pi * t) * v);
    });
  };
  const auto beta = StatePriceDeflator::unit(m.grid(), 1);
  ActionOptions o;
  o.self_financing_tol = 1e-9;
  const auto h = discount_homotopy_check(arc(0.0), arc(1.0), m, 1e-6, &beta, o);
  const bool ok = h.max_d01_gap <= 1e-6 && h.max_action_gap <= 1e-4;
  return {ok, "|d01 gap|=" + fmt(h.max_d01_gap) + " (<= 1e-6), |action gap|=" + fmt(h.max_action_gap) + " (<= 1e-4)"};
}

// ------------------------------------------------------------------ 8
struct ArbData {
  VectorXd x0 = vec({1, 1, 0}), D0 = vec({0.6, 0.4, 0.3}), D0p = vec({-0.5, -0.5, 0.2}), r0 = vec({0.02, 0.03, 0.01});
};

Result arbitrage_closed_form() {
  const ArbData d;
  const auto g = TimeGrid::uniform(0.0, 2.0, kDt);
  const auto sol = solve_arbitrage_dynamics(d.x0, d.D0, d.D0p, d.r0, g, {ConditionSet::arbitrage, 0.1, 0.05, 0.01}, 100, 3);
  bool x_exact = true;
  double dev = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    x_exact = x_exact && (sol.x_core[i].array() == d.x0.array()).all();
    dev = std::max(dev, (sol.D_core[i] - std::exp(-g[i]) * sol.g).cwiseAbs().maxCoeff());
  }
  const auto ode = arbitrage_rate_ode(d.x0.dot(d.D0p), sol.w.front(), g);
  double gap = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) gap = std::max(gap, std::abs(sol.w[i] - ode[i]) / std::max(1.0, std::abs(ode[i])));
  auto residual = [&](double dt) {
    return solve_arbitrage_dynamics(d.x0, d.D0, d.D0p, d.r0, TimeGrid::uniform(0.0, 2.0, dt)).core_residual().max();
  };
  const double e1 = residual(0.01), e2 = residual(0.005);
  const bool ok = x_exact && dev <= 1e-12 && gap <= 1e-6 && e1 / e2 >= 4.0;
  return {ok, std::string("x_t == x0 ") + (x_exact ? "exactly" : "VIOLATED") + "; max|D - e^-t g|=" + fmt(dev) +
                  "; closed form vs ODE " + fmt(gap) + " (<= 1e-6 on [0,2]); EL residual " + fmt(e1) + " -> " + fmt(e2) +
                  " ratio " + fmt(e1 / e2) + " (>= 4)"};
}

// ------------------------------------------------------------------ 9
Result noarb_martingale() {
  const VectorXd x0 = vec({1, -1, 0}), D0 = vec({0.5, 0.5, 0.8});
  const auto sol = solve_noarb_dynamics(x0, D0, unit_grid(), {ConditionSet::no_arbitrage, 0.2, 0.05, 0.0}, 10000, 8);
  double z = 0.0, gap = 0.0;
  for (Eigen::Index j = 0; j < 3; ++j) {
    const auto m = martingale_pricing_check(sol, VectorXd::Unit(3, j));
    z = std::max(z, m.max_z());
    gap = std::max(gap, m.max_abs_gap());
  }
  return {z <= 3.0, "unit portfolios: max |E[D_t^x] - D_0^x|=" + fmt(gap) + ", max z=" + fmt(z) + " (<= 3, 1e4 paths)"};
}

// ------------------------------------------------------------------ 10
Result noether_drift() {
  std::vector<std::string> bad;
  std::string d;
  double dil = 0.0;
  auto scan = [&](const std::string& family, const FirstIntegralReport& r) {
    for (const auto& f : r.integrals) {
      if (!f.defined) continue;  // stationary strategy: the integrand is 0/0
      if (!f.conserved(3.0)) bad.push_back(family + ":" + f.label + " drift " + fmt(f.max_drift) + " z " + fmt(f.max_z));
      if (f.label == "deflator-dilation")
        for (const auto& v : f.value) dil = std::max(dil, std::abs(v[0] - 1.0));
    }
  };
  const ArbData a;
  scan("arbitrage", noether_integrals(solve_arbitrage_dynamics(a.x0, a.D0, a.D0p, a.r0, unit_grid(),
                                                               {ConditionSet::arbitrage, 0.1, 0.05, 0.01}, 1000, 4)));
  scan("no-arbitrage", noether_integrals(solve_noarb_dynamics(vec({1, 0, 2}), vec({0.5, 0.5, 0.8}), unit_grid(),
                                                              {ConditionSet::no_arbitrage, 0.0, 0.05, 0.0}, 1000, 4)));
  // NFLVR market in pricing-kernel units with a moving strategy.
  const auto& sm = calibrated_market();
  const auto dm = deflate_market(sm.market, sm.calibration->beta);
  const auto st = Strategy::deterministic_path(dm.grid(), 3, [](double t) { return VectorXd(vec({1 + t, 1 - 0.5 * t, 0.5})); });
  const auto nr = noether_integrals(dm, st);
  const double ret = std::max(nr.get("rotation-return").max_abs, nr.get("nominal-translation").max_abs);
  const bool ok = bad.empty() && dil == 0.0 && ret <= 1e-10;
  d = "dilation |I-1|=" + fmt(dil) + "; NFLVR return-weighted max=" + fmt(ret);
  if (!bad.empty()) {
    d += "; drifting:";
    for (const auto& b : bad) d += " [" + b + "]";
  }
  return {ok, d};
}

// ------------------------------------------------------------------ 11
Result utility_foc() {
  const auto& sm = calibrated_market();
  FocOptions o;
  o.prefer_analytic = false;
  o.nelson = desk_nelson(sm.market.grid());
  const auto rep = utility_foc_residual(sm.market, [](double w) { return 1.0 / w; }, vec({1.0, 1.0, 1.0}), 2.0, o);
  double zmax = 0.0, worst = 0.0;
  bool ok = !rep.pairs.empty();
  for (std::size_t p = 0; p < rep.pairs.size(); ++p)
    for (std::size_t t = 0; t < rep.mean[p].size(); ++t) {
      if (std::isnan(rep.mean[p][t])) continue;
      const double z = std::abs(rep.mean[p][t]) / rep.stderr_[p][t];
      zmax = std::max(zmax, z);
      worst = std::max(worst, std::abs(rep.mean[p][t]));
      ok = ok && std::abs(rep.mean[p][t]) <= 5 * rep.stderr_[p][t] + 1e-10;
    }
  return {ok, std::to_string(rep.pairs.size()) + " pairs, max |mean residual|=" + fmt(worst) + ", max ratio to stderr=" + fmt(zmax) +
                      " (<= 5 stderr + 1e-10 floor, Nelson drifts)"};
}

// ------------------------------------------------------------------ 12
Result continuity_equation() {
  // The Nelson drifts of beta and of each D^j are separate regressions, and a
  // fitted curve shares its error across every scenario. The across-scenario
  // spread then understates the uncertainty of the mean, so the standard error
  // comes from batch means over independent markets.
  const auto cal = calibrate_arbitrage_free(three_assets(), {0.03, 0.0});
  const auto grid = unit_grid();
  const auto nel = desk_nelson(grid);
  const auto xs = sample_portfolios(3, 4);
  constexpr std::size_t batches = 10, per_batch = 1000;
  std::vector<std::vector<double>> means(xs.size() * nel.times.size());
  for (std::size_t b = 0; b < batches; ++b) {
    const auto sm = build_market(cal, grid, per_batch, 3000 + b);
    const Field drift = market_log_drifts(sm.market, nel, false);
    const Field bdrift = deflator_log_drift(sm.calibration->beta, nel, false);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const Field res = continuity_residual(sm.market, drift, bdrift, xs[k]);
      for (std::size_t q = 0; q < nel.times.size(); ++q) {
        double m = 0;
        for (std::size_t s = 0; s < per_batch; ++s) m += res(s, 0, nel.times[q]);
        means[k * nel.times.size() + q].push_back(m / per_batch);
      }
    }
  }
  double zmax = 0.0, worst_mean = 0.0;
  bool ok = true;
  for (const auto& bm : means) {
    double m = 0, m2 = 0;
    for (double v : bm) m += v, m2 += v * v;
    m /= batches;
    const double se = std::sqrt(std::max(0.0, (m2 - batches * m * m) / (batches - 1)) / batches);
    zmax = std::max(zmax, std::abs(m) / se);
    worst_mean = std::max(worst_mean, std::abs(m));
    ok = ok && std::abs(m) <= 5 * se + 1e-10;
  }
  // On a bumped market the residual differences rebuild the curvature coefficient:
  // rho_j = (D^j / D^x) (R(x) - R(e_j)).
  const auto bumped = build_market(inject_arbitrage(calibrate_arbitrage_free(three_assets(), {0.03, 0.0}), 0, 0.05), unit_grid(), 50, 9);
  const Field bd = *bumped.market.log_drift();
  const Field bb = *bumped.calibration->beta.log_drift;
  double worst = 0.0;
  std::vector<Field> unit;
  for (Eigen::Index j = 0; j < 3; ++j) unit.push_back(continuity_residual(bumped.market, bd, bb, VectorXd::Unit(3, j)));
  for (const auto& x : {vec({1, 1, 0}), vec({0.2, 0.5, 0.3}), vec({2, 1, 1})}) {
    const Field R = continuity_residual(bumped.market, bd, bb, x);
    const auto c = curvature(bumped.market, bd, x);
    for (std::size_t s = 0; s < 50; s += 7)
      for (std::size_t i : {100u, 500u, 900u})
        for (std::size_t j = 0; j < 3; ++j) {
          const double from_res = bumped.market.D(s, j, i) / bumped.market.Dx(s, i, x) * (R(s, 0, i) - unit[j](s, 0, i));
          const double fd = c.fd_check(s, j, i);
          worst = std::max(worst, std::abs(from_res - fd) / (1e-6 + 1e-3 * std::abs(fd)));
        }
  }
  ok = ok && worst <= 1.0;
  return {ok, "calibrated residual max |mean|=" + fmt(worst_mean) + ", max |mean|/stderr=" + fmt(zmax) +
                  " (<= 5, batch means 10 x 1000 paths); bumped: residual-based rho vs FD curvature " +
                  "mixed-tolerance ratio " + fmt(worst) + " (<= 1, atol 1e-6, rtol 1e-3)"};
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.insert(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, xfail;
  for (int a = 1; a + 1 < argc; a += 2) {
    const std::string k = argv[a];
    if (k == "--only") only = parse_list(argv[a + 1]);
    else if (k == "--xfail") xfail = parse_list(argv[a + 1]);
    else {
      std::cerr << "usage: acceptance [--only i,j] [--xfail i,j]\n";
      return 2;
    }
  }
  const std::vector<std::pair<const char*, std::function<Result()>>> criteria{
      {"Nelson/Brownian identity", nelson_brownian},
      {"Ito/Stratonovich bridge", ito_stratonovich},
      {"Gauge algebra", gauge_algebra},
      {"Zero-curvature calibration", zero_curvature_calibration},
      {"Arbitrage detection", arbitrage_detection},
      {"Action formula", action_formula},
      {"Homotopy invariance", homotopy_invariance},
      {"Arbitrage-family closed form", arbitrage_closed_form},
      {"No-arbitrage martingale pricing", noarb_martingale},
      {"Noether drift", noether_drift},
      {"Utility first-order conditions", utility_foc},
      {"Continuity equation", continuity_equation}};
  int unexpected = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = criteria[k].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool expected_fail = xfail.count(id) > 0;
    if (r.pass == expected_fail) ++unexpected;
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[k].first << ": " << r.detail << " ["
              << fmt(secs) << "s]" << (expected_fail ? (r.pass ? " (listed as expected failure)" : " (expected failure)") : "")
              << std::endl;
  }
  return unexpected == 0 ? 0 : 1;
}
