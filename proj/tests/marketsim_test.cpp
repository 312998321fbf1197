#include <gtest/gtest.h>

#include <cmath>

#include "curvlab/geometry.hpp"
#include "curvlab/marketsim.hpp"

using namespace curvlab;
using Eigen::VectorXd;

namespace {

ItoModel three_assets() {
  ItoModel m;
  m.K = 2;
  m.assets = {{0.05, {0.2, 0.05}, 0.001, {0.004, 0.001}, 1.0, 0.03, "eq"},
              {0.03, {0.2, 0.05}, 0.000, {0.004, 0.001}, 2.0, 0.04, "fx"},
              {0.08, {0.2, 0.05}, 0.002, {0.004, 0.001}, 0.5, 0.035, "cmd"}};
  return m;
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(v.size());
  std::size_t k = 0;
  for (double e : v) x[k++] = e;
  return x;
}

}  // namespace

TEST(Model, ValidationAndBump) {
  auto m = three_assets();
  EXPECT_NO_THROW(m.validate());
  auto bad = m;
  bad.assets[1].sigma = {0.1};
  EXPECT_THROW(bad.validate(), DimensionError);
  bad = m;
  bad.assets[0].S0 = 0;
  EXPECT_THROW(bad.validate(), ValidationError);

  const auto same = inject_arbitrage(m, 1, 0.0);
  EXPECT_EQ(same.assets[1].alpha, m.assets[1].alpha);
  EXPECT_DOUBLE_EQ(inject_arbitrage(m, 1, 0.05).assets[1].alpha, 0.08);
  EXPECT_THROW(inject_arbitrage(m, 3, 0.1), ValidationError);
}

TEST(Build, ZeroVolFlatRate) {
  ItoModel m;
  m.K = 1;
  m.assets = {{0.04, {0.0}, 0.0, {0.0}, 1.0, 0.03, "cash"}};
  const auto grid = TimeGrid::uniform(0.0, 1.0, 0.1);
  const auto sm = build_market(m, grid, 3, 9);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_NEAR(sm.market.D(2, 0, i), std::exp(0.04 * grid[i]), 1e-14);
    EXPECT_EQ(sm.market.gauges()[0].term_structure->discount(1, i, 0.0), 1.0);
    for (double tau : {0.5, 3.0, 20.0})
      EXPECT_NEAR(sm.market.gauges()[0].term_structure->discount(1, i, tau), std::exp(-0.03 * tau), 1e-15);
  }
}

TEST(Build, ItoSolutionPathwise) {
  const auto m = three_assets();
  const auto grid = TimeGrid::uniform(0.0, 1.0, 0.01);
  const auto sm = build_market(m, grid, 20, 4);
  for (std::size_t s = 0; s < 20; ++s)
    for (std::size_t j = 0; j < 3; ++j) {
      const auto& a = m.assets[j];
      const double t = 1.0;
      const double logS = std::log(a.S0) + (a.alpha - 0.5 * squared_norm(a.sigma)) * t + a.sigma[0] * sm.W(s, 0, 100) +
                          a.sigma[1] * sm.W(s, 1, 100);
      EXPECT_NEAR(std::log(sm.S(s, j, 100)), logS, 1e-12);
      const double r = a.r0 + a.a * t + a.b[0] * sm.W(s, 0, 100) + a.b[1] * sm.W(s, 1, 100);
      EXPECT_NEAR(sm.r(s, j, 100), r, 1e-14);
      EXPECT_DOUBLE_EQ(sm.market.r(s, j, 100), sm.r(s, j, 100));
    }
  const auto again = build_market(m, grid, 20, 4);
  EXPECT_EQ(again.S.values(), sm.S.values());
}

TEST(TermStructure, GaussianMomentOracle) {
  const auto m = three_assets();
  // int_0^tau r = r tau + a tau^2/2 + b.int W; Var(int W) = tau^3/3 per factor
  const double r = 0.03, tau = 7.0, a = m.assets[0].a, b2 = squared_norm(m.assets[0].b);
  const double mean = -(r * tau + 0.5 * a * tau * tau), var = b2 * tau * tau * tau / 3;
  EXPECT_NEAR(gaussian_bond_price(m, 0, r, tau), std::exp(mean + 0.5 * var), 1e-15);
  EXPECT_EQ(gaussian_bond_price(m, 0, r, 0.0), 1.0);
}

TEST(TermStructure, NestedMcMatchesClosedForm) {
  for (double kappa : {0.0, 0.3}) {
    ItoModel m;
    m.K = 1;
    m.kappa = kappa;
    m.assets = {{0.0, {0.1}, 0.004, {0.02}, 1.0, 0.03, "r"}};
    std::mt19937_64 rng(17);
    const std::vector<double> taus{0.0, 1.0, 5.0, 10.0};
    const auto est = nested_mc_bond_prices(m, 0, 0.025, taus, 8192, 0.01, rng);
    EXPECT_EQ(est[0].mean, 1.0);
    for (std::size_t k = 1; k < taus.size(); ++k) {
      const double exact = gaussian_bond_price(m, 0, 0.025, taus[k]);
      EXPECT_GT(est[k].stderr, 0.0);
      EXPECT_LE(std::abs(est[k].mean - exact), 3 * est[k].stderr) << "kappa=" << kappa << " tau=" << taus[k];
    }
  }
}

TEST(TermStructure, NestedMcMarket) {
  ItoModel m;
  m.K = 1;
  m.assets = {{0.02, {0.1}, 0.0, {0.005}, 1.0, 0.03, "a"}};
  BuildOptions o;
  o.method = TermStructureMethod::NestedMC;
  o.n_inner = 64;
  o.inner_dt = 0.05;
  const auto sm = build_market(m, TimeGrid::uniform(0.0, 0.2, 0.1), 4, 3, o);
  EXPECT_EQ(sm.market.gauges()[0].term_structure->kind(), "sampled");
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(sm.market.gauges()[0].term_structure->discount(2, i, 0.0), 1.0);
  EXPECT_NEAR(sm.market.gauges()[0].term_structure->discount(1, 1, 5.0), gaussian_bond_price(m, 0, sm.r(1, 0, 1), 5.0),
              2e-3);
}

TEST(Calibration, RejectsUnsolvable) {
  auto m = three_assets();
  m.assets[2].sigma = {0.3, 0.0};
  EXPECT_THROW(calibrate_arbitrage_free(m), PreconditionError);
  auto k = three_assets();
  k.kappa = 0.1;
  EXPECT_THROW(calibrate_arbitrage_free(k), PreconditionError);
  EXPECT_THROW(calibrate_arbitrage_free(three_assets(), {0.0, 0.0, Calibration::C2Mode::Zero}), PreconditionError);
}

TEST(Calibration, EmptyExponentGivesUnitKernel) {
  ItoModel m;
  m.K = 1;
  m.assets = {{0.1, {0.0}, 0.3, {0.0}, 1.0, 0.02, "a"}, {0.2, {0.0}, 0.1, {0.0}, 1.0, 0.05, "b"}};
  const auto c = calibrate_arbitrage_free(m, {0.0, 0.0, Calibration::C2Mode::Zero});
  const auto sm = build_market(c, TimeGrid::uniform(0.0, 1.0, 0.1), 2, 1);
  for (double v : sm.calibration->beta.beta.values()) EXPECT_EQ(v, 1.0);
}

TEST(Calibration, PricingKernelIdentities) {
  const auto m = calibrate_arbitrage_free(three_assets(), {0.02, 0.001});
  for (const auto& a : m.assets) {
    EXPECT_DOUBLE_EQ(a.alpha, 0.02 + 0.5 * squared_norm(a.sigma) - a.r0);
    EXPECT_DOUBLE_EQ(a.a, 0.001);
  }
  const auto grid = TimeGrid::uniform(0.0, 1.0, 0.01);
  const auto sm = build_market(m, grid, 50, 8);
  const auto& beta = sm.calibration->beta.beta;
  for (std::size_t s = 0; s < 50; s += 7)
    for (std::size_t j = 0; j < 3; ++j) {
      double I = 0;
      for (std::size_t i = 1; i < grid.size(); ++i) {
        I += 0.5 * (sm.r(s, j, i) + sm.r(s, j, i - 1)) * 0.01;
        if (i % 25) continue;
        EXPECT_NEAR(std::log(beta(s, i) * sm.S(s, j, i)), std::log(m.assets[j].S0) - I, 1e-12);
      }
    }
  // analytic drifts: mu_j = C1 + C2 for every asset
  const auto& ld = *sm.market.log_drift();
  const auto& bd = *sm.calibration->beta.log_drift;
  for (std::size_t i = 1; i < grid.size(); i += 33)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(ld(3, j, i) + sm.r(3, j, i), sm.calibration->C1(3, i) + sm.calibration->C2(3, i), 1e-12);
      EXPECT_NEAR(bd(3, 0, i), -(sm.calibration->C1(3, i) + sm.calibration->C2(3, i)), 1e-15);
    }
  EXPECT_TRUE(std::isnan(ld(0, 0, 0)));
}

TEST(Calibration, ZeroCurvatureWithNelsonDrifts) {
  const auto m = calibrate_arbitrage_free(three_assets(), {0.03, 0.0});
  const auto grid = TimeGrid::uniform(0.0, 1.0, 0.01);
  const auto sm = build_market(m, grid, 4000, 21);
  NflvrOptions o;
  o.curvature.prefer_analytic = false;
  o.curvature.nelson.window = 10;
  o.curvature.nelson.times = {20, 50, 80};
  const auto rep = nflvr_report(sm.market, {sm.calibration->beta}, o);
  EXPECT_EQ(rep.verdict, "consistent-with-NFLVR") << rep.to_json().dump();
  EXPECT_LE(rep.curvature_rms, 5 * rep.stderr + 1e-10);
  NflvrOptions a;
  const auto exact = nflvr_report(sm.market, {sm.calibration->beta}, a);
  EXPECT_LT(exact.curvature_rms, 1e-14);
  EXPECT_LT(exact.beta_residual, 1e-8);
}

TEST(Calibration, DeflatedBondMartingale) {
  const auto m = calibrate_arbitrage_free(three_assets(), {0.03, 0.0});
  const auto sm = build_market(m, TimeGrid::uniform(0.0, 1.0, 0.01), 4000, 5);
  for (const auto& c : deflated_bond_martingale(sm, 2.0, {0.0, 0.25, 0.5, 1.0})) {
    if (c.t == 0.0) {
      EXPECT_NEAR(c.mean, c.target, 1e-12 * c.target);
      continue;
    }
    EXPECT_LE(std::abs(c.z()), 3.0) << "asset " << c.asset << " t=" << c.t;
  }
}

TEST(Arbitrage, BumpFlipsVerdictAndScalesLinearly) {
  const auto cal = calibrate_arbitrage_free(three_assets(), {0.03, 0.0});
  const auto grid = TimeGrid::uniform(0.0, 1.0, 0.01);
  EXPECT_EQ(nflvr_report(build_market(cal, grid, 500, 2).market).verdict, "consistent-with-NFLVR");
  const auto bumped = build_market(inject_arbitrage(cal, 0, 0.05), grid, 500, 2);
  EXPECT_EQ(nflvr_report(bumped.market).verdict, "arbitrage-detected");
  // numeraire neutrality of the verdict
  EXPECT_EQ(nflvr_report(renormalize_to_numeraire(bumped.market, vec({1, 0, 0}))).verdict, "arbitrage-detected");

  const VectorXd x = vec({1, 1, 0});
  std::vector<double> ds{0.01, 0.02, 0.04}, rho;
  for (double d : ds) {
    const auto sm = build_market(inject_arbitrage(cal, 0, d), grid, 500, 2);
    rho.push_back(curvature(sm.market, x).rho(7, 1, 60));
  }
  const auto base = build_market(cal, grid, 500, 2);
  const double w1 = base.market.D(7, 0, 60) / base.market.Dx(7, 60, x);
  const double w2 = base.market.D(7, 1, 60) / base.market.Dx(7, 60, x);
  const double slope = (rho[2] - rho[0]) / (ds[2] - ds[0]);
  EXPECT_NEAR(slope, w2 * w1, 0.05 * std::abs(w2 * w1));
  EXPECT_NEAR((rho[1] - rho[0]) / 0.01, (rho[2] - rho[1]) / 0.02, 0.05 * std::abs(slope));
}

TEST(TotalReturn, TwoSides) {
  const auto det = make_deterministic_market(TimeGrid::uniform(0.0, 1.0, 0.1), {{{0.0, 0.07}, {0.02}, "d"}});
  const auto tr = instantaneous_total_return(det, vec({3}));
  for (std::size_t i = 0; i < 11; ++i) EXPECT_NEAR(tr.ret(0, 0, i), 0.07, 1e-15);

  const auto cal = calibrate_arbitrage_free(three_assets(), {0.03, 0.0});
  const auto grid = TimeGrid::uniform(0.0, 1.0, 0.01);
  const auto sm = build_market(cal, grid, 50, 6);
  const VectorXd x = vec({0.5, 0.2, 0.3});
  const auto t0 = instantaneous_total_return(sm.market, x, &sm.calibration->beta);
  for (std::size_t i = 1; i < grid.size(); i += 9) EXPECT_NEAR(t0.gap(4, 0, i), 0.0, 1e-12);

  const double d = 0.05;
  const auto bm = build_market(inject_arbitrage(cal, 0, d), grid, 50, 6);
  const auto t1 = instantaneous_total_return(bm.market, x, &bm.calibration->beta);
  for (std::size_t i = 1; i < grid.size(); i += 9)
    EXPECT_NEAR(t1.gap(4, 0, i), d * x[0] * bm.market.D(4, 0, i) / bm.market.Dx(4, i, x), 1e-12);
}

TEST(Config, ParsesScenario) {
  const std::string text = R"(# three assets
[grid]
t0 = 0
t1 = 1
dt = 0.01
[mc]
n_outer = 200
n_inner = 64
seed = 7
[asset]
label = eq
alpha = 0.05
sigma = 0.2, 0.05
b = 0.004 0.001
r0 = 0.03
[asset]
sigma = 0.2 0.05
b = 0.004 0.001
S0 = 2
r0 = 0.04
[calibration]
C1 = 0.03 0.001
C2 = implied
[bump]
asset = 1
delta = 0.05
[term_structure]
method = closed-form-gaussian
)";
  const auto c = parse_scenario(text, "s.cfg");
  EXPECT_EQ(c.model.N(), 2u);
  EXPECT_EQ(c.model.K, 2u);
  EXPECT_EQ(c.model.assets[0].label, "eq");
  EXPECT_EQ(c.model.assets[1].label, "asset1");
  EXPECT_EQ(c.n_outer, 200u);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.grid.size(), 101u);
  ASSERT_TRUE(c.calibration && c.bump);
  EXPECT_DOUBLE_EQ(c.calibration->c1, 0.001);
  const auto m = c.effective_model();
  EXPECT_DOUBLE_EQ(m.assets[1].alpha, 0.03 + 0.5 * (0.04 + 0.0025) - 0.04 + 0.05);
}

TEST(Config, StrictDiagnostics) {
  auto msg = [](const std::string& text) {
    try {
      parse_scenario(text, "bad.cfg");
    } catch (const InputError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(msg("[grid]\nt1 = 1\ndt = 0.1\n[asset]\nsigma = 0.1\nvolatility = 2\n").find("bad.cfg:6: unknown key 'volatility'"),
            std::string::npos);
  EXPECT_NE(msg("[grid]\nt1 = 1\ndt = 0.1\n[assets]\n").find("bad.cfg:4: unknown section"), std::string::npos);
  EXPECT_NE(msg("[grid]\nt1 = 1\ndt = zero\n").find("bad.cfg:3:"), std::string::npos);
  EXPECT_NE(msg("[grid]\nt1 = 1\ndt = 0.1\njunk\n").find("bad.cfg:4: expected 'key = value'"), std::string::npos);
  EXPECT_NE(msg("[grid]\nt1 = 1\ndt = 0.1\n").find("[asset]"), std::string::npos);
  EXPECT_NE(msg("[grid]\nt1 = 1\nt1 = 2\n").find("bad.cfg:3: duplicate key"), std::string::npos);
  EXPECT_NE(msg("[grid]\nt1 = 1\ndt = 0.1\n[asset]\nsigma = 0.1 0.2\nb = 0.1\n").find("loadings"), std::string::npos);
}
