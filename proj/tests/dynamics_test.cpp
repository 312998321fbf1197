#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "curvlab/dynamics.hpp"
#include "curvlab/marketsim.hpp"

using namespace curvlab;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(v.size());
  std::size_t k = 0;
  for (double e : v) x[k++] = e;
  return x;
}

TimeGrid grid(double t1, double dt) { return TimeGrid::uniform(0.0, t1, dt); }

LagrangianState state() {
  return {vec({1, 2}), vec({1, 1}), vec({0.01, 0.01}), vec({3, 4}), vec({0, 0}), vec({0, 0})};
}

// p = x0.D0' = -1, no singular time.
struct ArbData {
  VectorXd x0 = vec({1, 1, 0}), D0 = vec({0.6, 0.4, 0.3}), D0p = vec({-0.5, -0.5, 0.2}), r0 = vec({0.02, 0.03, 0.01});
};

}  // namespace

TEST(Lagrangian, HandValueAndVanishingCases) {
  auto q = state();
  EXPECT_NEAR(lagrangian(q), 5 * 0.03 / 3, 1e-15);
  q.Dp = vec({0.2, -0.1});
  EXPECT_NEAR(lagrangian(q), 5 * (0.03 + 0.0) / 3, 1e-15);  // x.D' = 0
  q.Dp = vec({0.3, 0.0});
  EXPECT_NEAR(lagrangian(q), 5 * 0.33 / 3, 1e-15);

  auto still = state();
  still.xp.setZero();
  EXPECT_EQ(lagrangian(still), 0.0);
  auto martingale = state();
  martingale.Dp = -martingale.r.cwiseProduct(martingale.D);
  EXPECT_NEAR(lagrangian(martingale), 0.0, 1e-16);

  auto bad = state();
  bad.x = vec({1, -1});
  EXPECT_THROW(lagrangian(bad), SingularityError);
  bad.r = vec({1});
  EXPECT_THROW(lagrangian(bad), DimensionError);
}

TEST(Lagrangian, RotationWithUniformRateAndDilation) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  auto rnd = [&](int n) {
    VectorXd v(n);
    for (auto& e : v) e = z(rng);
    return v;
  };
  LagrangianState q{rnd(4), rnd(4), VectorXd::Constant(4, 0.04), rnd(4), rnd(4), rnd(4)};
  q.D = q.D.cwiseAbs() + VectorXd::Ones(4);
  q.x = q.x.cwiseAbs();
  const double L = lagrangian(q);
  const Eigen::MatrixXd R = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(4, 4)).householderQ();
  LagrangianState rot{R * q.x, R * q.D, q.r, R * q.xp, R * q.Dp, q.rp};
  EXPECT_NEAR(lagrangian(rot), L, 1e-12 * std::max(1.0, std::abs(L)));
  LagrangianState dil = q;
  dil.D *= 7.5;
  dil.Dp *= 7.5;
  EXPECT_NEAR(lagrangian(dil), L, 1e-12 * std::max(1.0, std::abs(L)));

  // A non-uniform rate breaks the rotation symmetry.
  q.r = vec({0.01, 0.05, 0.1, 0.2});
  rot.r = q.r;
  EXPECT_GT(std::abs(lagrangian(rot) - lagrangian(q)), 1e-6);
}

TEST(GOperator, HandCases) {
  const VectorXd D0 = vec({0.7, 0.3}), D0p = vec({-0.2, 0.9});
  EXPECT_EQ(g_operator(VectorXd::Zero(2), D0, D0p), D0);
  const VectorXd g = g_operator(vec({1, 0}), D0, D0p);
  EXPECT_NEAR(g[0], -0.2, 1e-15);
  EXPECT_NEAR(g[1], 0.3, 1e-15);
  const VectorXd x0 = vec({1, 2, -1});
  const VectorXd D3 = vec({0.5, 0.1, 0.8});
  EXPECT_LT((g_operator(x0, D3, D3) - D3).norm(), 1e-14);
  // x0.g picks up D0', the orthogonal part keeps D0.
  const VectorXd D3p = vec({1, -1, 2});
  const VectorXd g3 = g_operator(x0, D3, D3p);
  EXPECT_NEAR(x0.dot(g3), x0.dot(D3p), 1e-14);
  const VectorXd perp = vec({1, 0, 1});  // orthogonal to x0
  EXPECT_NEAR(perp.dot(g3), perp.dot(D3), 1e-14);
  EXPECT_NEAR(g_operator(vec({2}), vec({1}), vec({3}))[0], 3.0, 1e-15);
}

TEST(ArbitrageRate, AntiderivativeMatchesQuadrature) {
  for (double p : {-1.0, -0.3, 10.0}) {
    const ArbitrageRateEquation eq{p};
    const auto q = arbitrage_rate_closed_form(p, 0.1, grid(2.0, 0.25));
    for (std::size_t i = 0; i < q.A.size(); ++i) {
      const double t = 0.25 * i;
      EXPECT_NEAR(q.A[i], eq.antiderivative(t) - eq.antiderivative(0.0), 1e-10) << "p=" << p << " t=" << t;
    }
  }
}

TEST(ArbitrageRate, ClosedFormMatchesOde) {
  const auto g = grid(2.0, 0.05);
  for (double p : {-1.0, -0.3, 10.0}) {
    const auto cf = arbitrage_rate_closed_form(p, 0.05, g);
    const auto ode = arbitrage_rate_ode(p, 0.05, g);
    for (std::size_t i = 0; i < g.size(); ++i)
      EXPECT_NEAR(cf.w[i], ode[i], 1e-6 * std::max(1.0, std::abs(ode[i]))) << "p=" << p << " t=" << g[i];
  }
  EXPECT_THROW(arbitrage_rate_closed_form(10.0, 0.05, grid(3.0, 0.05)), SingularityError);  // log 10 in [0, 3]
  EXPECT_THROW(arbitrage_rate_ode(10.0, 0.05, grid(3.0, 0.05)), SingularityError);
  EXPECT_THROW(arbitrage_rate_closed_form(0.0, 0.05, g), PreconditionError);
}

TEST(ArbitrageDynamics, CoreSolvesTheEquations) {
  const ArbData d;
  auto at = [&](double dt) { return solve_arbitrage_dynamics(d.x0, d.D0, d.D0p, d.r0, grid(1.0, dt)).core_residual(); };
  const auto coarse = at(0.02), fine = at(0.01);
  EXPECT_EQ(coarse.max3, 0.0);  // constant nominals stay exactly stationary
  EXPECT_LT(coarse.max1, 1e-10);
  EXPECT_LT(fine.max2, 1e-6);
  EXPECT_GT(coarse.max2 / fine.max2, 12.0);  // fourth-order differencing error only

  const auto sol = solve_arbitrage_dynamics(d.x0, d.D0, d.D0p, d.r0, grid(1.0, 0.01));
  const double p = d.x0.dot(d.D0p);
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    EXPECT_NEAR(sol.x0.dot(sol.D_core[i]), p * std::exp(-sol.grid[i]), 1e-14);
    EXPECT_NEAR(sol.x0.dot(sol.r_core[i].cwiseProduct(sol.D_core[i])), sol.w[i], 1e-13);
  }
  EXPECT_LT(self_financing_defect(sol), 1e-15);
}

TEST(ArbitrageDynamics, ArbitraryPathIsNotASolution) {
  const auto g = grid(1.0, 0.01);
  std::vector<VectorXd> x, D, r;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double t = g[i];
    x.push_back(vec({1 + t, std::cos(t)}));
    D.push_back(vec({std::exp(-t), 1 + t * t}));
    r.push_back(vec({0.02, 0.05 * t}));
  }
  const auto res = euler_lagrange_residual(g, x, D, r);
  EXPECT_GT(res.max(), 0.1);
  EXPECT_TRUE(std::isnan(res.eq1.front()) && std::isnan(res.eq2.back()));
  EXPECT_THROW(euler_lagrange_residual(grid(1.0, 0.5), {x[0], x[1], x[2]}, {D[0], D[1]}, {r[0], r[1], r[2]}), DimensionError);
}

TEST(ArbitrageDynamics, PreconditionsAndSingularity) {
  const ArbData d;
  EXPECT_THROW(solve_arbitrage_dynamics(d.x0, d.D0, vec({0.5, 0.5, 0.0}), d.r0, grid(1.0, 0.1)), PreconditionError);
  // p = 10: singular at log 10 ~ 2.303.
  const VectorXd x0 = vec({1, -1}), D0 = vec({-4, 6}), D0p = vec({5, -5}), r0 = vec({0.01, 0.01});
  EXPECT_NO_THROW(solve_arbitrage_dynamics(x0, D0, D0p, r0, grid(2.0, 0.1)));
  EXPECT_THROW(solve_arbitrage_dynamics(x0, D0, D0p, r0, grid(2.5, 0.1)), SingularityError);
}

TEST(Perturbations, SideConditionsAndZeroMeans) {
  const ArbData d;
  const PerturbationSpec spec{ConditionSet::arbitrage, 0.1, 0.1, 0.01};
  const auto sol = solve_arbitrage_dynamics(d.x0, d.D0, d.D0p, d.r0, grid(1.0, 0.1), spec, 201, 5);
  const auto& P = sol.perturbations;
  VectorXd sx = VectorXd::Zero(3), sD = VectorXd::Zero(3), sr = VectorXd::Zero(3);
  for (std::size_t s = 0; s < 201; ++s) {
    EXPECT_LT(std::abs(P.dx[s].dot(sol.g)), 1e-12);
    EXPECT_LT(std::abs(P.dD[s].dot(d.x0)), 1e-12);
    EXPECT_LT(std::abs(P.dD[s].dot(P.dx[s])), 1e-12);
    EXPECT_LT(std::abs(P.dr[s][0] - P.dr[s][2]), 1e-15);
    sx += P.dx[s], sD += P.dD[s], sr += P.dr[s];
  }
  EXPECT_EQ(sx.norm() + sD.norm() + sr.norm(), 0.0);
  EXPECT_EQ(P.dx[200].norm(), 0.0);
  EXPECT_GT(P.dx[0].norm(), 0.0);
  EXPECT_GT(P.dD[0].norm(), 0.0);

  // One asset leaves no room for a nominal perturbation orthogonal to g.
  EXPECT_THROW(solve_arbitrage_dynamics(vec({1}), vec({1}), vec({-1}), vec({0.0}), grid(1.0, 0.1),
                                        {ConditionSet::arbitrage, 0.1, 0.0, 0.0}, 4),
               PreconditionError);
  EXPECT_THROW(solve_noarb_dynamics(vec({1, 0}), vec({1, 1}), grid(1.0, 0.1), {ConditionSet::no_arbitrage, 0.1, 0.0, 0.0}, 4),
               PreconditionError);  // x0.D0 != 0
  EXPECT_THROW(solve_noarb_dynamics(vec({1, 0}), vec({1, 1}), grid(1.0, 0.1), {ConditionSet::no_arbitrage, 0.0, 0.0, 0.1}, 4),
               PreconditionError);
}

TEST(NoArbitrageDynamics, MartingalePricing) {
  const VectorXd x0 = vec({1, -1, 0, 0}), D0 = vec({0.5, 0.5, 0.8, 0.2});
  const auto sol =
      solve_noarb_dynamics(x0, D0, grid(1.0, 0.05), {ConditionSet::no_arbitrage, 0.2, 0.05, 0.0}, 500, 9);
  for (std::size_t s = 0; s < 500; ++s) {
    EXPECT_LT(std::abs(sol.perturbations.dx[s].dot(D0)), 1e-12);
    EXPECT_LT(std::abs(sol.perturbations.dx[s].sum()), 1e-12);
    EXPECT_LT(std::abs(sol.perturbations.dD[s].dot(x0)), 1e-12);
  }
  for (const VectorXd& x : {x0, VectorXd(vec({0.3, 1.2, -0.4, 2.0}))}) {
    const auto m = martingale_pricing_check(sol, x);
    EXPECT_LT(m.max_abs_gap(), 1e-14);
  }
  EXPECT_EQ(sol.core_residual().max(), 0.0);
  EXPECT_EQ(self_financing_defect(sol), 0.0);
}

TEST(Noether, SolutionFamilies) {
  // x0.D0 != 0 keeps x/x.D finite, so only deflators are perturbed.
  const VectorXd x0 = vec({1, 0, 0, 2}), D0 = vec({0.5, 0.5, 0.8, 0.2});
  const auto nb = solve_noarb_dynamics(x0, D0, grid(1.0, 0.05), {ConditionSet::no_arbitrage, 0.0, 0.05, 0.0}, 100, 2);
  const auto rn = noether_integrals(nb);
  EXPECT_FALSE(rn.get("rotation-return").defined);
  EXPECT_FALSE(rn.get("nominal-translation").defined);
  EXPECT_NE(rn.get("nominal-translation").note.find("stationary"), std::string::npos);
  for (const char* l : {"rotation-position", "deflator-translation", "deflator-dilation"}) {
    EXPECT_TRUE(rn.get(l).conserved()) << l;
    EXPECT_EQ(rn.get(l).max_drift, 0.0) << l;
  }
  EXPECT_EQ(rn.get("rotation-position").value[0].size(), 12u);  // 6 generators, 2 entries each

  const ArbData d;
  const auto ab = solve_arbitrage_dynamics(d.x0, d.D0, d.D0p, d.r0, grid(1.0, 0.05),
                                           {ConditionSet::arbitrage, 0.1, 0.1, 0.0}, 100, 2);
  const auto ra = noether_integrals(ab);
  EXPECT_TRUE(ra.get("deflator-dilation").conserved());
  EXPECT_NEAR(ra.get("deflator-dilation").value.back()[0], 1.0, 1e-15);
  // x / x.D grows like e^t along the arbitrage family.
  const auto& tr = ra.get("deflator-translation");
  EXPECT_FALSE(tr.conserved());
  EXPECT_NEAR(tr.value.back()[0] / tr.value.front()[0], std::exp(1.0), 1e-9);
  EXPECT_FALSE(ra.get("rotation-position").conserved());
  const auto js = ra.to_json();
  EXPECT_EQ(js["integrals"].size(), 5u);
}

TEST(Noether, DeflatedMarketReturnIntegralsVanish) {
  ItoModel m;
  m.K = 2;
  m.assets = {{0.0, {0.2, 0.05}, 0.0, {0.0, 0.0}, 1.0, 0.03, "a"},
              {0.0, {0.2, 0.05}, 0.0, {0.0, 0.0}, 2.0, 0.03, "b"},
              {0.0, {0.2, 0.05}, 0.0, {0.0, 0.0}, 0.5, 0.03, "c"}};
  const auto sm = build_market(calibrate_arbitrage_free(m, {0.02, 0.0}), grid(1.0, 0.02), 200, 4, {});
  ASSERT_TRUE(sm.calibration);
  const MarketModel dm = deflate_market(sm.market, sm.calibration->beta);
  const auto ld = *dm.log_drift();
  for (std::size_t s = 0; s < 5; ++s)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t i = 1; i < dm.grid().size(); ++i) EXPECT_NEAR(ld(s, j, i) + dm.r(s, j, i), 0.0, 1e-12);

  const auto st = Strategy::deterministic_path(dm.grid(), 3, [](double t) { return VectorXd(vec({1 + t, 1 - 0.5 * t, 0.5})); });
  const auto rep = noether_integrals(dm, st);
  ASSERT_TRUE(rep.get("rotation-return").defined);
  EXPECT_LT(rep.get("rotation-return").max_abs, 1e-12);
  EXPECT_LT(rep.get("nominal-translation").max_abs, 1e-12);
  EXPECT_TRUE(rep.get("nominal-translation").conserved());
  EXPECT_TRUE(rep.get("deflator-dilation").conserved());

  // Stationary strategy in the same market: return-weighted integrals undefined.
  const auto still = noether_integrals(dm, Strategy::constant(dm.grid(), vec({1, 1, 1})));
  EXPECT_FALSE(still.get("rotation-return").defined);
  EXPECT_THROW(deflate_market(sm.market, StatePriceDeflator::unit(dm.grid(), 3)), DimensionError);
}

TEST(DynamicsIo, SolutionCsv) {
  const auto sol = solve_noarb_dynamics(vec({1, -1}), vec({1, 1}), grid(1.0, 0.5), {ConditionSet::no_arbitrage, 0.1, 0.1}, 2, 1);
  std::ostringstream os;
  write_solution_csv(os, sol);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "scenario,t,block,j,value");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 2u * 3 * 3 * 2);
}
