#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "curvlab/action/strategy.hpp"
#include "curvlab/geometry/market.hpp"

namespace curvlab {

enum class ArbitrageClass { negative, zero, positive, indeterminate };

inline std::string to_string(ArbitrageClass c) {
  switch (c) {
    case ArbitrageClass::negative: return "negative";
    case ArbitrageClass::zero: return "zero";
    case ArbitrageClass::positive: return "positive";
    default: return "indeterminate";
  }
}

struct Classification {
  std::vector<ArbitrageClass> per_scenario;
  ArbitrageClass aggregate = ArbitrageClass::zero;  // indeterminate unless every scenario agrees
};

struct ActionOptions {
  double classify_tol = 1e-4;
  bool check_self_financing = true;
  double self_financing_tol = 1e-2;
  NelsonOptions nelson;
};

struct ActionReport {
  std::vector<double> action;    // discrete integral of Dlog(beta D^x) + r^x
  std::vector<double> endpoint;  // log(beta_1 D_1^{x_1} / (beta_0 D_0^{x_0} d01))
  std::vector<double> d01;       // exp(-int r^x)
  std::vector<double> gap;       // action - endpoint
  Classification classification;
  double tol = 0.0;
  bool self_financing = true;
  std::vector<std::string> warnings;

  double max_abs_gap() const {
    double g = 0.0;
    for (double v : gap) g = std::max(g, std::abs(v));
    return g;
  }

  nlohmann::json to_json() const {
    auto stats = [](const std::vector<double>& v) {
      double mean = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (double x : v) {
        mean += x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      return nlohmann::json{{"mean", mean}, {"min", lo}, {"max", hi}, {"sd", sd}};
    };
    return {{"scenarios", action.size()},
            {"action", stats(action)},
            {"endpoint", stats(endpoint)},
            {"d01", stats(d01)},
            {"max_abs_gap", max_abs_gap()},
            {"classification", to_string(classification.aggregate)},
            {"tol", tol},
            {"self_financing", self_financing},
            {"warnings", warnings}};
  }
};

inline Classification classify_arbitrage(const std::vector<double>& action, double tol) {
  if (!(tol >= 0)) throw ValidationError("classification tolerance must be >= 0");
  Classification c;
  for (double a : action)
    c.per_scenario.push_back(a > tol ? ArbitrageClass::positive
                             : a < -tol ? ArbitrageClass::negative
                                        : ArbitrageClass::zero);
  if (c.per_scenario.empty()) return c;
  c.aggregate = c.per_scenario.front();
  for (auto v : c.per_scenario)
    if (v != c.aggregate) {
      c.aggregate = ArbitrageClass::indeterminate;
      break;
    }
  return c;
}

inline Classification classify_arbitrage(const ActionReport& r, double tol) { return classify_arbitrage(r.action, tol); }

namespace detail {

inline void check_beta(const StatePriceDeflator& beta, const MarketModel& m) {
  if (beta.beta.n_scenarios() != m.n_scenarios() && beta.beta.n_scenarios() != 1)
    throw DimensionError("state price deflator scenario count does not match the market");
  if (beta.beta.n_times() != m.grid().size()) throw DimensionError("state price deflator grid does not match the market");
}

inline double beta_at(const StatePriceDeflator& b, std::size_t s, std::size_t i) {
  return b.beta(b.beta.n_scenarios() == 1 ? 0 : s, i);
}

// Trapezoid int r^x dt along the strategy for one scenario.
inline double strategy_rate_integral(const Strategy& st, const MarketModel& m, std::size_t s, std::size_t off) {
  const auto& g = st.grid();
  double acc = 0.0;
  double prev = m.rx(s, off, st.at(s, 0));
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    const double next = m.rx(s, off + i + 1, st.at(s, i + 1));
    acc += 0.5 * (prev + next) * (g[i + 1] - g[i]);
    prev = next;
  }
  return acc;
}

}  // namespace detail

// Integral route: each step holds the midpoint nominals fixed, so the step
// contributes log(beta D^{x_mid}) increments; plus trapezoid int r^x.
// Endpoint route: log(beta_1 D_1^{x_1} / (beta_0 D_0^{x_0} d01)). For a
// self-financing strategy the two agree up to the discretization of x'.D = 0.
inline ActionReport arbitrage_action(const Strategy& st, const MarketModel& m, const StatePriceDeflator& beta,
                                     const ActionOptions& o = {}) {
  const std::size_t off = strategy_offset(st, m);
  detail::check_beta(beta, m);
  const std::size_t ns = m.n_scenarios(), nt = st.grid().size();
  ActionReport rep;
  rep.tol = o.classify_tol;
  rep.action.assign(ns, 0.0);
  rep.endpoint.assign(ns, 0.0);
  rep.d01.assign(ns, 0.0);
  rep.gap.assign(ns, 0.0);
  if (o.check_self_financing) {
    const auto sf = is_self_financing(st, m, o.self_financing_tol, o.nelson);
    if (!sf.all()) {
      rep.self_financing = false;
      double worst = 0.0;
      for (double d : sf.defect) worst = std::max(worst, d);
      std::ostringstream os;
      os << "strategy is not self-financing (max |x'.D - d[x,D]/dt| = " << worst << ")";
      rep.warnings.push_back(os.str());
    }
  }
  parallel_for(ns, [&](std::size_t s) {
    double sum = 0.0;
    double sign0 = 0.0;
    for (std::size_t i = 0; i + 1 < nt; ++i) {
      const Eigen::VectorXd xm = 0.5 * (st.at(s, i) + st.at(s, i + 1));
      const double a = m.nonzero_Dx(s, off + i, xm), b = m.nonzero_Dx(s, off + i + 1, xm);
      if (sign0 == 0.0) sign0 = a;
      if (a * sign0 < 0 || b * sign0 < 0) {
        std::ostringstream os;
        os << "arbitrage action: D^x changes sign along the strategy (scenario " << s << ", t="
           << m.grid()[off + i + 1] << ")";
        throw SingularityError(os.str());
      }
      sum += std::log(b / a);
    }
    const double b0 = detail::beta_at(beta, s, off), b1 = detail::beta_at(beta, s, off + nt - 1);
    const double ir = detail::strategy_rate_integral(st, m, s, off);
    const double D0 = m.nonzero_Dx(s, off, st.at(s, 0)), D1 = m.nonzero_Dx(s, off + nt - 1, st.at(s, nt - 1));
    if (D0 * D1 < 0) throw SingularityError("arbitrage action: D^x has opposite signs at the endpoints");
    rep.action[s] = sum + std::log(b1 / b0) + ir;
    rep.d01[s] = std::exp(-ir);
    rep.endpoint[s] = std::log(b1 * D1 / (b0 * D0)) + ir;
    rep.gap[s] = rep.action[s] - rep.endpoint[s];
    if (st.backward) {
      // Every term is an oriented integral over time.
      rep.action[s] = -rep.action[s];
      rep.endpoint[s] = -rep.endpoint[s];
      rep.gap[s] = -rep.gap[s];
      rep.d01[s] = 1.0 / rep.d01[s];
    }
  });
  rep.classification = classify_arbitrage(rep.action, o.classify_tol);
  return rep;
}

struct HomotopyReport {
  std::vector<double> d01_first, d01_second;
  double max_d01_gap = 0.0;
  double max_closed_deviation = std::numeric_limits<double>::quiet_NaN();  // |d01 - 1| if both closed
  double max_action_gap = std::numeric_limits<double>::quiet_NaN();        // when a deflator is supplied
  double tol = 0.0;
  bool ok = true;

  nlohmann::json to_json() const {
    auto opt = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    return {{"max_d01_gap", max_d01_gap},
            {"max_closed_deviation", opt(max_closed_deviation)},
            {"max_action_gap", opt(max_action_gap)},
            {"tol", tol},
            {"ok", ok}};
  }
};

// Discount factors of two strategies with shared endpoints; homotopic
// self-financing strategies share d01, closed ones have d01 = 1.
inline HomotopyReport discount_homotopy_check(const Strategy& a, const Strategy& b, const MarketModel& m,
                                              double tol = 1e-6, const StatePriceDeflator* beta = nullptr,
                                              const ActionOptions& o = {}) {
  const std::size_t oa = strategy_offset(a, m), ob = strategy_offset(b, m);
  if (oa != ob || a.grid().size() != b.grid().size()) throw ValidationError("homotopy check: strategies cover different time intervals");
  if (a.backward != b.backward) throw ValidationError("homotopy check: strategies run in opposite directions");
  const std::size_t ns = m.n_scenarios(), nt = a.grid().size();
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i : {std::size_t{0}, nt - 1})
      if ((a.at(s, i) - b.at(s, i)).cwiseAbs().maxCoeff() > 1e-12)
        throw ValidationError("homotopy check: endpoint mismatch at scenario " + std::to_string(s));
  if (o.check_self_financing)
    for (const Strategy* st : {&a, &b})
      if (!is_self_financing(*st, m, o.self_financing_tol, o.nelson).all())
        throw PreconditionError("homotopy check: strategy is not self-financing");
  HomotopyReport rep;
  rep.tol = tol;
  rep.d01_first.resize(ns);
  rep.d01_second.resize(ns);
  const bool closed = a.closed && b.closed;
  if (closed) rep.max_closed_deviation = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    const double dir = a.backward ? -1.0 : 1.0;
    rep.d01_first[s] = std::exp(-dir * detail::strategy_rate_integral(a, m, s, oa));
    rep.d01_second[s] = std::exp(-dir * detail::strategy_rate_integral(b, m, s, ob));
    rep.max_d01_gap = std::max(rep.max_d01_gap, std::abs(rep.d01_first[s] - rep.d01_second[s]));
    if (closed)
      rep.max_closed_deviation = std::max({rep.max_closed_deviation, std::abs(rep.d01_first[s] - 1),
                                           std::abs(rep.d01_second[s] - 1)});
  }
  rep.ok = rep.max_d01_gap <= tol && !(rep.max_closed_deviation > tol);
  if (beta) {
    ActionOptions q = o;
    q.check_self_financing = false;
    const auto ra = arbitrage_action(a, m, *beta, q), rb = arbitrage_action(b, m, *beta, q);
    rep.max_action_gap = 0.0;
    for (std::size_t s = 0; s < ns; ++s)
      rep.max_action_gap = std::max(rep.max_action_gap, std::abs(ra.action[s] - rb.action[s]));
  }
  return rep;
}

// First-order conditions of the infinitesimal utility problem: every asset
// must earn the same total return mu_i = Dlog D^i + r^i.
struct FocReport {
  Eigen::VectorXd x;                                // budget-feasible nominals (projected)
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  Field residual;                                   // (scenario, pair, t)
  std::vector<std::vector<double>> mean, stderr_;   // [pair][t], NaN where unavailable
  double max_abs_mean = 0.0;
  double max_z = 0.0;                               // max |mean| / stderr over available points
};

struct FocOptions {
  NelsonOptions nelson;
  bool prefer_analytic = true;
  double budget_tol = 1e-9;
};

inline FocReport utility_foc_residual(const MarketModel& m, const std::function<double(double)>& u_prime,
                                      const Eigen::VectorXd& x, double w, const FocOptions& o = {}) {
  m.check_x(x);
  if (!(w > 0) || !std::isfinite(w)) throw PreconditionError("utility FOC: budget must be positive and finite");
  const double up = u_prime(w);
  if (!(up > 0) || !std::isfinite(up)) throw PreconditionError("utility FOC: u'(w) must be positive");
  // Project onto {x : D_0^x = w} along D_0 (the initial deflators are shared).
  const Eigen::VectorXd D0 = m.D_vec(0, 0);
  for (std::size_t s = 1; s < m.n_scenarios(); ++s)
    if ((m.D_vec(s, 0) - D0).cwiseAbs().maxCoeff() > 1e-12 * D0.cwiseAbs().maxCoeff())
      throw PreconditionError("utility FOC: initial deflators differ across scenarios");
  FocReport rep;
  rep.x = x;
  if (std::abs(D0.dot(x) - w) > o.budget_tol * std::max(1.0, std::abs(w))) {
    const double n2 = D0.squaredNorm();
    if (!(n2 > 0)) throw PreconditionError("utility FOC: infeasible budget (zero deflators)");
    rep.x = x + ((w - D0.dot(x)) / n2) * D0;
  }
  const Field ld = market_log_drifts(m, o.nelson, o.prefer_analytic);
  const std::size_t ns = m.n_scenarios(), nt = m.grid().size(), N = m.N();
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) rep.pairs.emplace_back(i, j);
  const std::size_t np = rep.pairs.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> v(ns * std::max<std::size_t>(np, 1) * nt, 0.0);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t p = 0; p < np; ++p)
      for (std::size_t t = 0; t < nt; ++t) {
        const auto [i, j] = rep.pairs[p];
        v[(s * np + p) * nt + t] = (ld(s, i, t) + m.r(s, i, t)) - (ld(s, j, t) + m.r(s, j, t));
      }
  rep.residual = Field(m.grid(), ns, std::max<std::size_t>(np, 1), std::move(v));
  rep.mean.assign(np, std::vector<double>(nt, nan));
  rep.stderr_.assign(np, std::vector<double>(nt, nan));
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t t = 0; t < nt; ++t) {
      double sum = 0.0, sq = 0.0;
      std::size_t n = 0;
      for (std::size_t s = 0; s < ns; ++s) {
        const double r = rep.residual(s, p, t);
        if (std::isnan(r)) continue;
        sum += r;
        sq += r * r;
        ++n;
      }
      if (n == 0) continue;
      const double mean = sum / n;
      const double var = n > 1 ? std::max(0.0, (sq - n * mean * mean) / (n - 1)) : 0.0;
      rep.mean[p][t] = mean;
      rep.stderr_[p][t] = std::sqrt(var / n);
      rep.max_abs_mean = std::max(rep.max_abs_mean, std::abs(mean));
      if (rep.stderr_[p][t] > 0) rep.max_z = std::max(rep.max_z, std::abs(mean) / rep.stderr_[p][t]);
    }
  return rep;
}

}  // namespace curvlab
