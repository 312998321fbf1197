#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include "curvlab/gauges/gauge.hpp"
#include "curvlab/paths/nelson.hpp"

namespace curvlab {

// N gauges on one grid/ensemble plus cached short rates r^j and, when known in
// closed form, the mean derivatives of log D^j (NaN where not available).
class MarketModel {
 public:
  MarketModel() = default;

  explicit MarketModel(std::vector<Gauge> gauges, std::optional<Field> log_drift = std::nullopt)
      : gauges_(std::move(gauges)), log_drift_(std::move(log_drift)) {
    if (gauges_.empty()) throw ValidationError("market needs at least one gauge");
    const auto& g0 = gauges_.front();
    for (const auto& g : gauges_) {
      require_same_shape(g0.deflator, g.deflator, "MarketModel gauges");
      if (!g.term_structure) throw ValidationError("market gauge without term structure");
    }
    const std::size_t ns = n_scenarios(), nt = grid().size(), N = gauges_.size();
    std::vector<double> r(ns * N * nt);
    parallel_for(ns, [&](std::size_t s) {
      for (std::size_t j = 0; j < N; ++j)
        for (std::size_t i = 0; i < nt; ++i) r[(s * N + j) * nt + i] = gauges_[j].term_structure->short_rate(s, i);
    });
    r_ = PathEnsemble(grid(), ns, N, std::move(r), g0.deflator.seed());
    if (log_drift_) {
      require_same_shape(g0.deflator, *log_drift_, "MarketModel log drift");
      if (log_drift_->n_dims() != N) throw DimensionError("log drift must have one component per asset");
    }
  }

  std::size_t N() const noexcept { return gauges_.size(); }
  const TimeGrid& grid() const { return gauges_.front().grid(); }
  std::size_t n_scenarios() const { return gauges_.front().n_scenarios(); }
  const std::vector<Gauge>& gauges() const noexcept { return gauges_; }
  const PathEnsemble& short_rates() const noexcept { return r_; }
  const std::optional<Field>& log_drift() const noexcept { return log_drift_; }

  double D(std::size_t s, std::size_t j, std::size_t i) const { return gauges_[j].deflator(s, i); }
  double r(std::size_t s, std::size_t j, std::size_t i) const { return r_(s, j, i); }

  Eigen::VectorXd D_vec(std::size_t s, std::size_t i) const {
    Eigen::VectorXd d(N());
    for (std::size_t j = 0; j < N(); ++j) d[j] = D(s, j, i);
    return d;
  }
  Eigen::VectorXd r_vec(std::size_t s, std::size_t i) const {
    Eigen::VectorXd v(N());
    for (std::size_t j = 0; j < N(); ++j) v[j] = r(s, j, i);
    return v;
  }

  // D^x = sum_j x_j D^j
  double Dx(std::size_t s, std::size_t i, const Eigen::VectorXd& x) const {
    check_x(x);
    double v = 0.0;
    for (std::size_t j = 0; j < N(); ++j) v += x[j] * D(s, j, i);
    return v;
  }

  // r^x = sum_j x_j D^j r^j / D^x
  double rx(std::size_t s, std::size_t i, const Eigen::VectorXd& x) const {
    const double dx = nonzero_Dx(s, i, x);
    double v = 0.0;
    for (std::size_t j = 0; j < N(); ++j) v += x[j] * D(s, j, i) * r(s, j, i);
    return v / dx;
  }

  double nonzero_Dx(std::size_t s, std::size_t i, const Eigen::VectorXd& x) const {
    const double dx = Dx(s, i, x);
    if (dx == 0.0 || !std::isfinite(dx)) {
      std::ostringstream os;
      os << "singular portfolio: D^x = " << dx << " at scenario " << s << ", t=" << grid()[i];
      throw SingularityError(os.str());
    }
    return dx;
  }

  void check_x(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != N()) throw DimensionError("nominal vector length != number of assets");
  }

 private:
  std::vector<Gauge> gauges_;
  PathEnsemble r_;
  std::optional<Field> log_drift_;
};

// Pricing kernel beta > 0 with optional closed-form mean derivative of log beta.
struct StatePriceDeflator {
  PathEnsemble beta;
  std::optional<Field> log_drift;

  StatePriceDeflator() = default;
  explicit StatePriceDeflator(PathEnsemble b, std::optional<Field> ld = std::nullopt)
      : beta(std::move(b)), log_drift(std::move(ld)) {
    for (std::size_t s = 0; s < beta.n_scenarios(); ++s)
      for (std::size_t i = 0; i < beta.n_times(); ++i)
        if (!(beta(s, i) > 0)) {
          std::ostringstream os;
          os << "state price deflator not positive at scenario " << s << ", t=" << beta.grid()[i];
          throw ValidationError(os.str());
        }
    if (log_drift) require_same_shape(beta, *log_drift, "state price deflator log drift");
  }

  static StatePriceDeflator unit(const TimeGrid& g, std::size_t ns) {
    return StatePriceDeflator(PathEnsemble::constant(g, ns, 1, 1.0),
                              Field(g, ns, 1, std::vector<double>(ns * g.size(), 0.0)));
  }
};

// Mean derivatives of log D^j: the closed form if the market carries one,
// otherwise kernel-regression Nelson estimates conditioned on log D^j.
inline Field market_log_drifts(const MarketModel& m, const NelsonOptions& opt = {}, bool prefer_analytic = true) {
  if (prefer_analytic && m.log_drift()) return *m.log_drift();
  const std::size_t ns = m.n_scenarios(), nt = m.grid().size(), N = m.N();
  std::vector<double> v(ns * N * nt);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t i = 0; i < nt; ++i) {
        const double d = m.D(s, j, i);
        if (!(d > 0)) throw DomainError("log drift estimation needs positive deflators");
        v[(s * N + j) * nt + i] = std::log(d);
      }
  const PathEnsemble logD(m.grid(), ns, N, std::move(v));
  return nelson_derivatives(logD, opt).mean;
}

inline Field deflator_log_drift(const StatePriceDeflator& b, const NelsonOptions& opt = {}, bool prefer_analytic = true) {
  if (prefer_analytic && b.log_drift) return *b.log_drift;
  const std::size_t ns = b.beta.n_scenarios(), nt = b.beta.n_times();
  std::vector<double> v(ns * nt);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < nt; ++i) v[s * nt + i] = std::log(b.beta(s, i));
  return nelson_derivatives(PathEnsemble(b.beta.grid(), ns, 1, std::move(v)), opt).mean;
}

// Deterministic asset: log D(t) and r(t) polynomials in t. Bond prices follow
// exactly: ln P(t, t+tau) = -int_t^{t+tau} r.
struct DeterministicAsset {
  std::vector<double> log_deflator;  // coefficients of log D in powers of t
  std::vector<double> rate;          // coefficients of r in powers of t
  std::string label = "asset";
};

inline std::shared_ptr<ExpPolyCurve> deterministic_curve(const std::vector<double>& rate, double t) {
  // -int_t^{t+tau} sum_k c_k u^k du expanded in powers of tau.
  std::vector<double> e(rate.size() + 1, 0.0);
  for (std::size_t k = 0; k < rate.size(); ++k) {
    // (t+tau)^{k+1} - t^{k+1} = sum_{m>=1} C(k+1,m) t^{k+1-m} tau^m
    double binom = 1.0;
    for (std::size_t m = 1; m <= k + 1; ++m) {
      binom = binom * static_cast<double>(k + 2 - m) / static_cast<double>(m);
      e[m] -= rate[k] * binom * std::pow(t, static_cast<double>(k + 1 - m)) / static_cast<double>(k + 1);
    }
  }
  return ExpPolyCurve::exp_poly(std::move(e));
}

inline MarketModel make_deterministic_market(const TimeGrid& grid, const std::vector<DeterministicAsset>& assets,
                                             std::size_t n_scenarios = 1, const GaugeCheck& chk = {}) {
  const std::size_t nt = grid.size(), N = assets.size(), ns = n_scenarios;
  std::vector<Gauge> gauges;
  std::vector<double> drift(ns * N * nt);
  for (std::size_t j = 0; j < N; ++j) {
    const auto& a = assets[j];
    std::vector<double> d(ns * nt);
    const auto dlog = poly::derivative(a.log_deflator);
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t i = 0; i < nt; ++i) {
        d[s * nt + i] = std::exp(poly::eval(a.log_deflator, grid[i]));
        drift[(s * N + j) * nt + i] = poly::eval(dlog, grid[i]);
      }
    std::vector<std::shared_ptr<const Curve>> curves;
    for (std::size_t i = 0; i < nt; ++i) curves.push_back(deterministic_curve(a.rate, grid[i]));
    auto ts = std::make_shared<CurveTermStructure>(
        grid, ns, [curves](std::size_t, std::size_t i) { return curves[i]; }, "deterministic");
    gauges.push_back(make_gauge(PathEnsemble(grid, ns, 1, std::move(d)), ts, a.label, chk));
  }
  return MarketModel(std::move(gauges), Field(grid, ns, N, std::move(drift)));
}

// Every deflator divided by the numeraire portfolio's deflator D^{x_num}.
// Short rates and term structures are unchanged; drifts shift by -Dlog D^{x_num}.
inline MarketModel renormalize_to_numeraire(const MarketModel& m, const Eigen::VectorXd& x_num) {
  m.check_x(x_num);
  const std::size_t ns = m.n_scenarios(), nt = m.grid().size(), N = m.N();
  std::vector<double> num(ns * nt);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < nt; ++i) {
      const double v = m.Dx(s, i, x_num);
      if (!(v > 0)) {
        std::ostringstream os;
        os << "numeraire deflator vanishes or turns negative at scenario " << s << ", t=" << m.grid()[i];
        throw SingularityError(os.str());
      }
      num[s * nt + i] = v;
    }
  std::vector<Gauge> gs;
  for (std::size_t j = 0; j < N; ++j) {
    std::vector<double> d(ns * nt);
    for (std::size_t k = 0; k < ns * nt; ++k) d[k] = m.gauges()[j].deflator.values()[k] / num[k];
    gs.push_back(Gauge{PathEnsemble(m.grid(), ns, 1, std::move(d), m.gauges()[j].deflator.seed()),
                       m.gauges()[j].term_structure, m.gauges()[j].label});
  }
  std::optional<Field> ld;
  if (m.log_drift()) {
    const Field& f = *m.log_drift();
    std::vector<double> v(ns * N * nt);
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t i = 0; i < nt; ++i) {
        double mx = 0.0;
        for (std::size_t j = 0; j < N; ++j) mx += x_num[j] * m.D(s, j, i) * f(s, j, i);
        mx /= num[s * nt + i];
        for (std::size_t j = 0; j < N; ++j) v[(s * N + j) * nt + i] = f(s, j, i) - mx;
      }
    ld = Field(m.grid(), ns, N, std::move(v));
  }
  return MarketModel(std::move(gs), std::move(ld));
}

}  // namespace curvlab
