#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "curvlab/gauges/curve.hpp"
#include "curvlab/gauges/intensity.hpp"
#include "curvlab/paths/ensemble.hpp"

namespace curvlab {

// <pi, phi^{(k)}(tau + .)>: atoms by exact maturity derivatives, polynomial
// kernels by Gauss-Kronrod up to the curve horizon, sampled kernels by trapezoid.
inline double pair_with_curve(const CashflowIntensity& pi, const Curve& c, double tau, int k) {
  double v = 0.0;
  for (const auto& a : pi.atoms) v += a.c * c.derivative(tau + a.a, k + a.k);
  const double H = c.horizon();
  for (const auto& p : pi.polys) {
    auto f = [&](double h) { return poly::eval(p.coeffs, h - p.start) * c.derivative(tau + h, k); };
    const double upper = std::isinf(H) ? H : std::max(p.start, H);
    if (upper > p.start)
      v += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, p.start, upper, 10, 1e-12);
  }
  for (const auto& ker : pi.kernels) {
    const std::size_t M = ker.values.size() - 1;
    double acc = 0.0;
    for (std::size_t m = 0; m <= M; ++m) {
      const double w = (m == 0 || m == M) ? 0.5 : 1.0;
      acc += w * ker.values[m] * c.derivative(tau + ker.start + ker.dh * static_cast<double>(m), k);
    }
    v += acc * ker.dh;
  }
  return v;
}

// P^pi(tau) = <pi, P(tau + .)> / <pi, P(.)>; derivatives are pushed onto the base curve.
class TransformedCurve : public Curve {
 public:
  TransformedCurve(std::shared_ptr<const Curve> base, CashflowIntensity pi)
      : base_(std::move(base)), pi_(std::move(pi)) {
    norm_ = pair_with_curve(pi_, *base_, 0.0, 0);
    if (norm_ == 0.0 || !std::isfinite(norm_))
      throw DomainError("left gauge domain: transform normalisation <pi, P> vanishes or diverges");
  }
  double value(double tau) const override { return pair_with_curve(pi_, *base_, tau, 0) / norm_; }
  double derivative(double tau, int k) const override { return pair_with_curve(pi_, *base_, tau, k) / norm_; }
  double horizon() const override { return base_->horizon(); }
  double normalisation() const noexcept { return norm_; }

 private:
  std::shared_ptr<const Curve> base_;
  CashflowIntensity pi_;
  double norm_;
};

// Term structure surface: one discount curve per (scenario, valuation time).
class TermStructure {
 public:
  TermStructure(TimeGrid grid, std::size_t n_scenarios) : grid_(std::move(grid)), ns_(n_scenarios) {}
  virtual ~TermStructure() = default;

  virtual std::shared_ptr<const Curve> curve(std::size_t s, std::size_t i) const = 0;
  virtual std::string kind() const = 0;

  double discount(std::size_t s, std::size_t i, double tau) const { return curve(s, i)->value(tau); }
  // r = f(tau = 0) = -d/dtau log P at 0.
  virtual double short_rate(std::size_t s, std::size_t i) const {
    const auto c = curve(s, i);
    return -c->derivative(0.0, 1) / c->value(0.0);
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t n_scenarios() const noexcept { return ns_; }

 protected:
  void check(std::size_t s, std::size_t i) const {
    if (s >= ns_ || i >= grid_.size()) throw DimensionError("term structure index out of range");
  }

 private:
  TimeGrid grid_;
  std::size_t ns_;
};

using TermStructurePtr = std::shared_ptr<const TermStructure>;

// Curves from a generator; a constant generator gives a deterministic surface.
class CurveTermStructure : public TermStructure {
 public:
  using Generator = std::function<std::shared_ptr<const Curve>(std::size_t s, std::size_t i)>;
  CurveTermStructure(TimeGrid grid, std::size_t ns, Generator gen, std::string kind = "analytic")
      : TermStructure(std::move(grid), ns), gen_(std::move(gen)), kind_(std::move(kind)) {}

  static std::shared_ptr<CurveTermStructure> constant(TimeGrid grid, std::size_t ns,
                                                      std::shared_ptr<const Curve> c) {
    return std::make_shared<CurveTermStructure>(std::move(grid), ns,
                                                [c](std::size_t, std::size_t) { return c; }, "constant");
  }
  static std::shared_ptr<CurveTermStructure> flat(TimeGrid grid, std::size_t ns, double r) {
    return constant(std::move(grid), ns, ExpPolyCurve::flat(r));
  }

  std::shared_ptr<const Curve> curve(std::size_t s, std::size_t i) const override {
    check(s, i);
    return gen_(s, i);
  }
  std::string kind() const override { return kind_; }

 private:
  Generator gen_;
  std::string kind_;
};

// Bond prices of the Gaussian short-rate model dr = (a - kappa r) dt + b.dW, evaluated
// at the simulated rate r(s, i). kappa = 0 gives ln P = -r tau - a tau^2/2 + |b|^2 tau^3/6.
class AffineShortRateTermStructure : public TermStructure {
 public:
  AffineShortRateTermStructure(PathEnsemble r, double a, double b2, double kappa = 0.0)
      : TermStructure(r.grid(), r.n_scenarios()), r_(std::move(r)), a_(a), b2_(b2), kappa_(kappa) {
    if (r_.n_dims() != 1) throw DimensionError("affine term structure expects a scalar rate path");
    if (b2_ < 0 || kappa_ < 0) throw ValidationError("affine term structure needs |b|^2 >= 0, kappa >= 0");
  }
  std::shared_ptr<const Curve> curve(std::size_t s, std::size_t i) const override {
    check(s, i);
    const double r = r_(s, i);
    if (kappa_ == 0.0) return ExpPolyCurve::exp_poly({0.0, -r, -0.5 * a_, b2_ / 6.0});
    return std::make_shared<VasicekCurve>(r, a_, b2_, kappa_);
  }
  double short_rate(std::size_t s, std::size_t i) const override {
    check(s, i);
    return r_(s, i);
  }
  std::string kind() const override { return "closed-form-gaussian"; }
  const PathEnsemble& rates() const noexcept { return r_; }

 private:
  PathEnsemble r_;
  double a_, b2_, kappa_;
};

// Surface stored on a maturity grid, values laid out [(s * nt + i) * nm + m].
class SampledTermStructure : public TermStructure {
 public:
  SampledTermStructure(TimeGrid grid, std::size_t ns, std::vector<double> maturities, std::vector<double> P)
      : TermStructure(std::move(grid), ns), tau_(std::move(maturities)), P_(std::move(P)) {
    if (tau_.size() < 2) throw ValidationError("sampled term structure needs >= 2 maturities");
    if (tau_.front() != 0.0) throw ValidationError("sampled term structure maturities must start at 0");
    if (P_.size() != ns * this->grid().size() * tau_.size())
      throw DimensionError("sampled term structure value count mismatch");
  }
  std::shared_ptr<const Curve> curve(std::size_t s, std::size_t i) const override {
    check(s, i);
    const std::size_t nm = tau_.size(), o = (s * grid().size() + i) * nm;
    return std::make_shared<SampledCurve>(tau_, std::vector<double>(P_.begin() + o, P_.begin() + o + nm));
  }
  std::string kind() const override { return "sampled"; }
  const std::vector<double>& maturities() const noexcept { return tau_; }

 private:
  std::vector<double> tau_, P_;
};

class TransformedTermStructure : public TermStructure {
 public:
  TransformedTermStructure(TermStructurePtr base, CashflowIntensity pi)
      : TermStructure(base->grid(), base->n_scenarios()), base_(std::move(base)), pi_(std::move(pi)) {}
  std::shared_ptr<const Curve> curve(std::size_t s, std::size_t i) const override {
    check(s, i);
    return std::make_shared<TransformedCurve>(base_->curve(s, i), pi_);
  }
  std::string kind() const override { return "transformed"; }

 private:
  TermStructurePtr base_;
  CashflowIntensity pi_;
};

}  // namespace curvlab
