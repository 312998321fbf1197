#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include "curvlab/error.hpp"

namespace curvlab {

inline constexpr double kDefaultHorizon = 30.0;  // years, used when a curve does not decay

namespace poly {

inline double eval(const std::vector<double>& c, double x) {
  double v = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
  return v;
}

inline std::vector<double> derivative(const std::vector<double>& c) {
  if (c.size() <= 1) return {0.0};
  std::vector<double> d(c.size() - 1);
  for (std::size_t j = 1; j < c.size(); ++j) d[j - 1] = c[j] * static_cast<double>(j);
  return d;
}

inline std::vector<double> add(std::vector<double> a, const std::vector<double>& b) {
  if (a.size() < b.size()) a.resize(b.size(), 0.0);
  for (std::size_t j = 0; j < b.size(); ++j) a[j] += b[j];
  return a;
}

inline std::vector<double> mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

}  // namespace poly

// A discount curve tau -> P(t, t+tau) for one scenario and valuation time.
class Curve {
 public:
  virtual ~Curve() = default;
  virtual double value(double tau) const = 0;

  // k-th maturity derivative. Default: central differences with one Richardson
  // step; one-sided when the stencil would reach negative maturities.
  virtual double derivative(double tau, int k) const {
    if (k == 0) return value(tau);
    auto stencil = [&](double h) {
      double acc = 0.0, binom = 1.0;
      const bool forward = tau - 0.5 * k * h < 0.0;
      for (int j = 0; j <= k; ++j) {
        const double x = forward ? tau + (k - j) * h : tau + (0.5 * k - j) * h;
        acc += ((j % 2) ? -binom : binom) * value(x);
        binom = binom * (k - j) / (j + 1);
      }
      return acc / std::pow(h, k);
    };
    const double h = std::pow(1e-16, 1.0 / (k + 4)) * 4.0;
    const bool forward = tau - 0.5 * k * h < 0.0;
    const double a = stencil(h), b = stencil(0.5 * h);
    // Central stencils are second order, one-sided first order.
    return forward ? 2.0 * b - a : (4.0 * b - a) / 3.0;
  }

  // Upper limit for maturity integrals; +inf when the curve decays fast enough.
  virtual double horizon() const { return kDefaultHorizon; }
};

// Sum of w_k exp(phi_k(tau)) with polynomial exponents. Covers flat curves,
// exp(-a tau - b tau^2) and the Gaussian-rate bond prices; derivatives are exact.
class ExpPolyCurve : public Curve {
 public:
  struct Term {
    double weight;
    std::vector<double> exponent;  // phi(tau) = sum_j exponent[j] tau^j
  };

  explicit ExpPolyCurve(std::vector<Term> terms) : terms_(std::move(terms)) {
    if (terms_.empty()) throw ValidationError("ExpPolyCurve needs at least one term");
  }

  static std::shared_ptr<ExpPolyCurve> flat(double r) {
    return std::make_shared<ExpPolyCurve>(std::vector<Term>{{1.0, {0.0, -r}}});
  }
  static std::shared_ptr<ExpPolyCurve> exp_poly(std::vector<double> exponent, double weight = 1.0) {
    return std::make_shared<ExpPolyCurve>(std::vector<Term>{{weight, std::move(exponent)}});
  }

  double value(double tau) const override {
    double v = 0.0;
    for (const auto& t : terms_) v += t.weight * std::exp(poly::eval(t.exponent, tau));
    return v;
  }

  // d^k/dtau^k [w e^phi] = e^phi B_k with B_0 = w, B_{k+1} = B_k' + phi' B_k.
  double derivative(double tau, int k) const override {
    double v = 0.0;
    for (const auto& t : terms_) {
      std::vector<double> B{t.weight};
      const auto dphi = poly::derivative(t.exponent);
      for (int j = 0; j < k; ++j) B = poly::add(poly::derivative(B), poly::mul(dphi, B));
      v += poly::eval(B, tau) * std::exp(poly::eval(t.exponent, tau));
    }
    return v;
  }

  double horizon() const override {
    for (const auto& t : terms_) {
      std::size_t deg = t.exponent.size();
      while (deg > 0 && t.exponent[deg - 1] == 0.0) --deg;
      if (deg < 2 || !(t.exponent[deg - 1] < 0.0)) return kDefaultHorizon;
    }
    return std::numeric_limits<double>::infinity();
  }

  const std::vector<Term>& terms() const noexcept { return terms_; }

 private:
  std::vector<Term> terms_;
};

// Vasicek bond price for dr = (a - kappa r) dt + b dW with |b|^2 = b2:
// P = exp(lnA - B r), B = (1 - e^{-kappa tau})/kappa.
class VasicekCurve : public Curve {
 public:
  VasicekCurve(double r, double a, double b2, double kappa) : r_(r), a_(a), b2_(b2), k_(kappa) {
    if (!(kappa > 0)) throw ValidationError("VasicekCurve needs kappa > 0");
  }
  double value(double tau) const override {
    const double B = (1.0 - std::exp(-k_ * tau)) / k_;
    const double theta = a_ / k_;
    const double lnA = (theta - b2_ / (2 * k_ * k_)) * (B - tau) - b2_ * B * B / (4 * k_);
    return std::exp(lnA - B * r_);
  }

 private:
  double r_, a_, b2_, k_;
};

// Curve known on a maturity grid: cubic Lagrange interpolation of log P on the
// four nearest nodes, constant forward-rate extrapolation beyond the last node.
class SampledCurve : public Curve {
 public:
  SampledCurve(std::vector<double> tau, std::vector<double> P) : tau_(std::move(tau)) {
    if (tau_.size() < 2 || tau_.size() != P.size()) throw ValidationError("SampledCurve: need >= 2 matching nodes");
    logp_.resize(P.size());
    for (std::size_t m = 0; m < P.size(); ++m) {
      if (!(P[m] > 0)) {
        std::ostringstream os;
        os << "SampledCurve: non-positive P at maturity " << tau_[m];
        throw ValidationError(os.str());
      }
      if (m > 0 && !(tau_[m] > tau_[m - 1])) throw ValidationError("SampledCurve: maturities must increase");
      logp_[m] = std::log(P[m]);
    }
  }

  double value(double tau) const override { return std::exp(log_value(tau)); }
  double horizon() const override { return tau_.back(); }

  double log_value(double tau) const {
    const std::size_t n = tau_.size();
    if (tau >= tau_.back()) {
      const double slope = (logp_[n - 1] - logp_[n - 2]) / (tau_[n - 1] - tau_[n - 2]);
      return logp_[n - 1] + slope * (tau - tau_.back());
    }
    if (tau <= tau_.front()) {
      const double slope = (logp_[1] - logp_[0]) / (tau_[1] - tau_[0]);
      return logp_[0] + slope * (tau - tau_.front());
    }
    const std::size_t hi = static_cast<std::size_t>(std::upper_bound(tau_.begin(), tau_.end(), tau) - tau_.begin());
    const std::size_t m = std::min<std::size_t>(n, 4);
    std::size_t lo = hi >= 2 ? hi - 2 : 0;
    lo = std::min(lo, n - m);
    double v = 0.0;
    for (std::size_t i = lo; i < lo + m; ++i) {
      double l = 1.0;
      for (std::size_t j = lo; j < lo + m; ++j)
        if (j != i) l *= (tau - tau_[j]) / (tau_[i] - tau_[j]);
      v += l * logp_[i];
    }
    return v;
  }

  const std::vector<double>& maturities() const noexcept { return tau_; }

 private:
  std::vector<double> tau_, logp_;
};

}  // namespace curvlab
