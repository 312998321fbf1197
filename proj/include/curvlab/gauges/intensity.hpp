#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "curvlab/error.hpp"
#include "curvlab/gauges/curve.hpp"

namespace curvlab {

// c * (-1)^k * delta^{(k)}(. - a). Its pairing with a test function phi is c * phi^{(k)}(a).
struct Atom {
  int k = 0;
  double a = 0.0;
  double c = 0.0;
};

// p(t - start) * Theta(t - start), coefficients in powers of (t - start).
struct PolyTerm {
  double start = 0.0;
  std::vector<double> coeffs;
};

// Density f sampled at start + m*dh, m = 0..M, zero outside [start, start + M dh].
struct SampledKernel {
  double start = 0.0;
  double dh = 0.0;
  std::vector<double> values;
  double end() const { return start + dh * static_cast<double>(values.size() - 1); }
};

// Element of the finite subalgebra of compactly described distributions on [0, inf):
// derivative-of-delta atoms, exact polynomial kernels and sampled densities.
class CashflowIntensity {
 public:
  static constexpr int kDefaultMaxOrder = 4;

  std::vector<Atom> atoms;
  std::vector<PolyTerm> polys;
  std::vector<SampledKernel> kernels;
  std::optional<int> ladder;  // set iff this element is exactly [n]

  static CashflowIntensity delta(double a = 0.0, double c = 1.0) { return atom(0, a, c); }

  static CashflowIntensity atom(int k, double a, double c) {
    CashflowIntensity p;
    p.atoms.push_back({k, a, c});
    p.validate();
    return p;
  }

  // Unsigned step Theta(t - start).
  static CashflowIntensity heaviside(double start = 0.0) {
    CashflowIntensity p;
    p.polys.push_back({start, {1.0}});
    p.validate();
    return p;
  }

  // Signed ladder: [n] = (-1)^n t^{n-1}/(n-1)! Theta for n > 0, (-1)^{|n|} delta^{(|n|)} for n < 0,
  // [0] = delta. With this sign [m]*[n] = [m+n] holds for all integers.
  static CashflowIntensity ladder_element(int n) {
    CashflowIntensity p;
    if (n <= 0) {
      p.atoms.push_back({-n, 0.0, 1.0});
    } else {
      std::vector<double> c(static_cast<std::size_t>(n), 0.0);
      c.back() = ((n % 2) ? -1.0 : 1.0) / std::tgamma(static_cast<double>(n));
      p.polys.push_back({0.0, std::move(c)});
    }
    p.ladder = n;
    p.validate();
    return p;
  }

  static CashflowIntensity sampled(double start, double dh, std::vector<double> values) {
    CashflowIntensity p;
    p.kernels.push_back({start, dh, std::move(values)});
    p.validate();
    return p;
  }

  bool empty() const { return atoms.empty() && polys.empty() && kernels.empty(); }

  void validate(int max_order = kDefaultMaxOrder) const {
    if (empty()) throw ValidationError("cashflow intensity has neither atoms nor kernel");
    for (const auto& a : atoms) {
      if (a.k < 0 || a.a < 0 || !std::isfinite(a.a) || !std::isfinite(a.c))
        throw ValidationError("cashflow intensity atom needs order >= 0, location >= 0, finite coefficient");
      if (a.k > max_order) {
        std::ostringstream os;
        os << "delta derivative order " << a.k << " exceeds configured maximum " << max_order;
        throw ValidationError(os.str());
      }
    }
    for (const auto& p : polys)
      if (p.start < 0 || p.coeffs.empty()) throw ValidationError("polynomial kernel needs start >= 0 and coefficients");
    for (const auto& k : kernels)
      if (k.start < 0 || !(k.dh > 0) || k.values.size() < 2)
        throw ValidationError("sampled kernel needs start >= 0, dh > 0 and >= 2 values");
    if (ladder && !same_as(ladder_element_raw(*ladder), 1e-15))
      throw ValidationError("ladder index inconsistent with atoms/kernel");
  }

  // Merge equal atoms and polynomial supports, drop exact zeros.
  CashflowIntensity& canonicalize() {
    std::vector<Atom> merged;
    std::sort(atoms.begin(), atoms.end(), [](const Atom& x, const Atom& y) {
      return x.a != y.a ? x.a < y.a : x.k < y.k;
    });
    for (const auto& a : atoms) {
      if (!merged.empty() && merged.back().k == a.k && std::abs(merged.back().a - a.a) <= 1e-12 * (1 + a.a))
        merged.back().c += a.c;
      else
        merged.push_back(a);
    }
    merged.erase(std::remove_if(merged.begin(), merged.end(), [](const Atom& a) { return a.c == 0.0; }),
                 merged.end());
    atoms = std::move(merged);

    std::vector<PolyTerm> mp;
    std::sort(polys.begin(), polys.end(), [](const PolyTerm& x, const PolyTerm& y) { return x.start < y.start; });
    for (auto& p : polys) {
      if (!mp.empty() && std::abs(mp.back().start - p.start) <= 1e-12 * (1 + p.start))
        mp.back().coeffs = poly::add(mp.back().coeffs, p.coeffs);
      else
        mp.push_back(p);
    }
    for (auto& p : mp)
      while (p.coeffs.size() > 1 && p.coeffs.back() == 0.0) p.coeffs.pop_back();
    mp.erase(std::remove_if(mp.begin(), mp.end(),
                            [](const PolyTerm& p) { return p.coeffs.size() == 1 && p.coeffs[0] == 0.0; }),
             mp.end());
    polys = std::move(mp);
    if (ladder && !same_as(ladder_element_raw(*ladder), 1e-15)) ladder.reset();
    if (!ladder) detect_ladder();
    return *this;
  }

  // Structural equality within a relative coefficient tolerance.
  bool same_as(const CashflowIntensity& o, double tol) const {
    auto close = [tol](double x, double y) { return std::abs(x - y) <= tol * std::max({1.0, std::abs(x), std::abs(y)}); };
    if (atoms.size() != o.atoms.size() || polys.size() != o.polys.size() || kernels.size() != o.kernels.size())
      return false;
    for (std::size_t i = 0; i < atoms.size(); ++i)
      if (atoms[i].k != o.atoms[i].k || !close(atoms[i].a, o.atoms[i].a) || !close(atoms[i].c, o.atoms[i].c))
        return false;
    for (std::size_t i = 0; i < polys.size(); ++i) {
      if (!close(polys[i].start, o.polys[i].start)) return false;
      const std::size_t n = std::max(polys[i].coeffs.size(), o.polys[i].coeffs.size());
      for (std::size_t j = 0; j < n; ++j) {
        const double x = j < polys[i].coeffs.size() ? polys[i].coeffs[j] : 0.0;
        const double y = j < o.polys[i].coeffs.size() ? o.polys[i].coeffs[j] : 0.0;
        if (!close(x, y)) return false;
      }
    }
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      const auto &a = kernels[i], &b = o.kernels[i];
      if (!close(a.start, b.start) || !close(a.dh, b.dh) || a.values.size() != b.values.size()) return false;
      for (std::size_t j = 0; j < a.values.size(); ++j)
        if (!close(a.values[j], b.values[j])) return false;
    }
    return true;
  }

  // If this is c*[n] for some scalar c != 0, returns (n, c).
  std::optional<std::pair<int, double>> as_scaled_ladder() const {
    if (!kernels.empty()) return std::nullopt;
    if (atoms.size() == 1 && polys.empty() && atoms[0].a == 0.0 && atoms[0].c != 0.0)
      return std::pair{-atoms[0].k, atoms[0].c};
    if (atoms.empty() && polys.size() == 1 && polys[0].start == 0.0) {
      const auto& c = polys[0].coeffs;
      for (std::size_t j = 0; j + 1 < c.size(); ++j)
        if (c[j] != 0.0) return std::nullopt;
      if (c.back() == 0.0) return std::nullopt;
      const int n = static_cast<int>(c.size());
      const double unit = ((n % 2) ? -1.0 : 1.0) / std::tgamma(static_cast<double>(n));
      return std::pair{n, c.back() / unit};
    }
    return std::nullopt;
  }

 private:
  static CashflowIntensity ladder_element_raw(int n) {
    CashflowIntensity p;
    if (n <= 0) {
      p.atoms.push_back({-n, 0.0, 1.0});
    } else {
      std::vector<double> c(static_cast<std::size_t>(n), 0.0);
      c.back() = ((n % 2) ? -1.0 : 1.0) / std::tgamma(static_cast<double>(n));
      p.polys.push_back({0.0, std::move(c)});
    }
    return p;
  }

  void detect_ladder() {
    if (auto s = as_scaled_ladder(); s && std::abs(s->second - 1.0) <= 1e-15) ladder = s->first;
  }
};

inline CashflowIntensity operator*(double s, CashflowIntensity p) {
  for (auto& a : p.atoms) a.c *= s;
  for (auto& q : p.polys)
    for (auto& c : q.coeffs) c *= s;
  for (auto& k : p.kernels)
    for (auto& v : k.values) v *= s;
  p.ladder.reset();
  if (s == 0.0) {
    p.atoms = {{0, 0.0, 0.0}};
    p.polys.clear();
    p.kernels.clear();
    return p;
  }
  return p.canonicalize();
}

inline CashflowIntensity operator+(CashflowIntensity a, const CashflowIntensity& b) {
  a.atoms.insert(a.atoms.end(), b.atoms.begin(), b.atoms.end());
  a.polys.insert(a.polys.end(), b.polys.begin(), b.polys.end());
  a.kernels.insert(a.kernels.end(), b.kernels.begin(), b.kernels.end());
  a.ladder.reset();
  return a.canonicalize();
}

namespace detail {

// delta^{(m)} with raw coefficient v is the atom with coefficient v (-1)^m.
inline Atom delta_term(int m, double loc, double v) { return {m, loc, (m % 2) ? -v : v}; }

inline double factorial(int n) { return std::tgamma(static_cast<double>(n) + 1.0); }

inline void check_order(int k, int max_order) {
  if (k > max_order) {
    std::ostringstream os;
    os << "convolution produces delta derivative of order " << k << " beyond configured maximum " << max_order;
    throw DomainError(os.str());
  }
}

// c(-1)^k delta^{(k)}_a * p Theta_s = c(-1)^k [p^{(k)} Theta_{s+a} + sum_{j<k} p^{(j)}(0) delta^{(k-1-j)}_{s+a}]
inline void atom_poly(const Atom& at, const PolyTerm& p, CashflowIntensity& out, int max_order) {
  const double sign = (at.k % 2) ? -at.c : at.c;
  std::vector<double> d = p.coeffs;
  const double loc = p.start + at.a;
  for (int j = 0; j < at.k; ++j) {
    const int m = at.k - 1 - j;
    check_order(m, max_order);
    out.atoms.push_back(delta_term(m, loc, sign * d[0]));
    d = poly::derivative(d);
  }
  for (auto& c : d) c *= sign;
  out.polys.push_back({loc, std::move(d)});
}

inline PolyTerm poly_poly(const PolyTerm& p, const PolyTerm& q) {
  PolyTerm r{p.start + q.start, std::vector<double>(p.coeffs.size() + q.coeffs.size(), 0.0)};
  for (std::size_t a = 0; a < p.coeffs.size(); ++a)
    for (std::size_t b = 0; b < q.coeffs.size(); ++b)
      r.coeffs[a + b + 1] += p.coeffs[a] * q.coeffs[b] * factorial(static_cast<int>(a)) *
                             factorial(static_cast<int>(b)) / factorial(static_cast<int>(a + b + 1));
  return r;
}

// Trapezoid-weighted discrete convolution; both kernels must share dh.
inline SampledKernel sampled_sampled(const SampledKernel& f, const SampledKernel& g) {
  if (std::abs(f.dh - g.dh) > 1e-12 * f.dh)
    throw DomainError("sampled kernels with different spacing cannot be convolved");
  const std::size_t M1 = f.values.size() - 1, M2 = g.values.size() - 1;
  SampledKernel r{f.start + g.start, f.dh, std::vector<double>(M1 + M2 + 1, 0.0)};
  for (std::size_t n = 0; n <= M1 + M2; ++n) {
    const std::size_t lo = n > M2 ? n - M2 : 0, hi = std::min(n, M1);
    if (hi <= lo) continue;
    double acc = 0.0;
    for (std::size_t i = lo; i <= hi; ++i) {
      const double w = (i == lo || i == hi) ? 0.5 : 1.0;
      acc += w * f.values[i] * g.values[n - i];
    }
    r.values[n] = acc * f.dh;
  }
  return r;
}

// j-th derivative of a sampled kernel on its own grid (second-order differences).
inline std::vector<double> sampled_diff(const std::vector<double>& v, double dh) {
  const std::size_t n = v.size();
  std::vector<double> d(n);
  if (n == 2) {
    d[0] = d[1] = (v[1] - v[0]) / dh;
    return d;
  }
  d[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * dh);
  d[n - 1] = (3 * v[n - 1] - 4 * v[n - 2] + v[n - 3]) / (2 * dh);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (v[i + 1] - v[i - 1]) / (2 * dh);
  return d;
}

// c(-1)^k delta^{(k)}_a * f chi_[s,e] = c(-1)^k [f^{(k)} chi + sum_{j<k} (f^{(j)}(s) delta^{(k-1-j)}_s - f^{(j)}(e) delta^{(k-1-j)}_e)], shifted by a.
inline void atom_sampled(const Atom& at, const SampledKernel& f, CashflowIntensity& out, int max_order) {
  const double sign = (at.k % 2) ? -at.c : at.c;
  std::vector<double> d = f.values;
  const double s = f.start + at.a, e = f.end() + at.a;
  for (int j = 0; j < at.k; ++j) {
    const int m = at.k - 1 - j;
    check_order(m, max_order);
    out.atoms.push_back(delta_term(m, s, sign * d.front()));
    out.atoms.push_back(delta_term(m, e, -sign * d.back()));
    d = sampled_diff(d, f.dh);
  }
  for (auto& v : d) v *= sign;
  out.kernels.push_back({s, f.dh, std::move(d)});
}

// f chi_[s,e] * q Theta_u: sampled on [s+u, e+u], polynomial tail from e+u on.
inline void sampled_poly(const SampledKernel& f, const PolyTerm& q, CashflowIntensity& out) {
  const std::size_t M = f.values.size() - 1;
  SampledKernel body{f.start + q.start, f.dh, std::vector<double>(M + 1, 0.0)};
  for (std::size_t n = 1; n <= M; ++n) {
    double acc = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      acc += w * f.values[i] * poly::eval(q.coeffs, static_cast<double>(n - i) * f.dh);
    }
    body.values[n] = acc * f.dh;
  }
  // Tail in v = t - (e + u): q(v + (e - h)) expanded in powers of v, moments of f.
  const std::size_t deg = q.coeffs.size();
  std::vector<double> tail(deg, 0.0);
  for (std::size_t a = 0; a < deg; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      double mom = 0.0;
      for (std::size_t i = 0; i <= M; ++i) {
        const double w = (i == 0 || i == M) ? 0.5 : 1.0;
        mom += w * f.values[i] * std::pow(static_cast<double>(M - i) * f.dh, static_cast<double>(a - b));
      }
      const double binom = factorial(static_cast<int>(a)) /
                           (factorial(static_cast<int>(b)) * factorial(static_cast<int>(a - b)));
      tail[b] += q.coeffs[a] * binom * mom * f.dh;
    }
  }
  out.kernels.push_back(std::move(body));
  out.polys.push_back({f.end() + q.start, std::move(tail)});
}

}  // namespace detail

// Convolution in the implemented subalgebra.
inline CashflowIntensity convolve(const CashflowIntensity& p, const CashflowIntensity& q,
                                  int max_order = CashflowIntensity::kDefaultMaxOrder) {
  p.validate(max_order);
  q.validate(max_order);
  CashflowIntensity r;
  for (const auto& a : p.atoms) {
    for (const auto& b : q.atoms) {
      detail::check_order(a.k + b.k, max_order);
      r.atoms.push_back({a.k + b.k, a.a + b.a, a.c * b.c});
    }
    for (const auto& pq : q.polys) detail::atom_poly(a, pq, r, max_order);
    for (const auto& k : q.kernels) detail::atom_sampled(a, k, r, max_order);
  }
  for (const auto& pp : p.polys) {
    for (const auto& b : q.atoms) detail::atom_poly(b, pp, r, max_order);
    for (const auto& pq : q.polys) r.polys.push_back(detail::poly_poly(pp, pq));
    for (const auto& k : q.kernels) detail::sampled_poly(k, pp, r);
  }
  for (const auto& kp : p.kernels) {
    for (const auto& b : q.atoms) detail::atom_sampled(b, kp, r, max_order);
    for (const auto& pq : q.polys) detail::sampled_poly(kp, pq, r);
    for (const auto& k : q.kernels) r.kernels.push_back(detail::sampled_sampled(kp, k));
  }
  r.canonicalize();
  if (r.empty()) r.atoms.push_back({0, 0.0, 0.0});
  return r;
}

// Closed-form inverse within the scalar multiples of the ladder: (c[n])^{-1} = (1/c)[-n].
inline CashflowIntensity invert(const CashflowIntensity& p) {
  const auto s = p.as_scaled_ladder();
  if (!s) throw DomainError("not invertible in the implemented subalgebra");
  auto r = CashflowIntensity::ladder_element(-s->first);
  return s->second == 1.0 ? r : (1.0 / s->second) * r;
}

// sum_{s<T} g delta_s + (1+g) delta_T
inline CashflowIntensity coupon_bond_intensity(double coupon, int maturity_years) {
  if (maturity_years < 1) throw ValidationError("coupon bond maturity must be >= 1 year");
  CashflowIntensity p;
  for (int s = 1; s < maturity_years; ++s) p.atoms.push_back({0, static_cast<double>(s), coupon});
  p.atoms.push_back({0, static_cast<double>(maturity_years), 1.0 + coupon});
  p.canonicalize();
  p.validate();
  return p;
}

inline nlohmann::json to_json(const CashflowIntensity& p) {
  nlohmann::json j;
  j["atoms"] = nlohmann::json::array();
  for (const auto& a : p.atoms) j["atoms"].push_back({{"k", a.k}, {"a", a.a}, {"c", a.c}});
  if (!p.polys.empty()) {
    j["polys"] = nlohmann::json::array();
    for (const auto& q : p.polys) j["polys"].push_back({{"start", q.start}, {"coeffs", q.coeffs}});
  }
  if (p.kernels.size() == 1) {
    const auto& k = p.kernels[0];
    j["kernel"] = {{"h", k.start}, {"dh", k.dh}, {"values", k.values}};
  } else if (!p.kernels.empty()) {
    j["kernels"] = nlohmann::json::array();
    for (const auto& k : p.kernels) j["kernels"].push_back({{"h", k.start}, {"dh", k.dh}, {"values", k.values}});
  }
  if (p.ladder) j["ladder"] = *p.ladder;
  return j;
}

inline CashflowIntensity intensity_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"atoms", "polys", "kernel", "kernels", "ladder"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw InputError("cashflow intensity: unknown key '" + key + "'");
  try {
    if (j.contains("ladder") && !j.contains("atoms") && !j.contains("polys") && !j.contains("kernel"))
      return CashflowIntensity::ladder_element(j.at("ladder").get<int>());
    CashflowIntensity p;
    if (j.contains("atoms"))
      for (const auto& a : j.at("atoms")) p.atoms.push_back({a.at("k").get<int>(), a.at("a").get<double>(), a.at("c").get<double>()});
    if (j.contains("polys"))
      for (const auto& q : j.at("polys")) p.polys.push_back({q.at("start").get<double>(), q.at("coeffs").get<std::vector<double>>()});
    auto kern = [&](const nlohmann::json& k) {
      p.kernels.push_back({k.at("h").get<double>(), k.at("dh").get<double>(), k.at("values").get<std::vector<double>>()});
    };
    if (j.contains("kernel")) kern(j.at("kernel"));
    if (j.contains("kernels"))
      for (const auto& k : j.at("kernels")) kern(k);
    if (j.contains("ladder")) p.ladder = j.at("ladder").get<int>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("cashflow intensity: ") + e.what());
  }
}

}  // namespace curvlab
