#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "curvlab/error.hpp"

namespace curvlab {

// One asset of the Ito market: dS = S (alpha dt + sigma.dW), dr = (a - kappa r) dt + b.dW.
struct AssetSpec {
  double alpha = 0.0;
  std::vector<double> sigma;  // K loadings
  double a = 0.0;
  std::vector<double> b;      // K loadings
  double S0 = 1.0;
  double r0 = 0.0;
  std::string label;
};

// Zero-curvature targets. C1_t = c0 + c1 t; C2 is either the volatility term
// sigma.W/(2t) + b.W forced by common loadings, or identically zero.
struct Calibration {
  enum class C2Mode { Implied, Zero };
  double c0 = 0.0;
  double c1 = 0.0;
  C2Mode c2 = C2Mode::Implied;
};

struct ItoModel {
  std::vector<AssetSpec> assets;
  std::size_t K = 1;
  double kappa = 0.0;                      // rate mean reversion, shared
  std::optional<Calibration> calibration;  // set by calibrate_arbitrage_free

  std::size_t N() const noexcept { return assets.size(); }

  void validate() const {
    if (assets.empty()) throw ValidationError("Ito model needs at least one asset");
    if (K < 1) throw ValidationError("Ito model needs K >= 1 Brownian factors");
    if (!(kappa >= 0) || !std::isfinite(kappa)) throw ValidationError("Ito model: kappa must be finite and >= 0");
    for (std::size_t j = 0; j < N(); ++j) {
      const auto& a = assets[j];
      std::ostringstream os;
      os << "asset " << j;
      if (a.sigma.size() != K || a.b.size() != K)
        throw DimensionError(os.str() + ": sigma and b need K = " + std::to_string(K) + " loadings");
      bool finite = std::isfinite(a.alpha) && std::isfinite(a.a) && std::isfinite(a.r0) && std::isfinite(a.S0);
      for (std::size_t k = 0; k < K; ++k) finite = finite && std::isfinite(a.sigma[k]) && std::isfinite(a.b[k]);
      if (!finite) throw ValidationError(os.str() + ": non-finite parameter");
      if (!(a.S0 > 0)) throw ValidationError(os.str() + ": S0 must be > 0");
    }
  }
};

inline double squared_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return s;
}

// Adjusts alpha_j and a_j so that Dlog S^j + r^j = C1 + C2 for every asset:
// alpha_j = c0 + |sigma|^2/2 - r0_j and a_j = c1. Needs identical loadings
// across assets and kappa = 0; otherwise the conditions cannot hold for all x.
inline ItoModel calibrate_arbitrage_free(ItoModel m, const Calibration& c = {}) {
  m.validate();
  if (!std::isfinite(c.c0) || !std::isfinite(c.c1)) throw ValidationError("calibration: C1 coefficients must be finite");
  if (m.kappa != 0.0) throw PreconditionError("zero-curvature calibration unsolvable: mean reversion kappa must be 0");
  const auto& s0 = m.assets.front().sigma;
  const auto& b0 = m.assets.front().b;
  for (std::size_t j = 1; j < m.N(); ++j)
    if (m.assets[j].sigma != s0 || m.assets[j].b != b0)
      throw PreconditionError("zero-curvature calibration unsolvable: volatility loadings of asset " +
                              std::to_string(j) + " differ from asset 0, so C2 would depend on x");
  if (c.c2 == Calibration::C2Mode::Zero && (squared_norm(s0) > 0 || squared_norm(b0) > 0))
    throw PreconditionError("zero-curvature calibration unsolvable: C2 = 0 requires sigma = b = 0");
  const double half = 0.5 * squared_norm(s0);
  for (auto& a : m.assets) {
    a.alpha = c.c0 + half - a.r0;
    a.a = c.c1;
  }
  m.calibration = c;
  return m;
}

// Negative control: alpha_j += delta, everything else (including an attached
// calibration) unchanged.
inline ItoModel inject_arbitrage(ItoModel m, std::size_t asset, double delta) {
  if (asset >= m.N()) throw ValidationError("inject_arbitrage: asset index " + std::to_string(asset) + " out of range");
  if (!std::isfinite(delta)) throw ValidationError("inject_arbitrage: delta must be finite");
  m.assets[asset].alpha += delta;
  return m;
}

}  // namespace curvlab
