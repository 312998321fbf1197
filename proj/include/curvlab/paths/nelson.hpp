#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "curvlab/parallel.hpp"
#include "curvlab/paths/ensemble.hpp"

namespace curvlab {

struct NelsonOptions {
  std::size_t window = 1;           // difference quotient over `window` grid steps
  std::optional<double> bandwidth;  // kernel bandwidth in state units; Silverman if empty
  std::size_t min_scenarios = 1000;
  std::size_t bins = 512;           // 0 = exact O(n^2) regression
  // State on which both derivatives are conditioned. Null: the component itself.
  // One dimension is broadcast to every component of Q.
  const PathEnsemble* conditioning = nullptr;
  std::vector<std::size_t> times;  // restrict to these grid indices; empty = all
};

// Forward/backward/mean conditional drifts per scenario at one grid time.
struct NelsonPoint {
  std::vector<double> forward, backward, mean;  // NaN where not available
  double bandwidth = 0.0;
};

struct NelsonEstimate {
  Field forward, backward, mean;
  std::vector<double> bandwidths;  // per (time, dim), time fastest; NaN if unused
  std::size_t window = 1;
  double bandwidth = std::numeric_limits<double>::quiet_NaN();  // fixed value if requested
};

inline double silverman_bandwidth(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / std::max(1.0, n - 1.0));
  return 1.06 * sd * std::pow(n, -0.2);
}

// Local-linear Gaussian-kernel regression of y on x, evaluated at every x.
// h <= 0 means "no spread in x": the fit degenerates to the sample mean.
inline std::vector<double> local_linear_fit(const std::vector<double>& x,
                                            const std::vector<double>& y, double h,
                                            std::size_t bins) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(n);
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  const double lo = *mn, hi = *mx;
  if (!(h > 0) || !(hi > lo)) {
    std::fill(out.begin(), out.end(), ybar);
    return out;
  }
  const double cut = 6.0 * h;
  auto solve = [&](double S0, double S1, double S2, double T0, double T1, double& slope) {
    const double det = S0 * S2 - S1 * S1;
    if (S0 <= 0) {
      slope = 0.0;
      return ybar;
    }
    if (det <= 1e-12 * S0 * S2) {
      slope = 0.0;
      return T0 / S0;
    }
    slope = (S0 * T1 - S1 * T0) / det;
    return (S2 * T0 - S1 * T1) / det;
  };

  if (bins == 0) {
    for (std::size_t a = 0; a < n; ++a) {
      double S0 = 0, S1 = 0, S2 = 0, T0 = 0, T1 = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const double u = x[b] - x[a];
        if (std::abs(u) > cut) continue;
        const double k = std::exp(-0.5 * (u / h) * (u / h));
        S0 += k; S1 += k * u; S2 += k * u * u; T0 += k * y[b]; T1 += k * u * y[b];
      }
      double slope;
      out[a] = solve(S0, S1, S2, T0, T1, slope);
    }
    return out;
  }

  // Exact per-bin moments; the kernel is evaluated at bin centres.
  const std::size_t G = bins;
  const double w = (hi - lo) / static_cast<double>(G);
  std::vector<double> c(G), cnt(G, 0.0), sx(G, 0.0), sxx(G, 0.0), sy(G, 0.0), sxy(G, 0.0);
  for (std::size_t b = 0; b < G; ++b) c[b] = lo + (static_cast<double>(b) + 0.5) * w;
  std::vector<std::size_t> bin_of(n);
  for (std::size_t a = 0; a < n; ++a) {
    auto b = static_cast<std::size_t>((x[a] - lo) / w);
    b = std::min(b, G - 1);
    bin_of[a] = b;
    cnt[b] += 1; sx[b] += x[a]; sxx[b] += x[a] * x[a]; sy[b] += y[a]; sxy[b] += x[a] * y[a];
  }
  std::vector<double> fit(G), slope(G);
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(cut / w));
  for (std::size_t e = 0; e < G; ++e) {
    const double x0 = c[e];
    double S0 = 0, S1 = 0, S2 = 0, T0 = 0, T1 = 0;
    const std::ptrdiff_t b0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(e) - reach);
    const std::ptrdiff_t b1 = std::min<std::ptrdiff_t>(G - 1, static_cast<std::ptrdiff_t>(e) + reach);
    for (std::ptrdiff_t b = b0; b <= b1; ++b) {
      if (cnt[b] == 0) continue;
      const double u = (c[b] - x0) / h;
      const double k = std::exp(-0.5 * u * u);
      S0 += k * cnt[b];
      S1 += k * (sx[b] - x0 * cnt[b]);
      S2 += k * (sxx[b] - 2 * x0 * sx[b] + x0 * x0 * cnt[b]);
      T0 += k * sy[b];
      T1 += k * (sxy[b] - x0 * sy[b]);
    }
    fit[e] = solve(S0, S1, S2, T0, T1, slope[e]);
  }
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t b = bin_of[a];
    out[a] = fit[b] + slope[b] * (x[a] - c[b]);
  }
  return out;
}

namespace detail {

inline const PathEnsemble& nelson_state(const PathEnsemble& Q, const NelsonOptions& o,
                                        std::size_t& state_dim, std::size_t d) {
  if (!o.conditioning) {
    state_dim = d;
    return Q;
  }
  require_same_shape(Q, *o.conditioning, "nelson_derivatives conditioning");
  const std::size_t cd = o.conditioning->n_dims();
  if (cd != 1 && cd != Q.n_dims())
    throw DimensionError("nelson_derivatives: conditioning must have 1 or n_dims(Q) components");
  state_dim = cd == 1 ? 0 : d;
  return *o.conditioning;
}

inline void nelson_validate(const PathEnsemble& Q, const NelsonOptions& o) {
  if (Q.n_scenarios() < o.min_scenarios) {
    std::ostringstream os;
    os << "nelson_derivatives: " << Q.n_scenarios() << " scenarios < required minimum "
       << o.min_scenarios;
    throw ValidationError(os.str());
  }
  if (o.bandwidth && !(*o.bandwidth > 0)) throw ValidationError("nelson_derivatives: bandwidth must be > 0");
  if (o.window < 1) throw ValidationError("nelson_derivatives: window must be >= 1");
}

}  // namespace detail

// Conditional drifts of component d at grid index i, conditioned on the current state.
inline NelsonPoint nelson_at(const PathEnsemble& Q, std::size_t d, std::size_t i,
                             const NelsonOptions& o = {}) {
  detail::nelson_validate(Q, o);
  std::size_t sd = 0;
  const PathEnsemble& X = detail::nelson_state(Q, o, sd, d);
  const std::size_t ns = Q.n_scenarios(), nt = Q.n_times(), w = o.window;
  const auto& g = Q.grid();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  NelsonPoint p;
  p.forward.assign(ns, nan);
  p.backward.assign(ns, nan);
  p.mean.assign(ns, nan);
  std::vector<double> x(ns), y(ns);
  for (std::size_t s = 0; s < ns; ++s) x[s] = X(s, sd, i);
  p.bandwidth = o.bandwidth ? *o.bandwidth : silverman_bandwidth(x);
  if (i + w < nt) {
    const double h = g[i + w] - g[i];
    for (std::size_t s = 0; s < ns; ++s) y[s] = (Q(s, d, i + w) - Q(s, d, i)) / h;
    p.forward = local_linear_fit(x, y, p.bandwidth, o.bins);
  }
  if (i >= w) {
    const double h = g[i] - g[i - w];
    for (std::size_t s = 0; s < ns; ++s) y[s] = (Q(s, d, i) - Q(s, d, i - w)) / h;
    p.backward = local_linear_fit(x, y, p.bandwidth, o.bins);
  }
  for (std::size_t s = 0; s < ns; ++s) p.mean[s] = 0.5 * (p.forward[s] + p.backward[s]);
  return p;
}

inline NelsonEstimate nelson_derivatives(const PathEnsemble& Q, const NelsonOptions& o = {}) {
  detail::nelson_validate(Q, o);
  const std::size_t ns = Q.n_scenarios(), nd = Q.n_dims(), nt = Q.n_times();
  NelsonEstimate e;
  e.window = o.window;
  if (o.bandwidth) e.bandwidth = *o.bandwidth;
  e.forward = Field::unavailable(Q.grid(), ns, nd);
  e.backward = Field::unavailable(Q.grid(), ns, nd);
  e.mean = Field::unavailable(Q.grid(), ns, nd);
  e.bandwidths.assign(nt * nd, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> idx = o.times;
  if (idx.empty())
    for (std::size_t i = 0; i < nt; ++i) idx.push_back(i);
  for (std::size_t i : idx)
    if (i >= nt) throw DimensionError("nelson_derivatives: requested time index out of range");
  parallel_for(idx.size() * nd, [&](std::size_t job) {
    const std::size_t i = idx[job / nd], d = job % nd;
    const NelsonPoint p = nelson_at(Q, d, i, o);
    e.bandwidths[d * nt + i] = p.bandwidth;
    for (std::size_t s = 0; s < ns; ++s) {
      e.forward.at(s, d, i) = p.forward[s];
      e.backward.at(s, d, i) = p.backward[s];
      e.mean.at(s, d, i) = p.mean[s];
    }
  });
  return e;
}

}  // namespace curvlab
