#pragma once

#include "curvlab/paths/ensemble.hpp"

namespace curvlab {

namespace detail {

// Cumulative sum over steps of step(s, i) = contribution of [t_i, t_{i+1}].
template <class Step>
PathEnsemble cumulate(const PathEnsemble& like, Step&& step) {
  const std::size_t ns = like.n_scenarios(), nt = like.n_times();
  std::vector<double> v(ns * nt, 0.0);
  for (std::size_t s = 0; s < ns; ++s) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < nt; ++i) {
      acc += step(s, i);
      v[s * nt + i + 1] = acc;
    }
  }
  return PathEnsemble(like.grid(), ns, 1, std::move(v), like.seed());
}

inline void check_pair(const PathEnsemble& x, const PathEnsemble& S, const char* what) {
  require_same_shape(x, S, what);
  if (x.n_dims() != S.n_dims()) throw DimensionError(std::string(what) + ": dimension mismatch");
}

}  // namespace detail

// Left-point sums of x . dS.
inline PathEnsemble ito_integral(const PathEnsemble& x, const PathEnsemble& S) {
  detail::check_pair(x, S, "ito_integral");
  const std::size_t nd = x.n_dims();
  return detail::cumulate(S, [&](std::size_t s, std::size_t i) {
    double a = 0.0;
    for (std::size_t d = 0; d < nd; ++d) a += x(s, d, i) * (S(s, d, i + 1) - S(s, d, i));
    return a;
  });
}

// Midpoint sums. Computed on their own (not as ito + bracket/2) so the bridge
// identity is a genuine check.
inline PathEnsemble stratonovich_integral(const PathEnsemble& x, const PathEnsemble& S) {
  detail::check_pair(x, S, "stratonovich_integral");
  const std::size_t nd = x.n_dims();
  return detail::cumulate(S, [&](std::size_t s, std::size_t i) {
    double a = 0.0;
    for (std::size_t d = 0; d < nd; ++d)
      a += 0.5 * (x(s, d, i) + x(s, d, i + 1)) * (S(s, d, i + 1) - S(s, d, i));
    return a;
  });
}

inline PathEnsemble quadratic_covariation(const PathEnsemble& X, const PathEnsemble& Y) {
  detail::check_pair(X, Y, "quadratic_covariation");
  const std::size_t nd = X.n_dims();
  return detail::cumulate(X, [&](std::size_t s, std::size_t i) {
    double a = 0.0;
    for (std::size_t d = 0; d < nd; ++d)
      a += (X(s, d, i + 1) - X(s, d, i)) * (Y(s, d, i + 1) - Y(s, d, i));
    return a;
  });
}

// Trapezoid time integral of each dimension (used for int r dt).
inline PathEnsemble time_integral(const PathEnsemble& x) {
  const std::size_t ns = x.n_scenarios(), nd = x.n_dims(), nt = x.n_times();
  std::vector<double> v(ns * nd * nt, 0.0);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t d = 0; d < nd; ++d) {
      double acc = 0.0;
      for (std::size_t i = 0; i + 1 < nt; ++i) {
        acc += 0.5 * (x(s, d, i) + x(s, d, i + 1)) * (x.grid()[i + 1] - x.grid()[i]);
        v[(s * nd + d) * nt + i + 1] = acc;
      }
    }
  return PathEnsemble(x.grid(), ns, nd, std::move(v), x.seed());
}

}  // namespace curvlab
