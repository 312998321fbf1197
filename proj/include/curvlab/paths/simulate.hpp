#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>

#include "curvlab/parallel.hpp"
#include "curvlab/paths/ensemble.hpp"

namespace curvlab {

// K independent standard Brownian motions started at 0.
inline PathEnsemble simulate_brownian(const TimeGrid& grid, std::size_t n_scenarios,
                                      std::size_t K, std::uint64_t seed) {
  if (n_scenarios < 1 || K < 1) throw ValidationError("simulate_brownian: empty ensemble");
  const std::size_t nt = grid.size();
  std::vector<double> v(n_scenarios * K * nt);
  parallel_for(n_scenarios, [&](std::size_t s) {
    auto rng = stream_rng(seed, s);
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t d = 0; d < K; ++d) v[(s * K + d) * nt] = 0.0;
    for (std::size_t i = 1; i < nt; ++i) {
      const double sq = std::sqrt(grid[i] - grid[i - 1]);
      for (std::size_t d = 0; d < K; ++d) {
        const std::size_t o = (s * K + d) * nt + i;
        v[o] = v[o - 1] + sq * z(rng);
      }
    }
  });
  return PathEnsemble(grid, n_scenarios, K, std::move(v), seed);
}

// Euler-Maruyama for dX = drift(t,X) dt + vol(t,X) dW driven by a given
// K-dimensional Brownian ensemble. drift returns a d-vector, vol a d x K matrix.
template <class Drift, class Vol>
PathEnsemble simulate_ito(Drift&& drift, Vol&& vol, const Eigen::VectorXd& x0,
                          const PathEnsemble& W) {
  const std::size_t nd = static_cast<std::size_t>(x0.size()), K = W.n_dims();
  const std::size_t ns = W.n_scenarios(), nt = W.n_times();
  const auto& grid = W.grid();
  if (nd == 0) throw DimensionError("simulate_ito: empty initial state");
  std::vector<double> v(ns * nd * nt);
  parallel_for(ns, [&](std::size_t s) {
    Eigen::VectorXd x = x0, dW(K);
    for (std::size_t d = 0; d < nd; ++d) v[(s * nd + d) * nt] = x[d];
    for (std::size_t i = 0; i + 1 < nt; ++i) {
      const double t = grid[i], h = grid[i + 1] - t;
      for (std::size_t k = 0; k < K; ++k) dW[k] = W(s, k, i + 1) - W(s, k, i);
      Eigen::VectorXd mu = drift(t, x);
      Eigen::MatrixXd sg = vol(t, x);
      if (static_cast<std::size_t>(mu.size()) != nd || static_cast<std::size_t>(sg.rows()) != nd ||
          static_cast<std::size_t>(sg.cols()) != K)
        throw DimensionError("simulate_ito: drift/vol shape does not match state and noise");
      if (!mu.allFinite() || !sg.allFinite()) {
        std::ostringstream os;
        os << "simulate_ito: non-finite drift/vol at scenario " << s << ", t=" << t;
        throw SimulationError(os.str());
      }
      x += mu * h + sg * dW;
      if (!x.allFinite()) {
        std::ostringstream os;
        os << "simulate_ito: state blew up at scenario " << s << ", t=" << grid[i + 1];
        throw SimulationError(os.str());
      }
      for (std::size_t d = 0; d < nd; ++d) v[(s * nd + d) * nt + i + 1] = x[d];
    }
  });
  return PathEnsemble(grid, ns, nd, std::move(v), W.seed());
}

template <class Drift, class Vol>
PathEnsemble simulate_ito(Drift&& drift, Vol&& vol, const Eigen::VectorXd& x0,
                          const TimeGrid& grid, std::size_t n_scenarios, std::uint64_t seed,
                          std::size_t K = 0) {
  if (n_scenarios < 1) throw ValidationError("simulate_ito: n_scenarios must be >= 1");
  const auto W = simulate_brownian(grid, n_scenarios, K == 0 ? x0.size() : K, seed);
  return simulate_ito(std::forward<Drift>(drift), std::forward<Vol>(vol), x0, W);
}

}  // namespace curvlab
