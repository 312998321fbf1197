// Mean derivative of Brownian motion estimated by kernel regression, next to
// the exact value W_t / (2t), at a few states.
#include <cmath>
#include <cstdio>

#include "curvlab/paths.hpp"

using namespace curvlab;

int main() {
  const auto grid = TimeGrid::uniform(0.0, 1.2, 1e-3);
  const auto W = simulate_brownian(grid, 20000, 1, 2024);
  NelsonOptions o;
  o.window = 200;

  std::printf("%6s %10s %12s %12s %10s\n", "t", "W_t", "estimate", "W_t/(2t)", "bandwidth");
  for (double t : {0.25, 0.5, 1.0}) {
    const std::size_t i = grid.index_of(t);
    const auto p = nelson_at(W, 0, i, o);
    // Report a handful of scenarios spread over the state distribution.
    for (std::size_t s : {0u, 1u, 2u, 3u, 4u})
      std::printf("%6.2f %10.4f %12.4f %12.4f %10.4f\n", t, W(s, 0, i), p.mean[s], W(s, 0, i) / (2 * t), p.bandwidth);
  }
}
