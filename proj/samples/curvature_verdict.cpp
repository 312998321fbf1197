// Zero curvature after calibration, then a drift bump on one asset and the
// curvature it produces.
#include <cstdio>

#include "curvlab/geometry.hpp"
#include "curvlab/marketsim.hpp"

using namespace curvlab;

namespace {

ItoModel three_assets() {
  ItoModel m;
  m.K = 2;
  m.assets = {{0.05, {0.2, 0.05}, 0.001, {0.004, 0.001}, 1.0, 0.03, "eq"},
              {0.03, {0.2, 0.05}, 0.000, {0.004, 0.001}, 2.0, 0.04, "fx"},
              {0.08, {0.2, 0.05}, 0.002, {0.004, 0.001}, 0.5, 0.035, "cmd"}};
  return m;
}

}  // namespace

int main() {
  const auto grid = TimeGrid::uniform(0.0, 1.0, 0.01);
  const auto cal = calibrate_arbitrage_free(three_assets(), {0.03, 0.0});
  NflvrOptions o;
  o.n_random_portfolios = 4;

  std::printf("%8s %14s %14s %14s  %s\n", "delta", "rms", "stderr", "threshold", "verdict");
  for (double delta : {0.0, 0.01, 0.02, 0.05}) {
    const auto model = delta == 0.0 ? cal : inject_arbitrage(cal, 0, delta);
    const auto sm = build_market(model, grid, 2000, 7);
    const auto r = nflvr_report(sm.market, {}, o);
    std::printf("%8.3f %14.6e %14.6e %14.6e  %s\n", delta, r.curvature_rms, r.stderr, r.threshold, r.verdict.c_str());
  }
}
