// Closed-form market dynamics of both families with their first integrals.
#include <cstdio>

#include "curvlab/dynamics.hpp"

using namespace curvlab;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(v.size());
  std::size_t k = 0;
  for (double e : v) x[k++] = e;
  return x;
}

void table(const char* title, const FirstIntegralReport& r) {
  std::printf("\n%s\n%-26s %8s %14s %14s %10s\n", title, "integral", "defined", "max drift", "max |I|", "conserved");
  for (const auto& f : r.integrals)
    std::printf("%-26s %8s %14.6e %14.6e %10s\n", f.label.c_str(), f.defined ? "yes" : "no", f.max_drift, f.max_abs,
                f.defined ? (f.conserved(3.0) ? "yes" : "no") : "-");
}

}  // namespace

int main() {
  const auto grid = TimeGrid::uniform(0.0, 1.0, 1e-3);

  const VectorXd x0 = vec({1, 1, 0}), D0 = vec({0.6, 0.4, 0.3}), D0p = vec({-0.5, -0.5, 0.2}), r0 = vec({0.02, 0.03, 0.01});
  const auto arb = solve_arbitrage_dynamics(x0, D0, D0p, r0, grid, {ConditionSet::arbitrage, 0.1, 0.05, 0.01}, 400, 4);
  const auto res = arb.core_residual();
  std::printf("arbitrage family: g = (%.4f, %.4f, %.4f), EL residual max %.3e\n", arb.g[0], arb.g[1], arb.g[2], res.max());
  table("arbitrage family", noether_integrals(arb));

  const auto noarb = solve_noarb_dynamics(vec({1, 0, 2}), vec({0.5, 0.5, 0.8}), grid,
                                          {ConditionSet::no_arbitrage, 0.0, 0.05, 0.0}, 400, 4);
  table("no-arbitrage family", noether_integrals(noarb));
}
