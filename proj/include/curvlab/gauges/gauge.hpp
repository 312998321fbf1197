#pragma once

#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "curvlab/gauges/term_structure.hpp"
#include "curvlab/io.hpp"
#include "curvlab/parallel.hpp"

namespace curvlab {

struct GaugeCheck {
  std::vector<double> maturities{0.0, 0.25, 0.5, 1, 2, 3, 5, 7, 10, 15, 20, 30};
  double tail_cap = 1.0;       // P(t, t + s_max) must stay below this
  double unit_tol = 1e-12;     // |P(t,t) - 1|
};

// Deflator plus term structure for one asset.
struct Gauge {
  PathEnsemble deflator;
  TermStructurePtr term_structure;
  std::string label;

  const TimeGrid& grid() const { return deflator.grid(); }
  std::size_t n_scenarios() const { return deflator.n_scenarios(); }
};

inline void validate_gauge(const Gauge& g, const GaugeCheck& chk = {}) {
  if (!g.term_structure) throw ValidationError("gauge '" + g.label + "' has no term structure");
  if (g.deflator.n_dims() != 1) throw DimensionError("gauge deflator must be scalar");
  require_same_shape(g.deflator, *g.term_structure, "make_gauge");
  if (chk.maturities.empty()) throw ValidationError("gauge check needs maturities");
  const std::size_t ns = g.n_scenarios(), nt = g.grid().size();
  std::vector<std::string> errs(ns);
  parallel_for(ns, [&](std::size_t s) {
    for (std::size_t i = 0; i < nt && errs[s].empty(); ++i) {
      const auto c = g.term_structure->curve(s, i);
      std::ostringstream os;
      if (std::abs(c->value(0.0) - 1.0) > chk.unit_tol) {
        os << "gauge '" << g.label << "': P(t,t) = " << c->value(0.0) << " != 1 at scenario " << s
           << ", t=" << g.grid()[i];
      } else {
        for (double tau : chk.maturities) {
          const double p = c->value(tau);
          if (!(p > 0) || !std::isfinite(p)) {
            os << "gauge '" << g.label << "': P not positive at scenario " << s << ", t=" << g.grid()[i]
               << ", s=" << g.grid()[i] + tau;
            break;
          }
        }
        const double tail = c->value(chk.maturities.back());
        if (os.str().empty() && !(tail < chk.tail_cap))
          os << "gauge '" << g.label << "': P(t, t+" << chk.maturities.back() << ") = " << tail
             << " violates decay cap " << chk.tail_cap << " at scenario " << s << ", t=" << g.grid()[i];
      }
      errs[s] = os.str();
    }
  });
  for (const auto& e : errs)
    if (!e.empty()) throw ValidationError(e);
}

inline Gauge make_gauge(PathEnsemble deflator, TermStructurePtr ts, std::string label = "asset",
                        const GaugeCheck& chk = {}) {
  Gauge g{std::move(deflator), std::move(ts), std::move(label)};
  validate_gauge(g, chk);
  return g;
}

// f_{t,s} = -d/ds log P on the maturity grid; r_t = f at the shortest maturity.
struct ForwardCurve {
  std::vector<double> maturities;
  std::vector<double> f;  // [(s * nt + i) * nm + m]
  PathEnsemble r;
  double at(std::size_t s, std::size_t i, std::size_t m) const {
    return f[(s * r.n_times() + i) * maturities.size() + m];
  }
};

inline ForwardCurve forward_rates(const Gauge& g, std::vector<double> maturities) {
  const std::size_t nm = maturities.size();
  if (nm < 3) throw ValidationError("forward_rates needs at least 3 maturity points");
  if (maturities.front() != 0.0) throw ValidationError("forward_rates maturities must start at 0");
  const std::size_t ns = g.n_scenarios(), nt = g.grid().size();
  std::vector<double> f(ns * nt * nm), r(ns * nt);
  const auto& h = maturities;
  parallel_for(ns, [&](std::size_t s) {
    std::vector<double> L(nm);
    for (std::size_t i = 0; i < nt; ++i) {
      const auto c = g.term_structure->curve(s, i);
      for (std::size_t m = 0; m < nm; ++m) {
        const double p = c->value(h[m]);
        if (!(p > 0)) {
          std::ostringstream os;
          os << "forward_rates: non-positive P at scenario " << s << ", t=" << g.grid()[i] << ", s=" << h[m];
          throw DomainError(os.str());
        }
        L[m] = std::log(p);
      }
      double* out = &f[(s * nt + i) * nm];
      // Three-point formulas (exact for quadratic log P on any spacing).
      auto d3 = [&](std::size_t a, std::size_t b, std::size_t c, double x) {
        const double xa = h[a], xb = h[b], xc = h[c];
        return L[a] * (2 * x - xb - xc) / ((xa - xb) * (xa - xc)) + L[b] * (2 * x - xa - xc) / ((xb - xa) * (xb - xc)) +
               L[c] * (2 * x - xa - xb) / ((xc - xa) * (xc - xb));
      };
      out[0] = -d3(0, 1, 2, h[0]);
      out[nm - 1] = -d3(nm - 3, nm - 2, nm - 1, h[nm - 1]);
      for (std::size_t m = 1; m + 1 < nm; ++m) out[m] = -d3(m - 1, m, m + 1, h[m]);
      r[s * nt + i] = out[0];
    }
  });
  return {std::move(maturities), std::move(f), PathEnsemble(g.grid(), ns, 1, std::move(r))};
}

// Strictly decreasing in maturity, per (scenario, time); layout [s * nt + i].
inline std::vector<char> is_positive_gauge(const Gauge& g, const std::vector<double>& maturities = GaugeCheck{}.maturities) {
  const std::size_t ns = g.n_scenarios(), nt = g.grid().size();
  std::vector<char> out(ns * nt, 1);
  parallel_for(ns, [&](std::size_t s) {
    for (std::size_t i = 0; i < nt; ++i) {
      const auto c = g.term_structure->curve(s, i);
      double prev = c->value(maturities.front());
      for (std::size_t m = 1; m < maturities.size(); ++m) {
        const double p = c->value(maturities[m]);
        if (!(p < prev)) {
          out[s * nt + i] = 0;
          break;
        }
        prev = p;
      }
    }
  });
  return out;
}

// D^pi = D <pi, P>, P^pi(tau) = <pi, P(tau + .)>/<pi, P>. The new surface is
// checked for positivity on the check maturities for every (scenario, time).
inline Gauge apply_intensity(const Gauge& g, const CashflowIntensity& pi, const GaugeCheck& chk = {}) {
  pi.validate();
  const std::size_t ns = g.n_scenarios(), nt = g.grid().size();
  auto ts = std::make_shared<TransformedTermStructure>(g.term_structure, pi);
  std::vector<double> D(ns * nt);
  std::vector<std::string> errs(ns);
  parallel_for(ns, [&](std::size_t s) {
    for (std::size_t i = 0; i < nt && errs[s].empty(); ++i) {
      const auto base = g.term_structure->curve(s, i);
      const double norm = pair_with_curve(pi, *base, 0.0, 0);
      std::ostringstream os;
      if (!std::isfinite(norm) || norm == 0.0) {
        os << "left gauge domain: <pi, P> = " << norm << " at scenario " << s << ", t=" << g.grid()[i];
      } else {
        D[s * nt + i] = g.deflator(s, i) * norm;
        for (double tau : chk.maturities) {
          const double p = pair_with_curve(pi, *base, tau, 0) / norm;
          if (!(p > 0)) {
            os << "left gauge domain: transformed P = " << p << " at scenario " << s << ", t=" << g.grid()[i]
               << ", s=" << g.grid()[i] + tau;
            break;
          }
        }
      }
      errs[s] = os.str();
    }
  });
  for (const auto& e : errs)
    if (!e.empty()) throw DomainError(e);
  return Gauge{PathEnsemble(g.grid(), ns, 1, std::move(D), g.deflator.seed()), std::move(ts), g.label};
}

// scenario,t,s,P on the given maturity offsets (s is the absolute maturity date).
inline void write_term_structure_csv(std::ostream& os, const Gauge& g, const std::vector<double>& maturities,
                                     std::size_t time_stride = 1, std::size_t max_scenarios = SIZE_MAX) {
  os << "scenario,t,s,P\n";
  const std::size_t ns = std::min(max_scenarios, g.n_scenarios());
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < g.grid().size(); i += std::max<std::size_t>(1, time_stride)) {
      const auto c = g.term_structure->curve(s, i);
      for (double tau : maturities)
        os << s << ',' << io::num(g.grid()[i]) << ',' << io::num(g.grid()[i] + tau) << ',' << io::num(c->value(tau))
           << '\n';
    }
}

inline void write_deflator_csv(std::ostream& os, const Gauge& g) {
  os << "scenario,t,D\n";
  for (std::size_t s = 0; s < g.n_scenarios(); ++s)
    for (std::size_t i = 0; i < g.grid().size(); ++i)
      os << s << ',' << io::num(g.grid()[i]) << ',' << io::num(g.deflator(s, i)) << '\n';
}

}  // namespace curvlab
