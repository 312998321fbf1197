#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "curvlab/config.hpp"
#include "curvlab/marketsim/build.hpp"

namespace curvlab {

// Sections understood by the scenario file. Command-specific ones are parsed
// by their consumers but recognised here so that typos fail early.
inline const std::vector<std::string>& scenario_sections() {
  static const std::vector<std::string> s{"grid",     "mc",       "model",    "asset",  "calibration", "bump",
                                          "term_structure", "curvature", "action", "dynamics", "noether", "ingest"};
  return s;
}

struct Bump {
  std::size_t asset = 0;
  double delta = 0.0;
};

struct ScenarioConfig {
  ConfigDocument doc;
  std::string text;  // raw file content, hashed into manifests
  ItoModel model;
  TimeGrid grid;
  std::size_t n_outer = 1000;
  std::uint64_t seed = 1;
  std::optional<Calibration> calibration;
  std::optional<Bump> bump;
  BuildOptions build;

  // Model actually simulated: calibrated first, then bumped.
  ItoModel effective_model() const {
    ItoModel m = model;
    if (calibration) m = calibrate_arbitrage_free(m, *calibration);
    if (bump) m = inject_arbitrage(m, bump->asset, bump->delta);
    return m;
  }
};

inline ScenarioConfig parse_scenario(const std::string& text, const std::string& origin = "<config>") {
  ScenarioConfig c;
  c.text = text;
  std::istringstream is(text);
  c.doc = parse_config(is, origin, scenario_sections(), {"asset"});
  const auto& d = c.doc;

  const auto* g = d.get("grid");
  if (!g) throw InputError(origin + ": missing [grid] section");
  g->require_keys({"t0", "t1", "dt"});
  c.grid = TimeGrid::uniform(g->number("t0", 0.0), g->number("t1"), g->number("dt"));

  if (const auto* mc = d.get("mc")) {
    mc->require_keys({"n_outer", "n_inner", "seed"});
    c.n_outer = mc->count("n_outer", c.n_outer);
    c.build.n_inner = mc->count("n_inner", c.build.n_inner);
    c.seed = static_cast<std::uint64_t>(mc->integer("seed", 1));
    if (c.n_outer < 1) throw InputError(mc->where(*mc->find("n_outer")) + ": must be >= 1");
  }

  std::optional<std::size_t> K;
  if (const auto* m = d.get("model")) {
    m->require_keys({"K", "kappa"});
    if (m->has("K")) K = m->count("K", 1);
    c.model.kappa = m->number("kappa", 0.0);
  }
  const auto assets = d.all("asset");
  if (assets.empty()) throw InputError(origin + ": at least one [asset] section is required");
  for (const auto* a : assets) {
    a->require_keys({"label", "alpha", "sigma", "a", "b", "S0", "r0"});
    AssetSpec s;
    s.label = a->str("label", "asset" + std::to_string(c.model.assets.size()));
    s.alpha = a->number("alpha", 0.0);
    s.sigma = a->numbers("sigma");
    s.a = a->number("a", 0.0);
    s.b = a->numbers("b", std::vector<double>(s.sigma.size(), 0.0));
    s.S0 = a->number("S0", 1.0);
    s.r0 = a->number("r0", 0.0);
    if (!K) K = s.sigma.size();
    if (s.sigma.size() != *K || s.b.size() != *K)
      throw InputError(origin + ":" + std::to_string(a->line) + ": [asset] sigma and b need " + std::to_string(*K) +
                       " loadings");
    c.model.assets.push_back(std::move(s));
  }
  c.model.K = *K;
  try {
    c.model.validate();
  } catch (const Error& e) {
    throw InputError(origin + ": " + e.what());
  }

  if (const auto* cal = d.get("calibration")) {
    cal->require_keys({"C1", "C2"});
    const bool none = cal->str("C1", "") == "none";
    if (!none) {
      Calibration k;
      if (cal->has("C1")) {
        const auto v = cal->numbers("C1");
        if (v.size() > 2) throw InputError(cal->where(*cal->find("C1")) + ": C1 takes 'level [slope]'");
        k.c0 = v[0];
        k.c1 = v.size() > 1 ? v[1] : 0.0;
      }
      const std::string c2 = cal->str("C2", "implied");
      if (c2 == "implied") k.c2 = Calibration::C2Mode::Implied;
      else if (c2 == "zero" || c2 == "0") k.c2 = Calibration::C2Mode::Zero;
      else throw InputError(cal->where(*cal->find("C2")) + ": expected implied | zero");
      c.calibration = k;
    }
  }

  if (const auto* b = d.get("bump")) {
    b->require_keys({"asset", "delta"});
    if (b->str("asset", "") != "none") {
      Bump k{b->count("asset", 0), b->number("delta")};
      if (k.asset >= c.model.N()) throw InputError(b->where(*b->find("asset")) + ": asset index out of range");
      c.bump = k;
    }
  }

  if (const auto* t = d.get("term_structure")) {
    t->require_keys({"method", "inner_dt", "maturities", "tail_cap", "export_scenarios", "export_stride"});
    try {
      c.build.method = parse_term_structure_method(t->str("method", "auto"));
    } catch (const InputError& e) {
      throw InputError(t->where(*t->find("method")) + ": " + e.what());
    }
    c.build.inner_dt = t->number("inner_dt", c.build.inner_dt);
    c.build.maturities = t->numbers("maturities", c.build.maturities);
    c.build.check.maturities = c.build.maturities;
    c.build.check.tail_cap = t->number("tail_cap", c.build.check.tail_cap);
  }
  return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_scenario(ss.str(), path);
}

}  // namespace curvlab
