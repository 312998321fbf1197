// curvlab: batch front end. One command per process; every artifact
// directory gets a manifest.json that is enough to reproduce it.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "curvlab/action.hpp"
#include "curvlab/dynamics.hpp"
#include "curvlab/geometry.hpp"
#include "curvlab/ingest.hpp"
#include "curvlab/marketsim.hpp"
#include "curvlab/paths/csv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace curvlab;

namespace {

constexpr const char* kVersion = "curvlab 0.1.0";

struct RunConfig {
  std::string command;
  std::string config_path;
  std::string input;  // ingest: price CSV
  std::string out = "curvlab_out";
  std::optional<long long> seed;
  std::optional<double> tol;
  std::string format = "json";
};

std::string read_file(const std::string& path, const char* what) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError(std::string("cannot open ") + what + " '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Output directory with temp-then-rename writes and a file list for the manifest.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw InputError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    const fs::path final_path = dir_ / name, tmp = dir_ / ("." + name + ".tmp");
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw Error("cannot write '" + tmp.string() + "'");
      body(f);
      f.flush();
      if (!f) throw Error("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, final_path, ec);
    if (ec) throw Error("cannot move '" + tmp.string() + "' into place: " + ec.message());
    files_.push_back(name);
  }

  void json_file(const std::string& name, const json& j) {
    write(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }

  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "[" + std::to_string(i) + "]", out);
  } else if (j.is_number_float()) {
    out.emplace_back(prefix, io::num(j.get<double>()));
  } else if (j.is_string()) {
    out.emplace_back(prefix, j.get<std::string>());
  } else {
    out.emplace_back(prefix, j.dump());
  }
}

// The summary report goes to report.{json,csv} and to stdout.
void emit_report(Artifacts& art, const RunConfig& run, const json& report) {
  if (run.format == "csv") {
    std::vector<std::pair<std::string, std::string>> rows;
    flatten(report, "", rows);
    const auto body = [&](std::ostream& os) {
      os << "key,value\n";
      for (const auto& [k, v] : rows) os << k << ',' << v << '\n';
    };
    art.write("report.csv", body);
    body(std::cout);
  } else {
    art.json_file("report.json", report);
    std::cout << report.dump(2) << '\n';
  }
}

void write_manifest(Artifacts& art, const RunConfig& run, const std::string& config_text, std::uint64_t seed,
                    const json& extra) {
  json m{{"command", run.command},
         {"config", run.config_path.empty() ? json(nullptr) : json(run.config_path)},
         {"config_hash", config_text.empty() ? json(nullptr) : json("fnv1a64:" + fnv1a(config_text))},
         {"seed", seed},
         {"tol", run.tol ? json(*run.tol) : json(nullptr)},
         {"format", run.format},
         {"version", kVersion},
         {"files", art.files()}};
  if (!run.input.empty()) {
    m["input"] = run.input;
    m["input_hash"] = "fnv1a64:" + fnv1a(read_file(run.input, "input"));
  }
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  art.json_file("manifest.json", m);
}

json grid_json(const TimeGrid& g) { return {{"t0", g.front()}, {"t1", g.back()}, {"dt", g.dt()}, {"points", g.size()}}; }

template <class E>
void write_values_csv(std::ostream& os, const E& e) {
  os << "scenario,time,dim,value\n";
  for (std::size_t s = 0; s < e.n_scenarios(); ++s)
    for (std::size_t i = 0; i < e.n_times(); ++i)
      for (std::size_t d = 0; d < e.n_dims(); ++d)
        os << s << ',' << io::num(e.grid()[i]) << ',' << d << ',' << io::num(e(s, d, i)) << '\n';
}

Eigen::VectorXd to_vec(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::vector<double> list_or(const ConfigSection* s, const std::string& key, std::vector<double> def) {
  return s ? s->numbers(key, std::move(def)) : def;
}

// Config shared by every command; market commands also need the scenario view.
struct Loaded {
  std::string text;
  ConfigDocument doc;
  std::uint64_t seed = 1;
  fs::path base;  // directory of the config file, for relative paths
};

Loaded load_document(const RunConfig& run, bool required) {
  Loaded l;
  if (run.config_path.empty()) {
    if (required) throw InputError(run.command + ": --config is required");
  } else {
    l.text = read_file(run.config_path, "config file");
    std::istringstream is(l.text);
    l.doc = parse_config(is, run.config_path, scenario_sections(), {"asset"});
    l.base = fs::path(run.config_path).parent_path();
    if (const auto* mc = l.doc.get("mc")) l.seed = static_cast<std::uint64_t>(mc->integer("seed", 1));
  }
  if (run.seed) {
    if (*run.seed < 0) throw InputError("--seed must be >= 0");
    l.seed = static_cast<std::uint64_t>(*run.seed);
  }
  return l;
}

ScenarioConfig load_scenario_cfg(const RunConfig& run, const Loaded& l) {
  ScenarioConfig c = parse_scenario(l.text, run.config_path);
  c.seed = l.seed;
  return c;
}

std::string resolve(const Loaded& l, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || l.base.empty() ? path.string() : (l.base / path).string();
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const RunConfig& run) {
  const Loaded l = load_document(run, true);
  const ScenarioConfig c = load_scenario_cfg(run, l);
  const auto* ts = c.doc.get("term_structure");
  const std::size_t exp_s = ts ? ts->count("export_scenarios", 16) : 16;
  const std::size_t exp_stride = ts ? ts->count("export_stride", 10) : 10;
  const SimulatedMarket sm = build_market(c.effective_model(), c.grid, c.n_outer, c.seed, c.build);

  Artifacts art(run.out);
  art.write("prices.csv", [&](std::ostream& os) { write_csv(os, sm.S); });
  art.write("short_rates.csv", [&](std::ostream& os) { write_csv(os, sm.r); });
  for (std::size_t j = 0; j < sm.market.N(); ++j) {
    const auto& g = sm.market.gauges()[j];
    art.write("gauge_" + std::to_string(j) + "_deflator.csv", [&](std::ostream& os) { write_deflator_csv(os, g); });
    art.write("gauge_" + std::to_string(j) + "_term_structure.csv",
              [&](std::ostream& os) { write_term_structure_csv(os, g, c.build.check.maturities, exp_stride, exp_s); });
  }
  if (sm.market.log_drift())
    art.write("log_drift.csv", [&](std::ostream& os) { write_values_csv(os, *sm.market.log_drift()); });
  if (sm.calibration) art.write("beta.csv", [&](std::ostream& os) { write_csv(os, sm.calibration->beta.beta); });

  json assets = json::array();
  const std::size_t last = c.grid.size() - 1;
  for (std::size_t j = 0; j < sm.market.N(); ++j) {
    double mS = 0, mr = 0;
    for (std::size_t s = 0; s < c.n_outer; ++s) mS += sm.S(s, j, last), mr += sm.r(s, j, last);
    assets.push_back({{"label", sm.market.gauges()[j].label},
                      {"mean_final_price", mS / c.n_outer},
                      {"mean_final_rate", mr / c.n_outer}});
  }
  json report{{"command", "simulate"},
              {"N", sm.market.N()},
              {"K", c.model.K},
              {"scenarios", c.n_outer},
              {"grid", grid_json(c.grid)},
              {"seed", c.seed},
              {"term_structure", to_string(sm.method)},
              {"calibrated", sm.calibration.has_value()},
              {"bump", c.bump ? json{{"asset", c.bump->asset}, {"delta", c.bump->delta}} : json(nullptr)},
              {"assets", assets}};
  emit_report(art, run, report);
  write_manifest(art, run, l.text, c.seed,
                 {{"grid", grid_json(c.grid)},
                  {"scenarios", c.n_outer},
                  {"term_structure_export", {{"scenarios", exp_s}, {"stride", exp_stride}}}});
  return 0;
}

// ---------------------------------------------------------------- curvature

int cmd_curvature(const RunConfig& run) {
  const Loaded l = load_document(run, true);
  const ScenarioConfig c = load_scenario_cfg(run, l);
  NflvrOptions o;
  Eigen::VectorXd x = Eigen::VectorXd::Constant(c.model.N(), 1.0);
  if (const auto* cs = c.doc.get("curvature")) {
    cs->require_keys({"t_min", "stderr_multiple", "n_random", "window", "portfolio", "abs_floor", "analytic"});
    o.t_min = cs->number("t_min", o.t_min);
    o.stderr_multiple = cs->number("stderr_multiple", o.stderr_multiple);
    o.n_random_portfolios = cs->count("n_random", o.n_random_portfolios);
    o.curvature.nelson.window = cs->count("window", o.curvature.nelson.window);
    o.abs_floor = cs->number("abs_floor", o.abs_floor);
    o.curvature.prefer_analytic = cs->flag("analytic", true);
    if (cs->has("portfolio")) {
      const auto v = cs->numbers("portfolio");
      if (v.size() != c.model.N()) throw InputError(cs->where(*cs->find("portfolio")) + ": needs one weight per asset");
      x = to_vec(v);
    }
  }
  if (run.tol) o.stderr_multiple = *run.tol;
  o.portfolio_seed = c.seed;
  const SimulatedMarket sm = build_market(c.effective_model(), c.grid, c.n_outer, c.seed, c.build);
  std::vector<StatePriceDeflator> betas;
  if (sm.calibration) betas.push_back(sm.calibration->beta);
  const NflvrReport rep = nflvr_report(sm.market, betas, o);
  const CurvatureField rho = curvature(sm.market, x, o.curvature);

  Artifacts art(run.out);
  art.write("rho.csv", [&](std::ostream& os) { write_curvature_csv(os, rho); });
  json nj = rep.to_json();
  nj["portfolio"] = to_json(x);
  nj["stderr_multiple"] = o.stderr_multiple;
  nj["t_min"] = o.t_min;
  art.json_file("nflvr.json", nj);
  emit_report(art, run, {{"command", "curvature"}, {"nflvr", nj}});
  write_manifest(art, run, l.text, c.seed, {{"grid", grid_json(c.grid)}, {"scenarios", c.n_outer}});
  return 0;
}

// ---------------------------------------------------------------- action

struct ActionInputs {
  Strategy strategy;
  std::string strategy_path;
  std::string beta_kind;
};

ActionInputs read_action_inputs(const Loaded& l, const ScenarioConfig& c, const std::string& who) {
  const auto* a = c.doc.get("action");
  if (!a) throw InputError(who + ": config needs an [action] section with a strategy file");
  a->require_keys({"strategy", "closed", "reverse", "classify_tol", "self_financing_tol", "beta"});
  ActionInputs in;
  in.strategy_path = resolve(l, a->require("strategy").value);
  std::ifstream f(in.strategy_path);
  if (!f) throw InputError("cannot open strategy file '" + in.strategy_path + "'");
  in.strategy = read_strategy_csv(f, a->flag("closed", false));
  if (a->flag("reverse", false)) in.strategy = in.strategy.reversed();
  in.beta_kind = a->str("beta", "kernel");
  if (in.beta_kind != "kernel" && in.beta_kind != "unit")
    throw InputError(a->where(*a->find("beta")) + ": expected kernel | unit");
  return in;
}

int cmd_action(const RunConfig& run) {
  const Loaded l = load_document(run, true);
  const ScenarioConfig c = load_scenario_cfg(run, l);
  const ActionInputs in = read_action_inputs(l, c, "action");
  const auto* a = c.doc.get("action");
  ActionOptions o;
  o.classify_tol = a->number("classify_tol", o.classify_tol);
  o.self_financing_tol = a->number("self_financing_tol", o.self_financing_tol);
  if (run.tol) o.classify_tol = *run.tol;
  const SimulatedMarket sm = build_market(c.effective_model(), c.grid, c.n_outer, c.seed, c.build);
  const bool kernel = sm.calibration && in.beta_kind == "kernel";
  const StatePriceDeflator beta = kernel ? sm.calibration->beta : StatePriceDeflator::unit(c.grid, c.n_outer);
  const ActionReport rep = arbitrage_action(in.strategy, sm.market, beta, o);

  Artifacts art(run.out);
  art.write("action.csv", [&](std::ostream& os) {
    os << "scenario,action,endpoint,d01,gap,class\n";
    for (std::size_t s = 0; s < rep.action.size(); ++s)
      os << s << ',' << io::num(rep.action[s]) << ',' << io::num(rep.endpoint[s]) << ',' << io::num(rep.d01[s]) << ','
         << io::num(rep.gap[s]) << ',' << to_string(rep.classification.per_scenario[s]) << '\n';
  });
  json j = rep.to_json();
  j["beta"] = kernel ? "pricing-kernel" : "unit";
  j["strategy"] = in.strategy_path;
  j["closed"] = in.strategy.closed;
  j["reversed"] = in.strategy.backward;
  emit_report(art, run, {{"command", "action"}, {"action", j}});
  write_manifest(art, run, l.text, c.seed,
                 {{"grid", grid_json(c.grid)},
                  {"scenarios", c.n_outer},
                  {"strategy_hash", "fnv1a64:" + fnv1a(read_file(in.strategy_path, "strategy file"))}});
  return 0;
}

// ---------------------------------------------------------------- dynamics

struct DynamicsRun {
  DynamicsSolution sol;
  double p = 0.0;
};

TimeGrid dynamics_grid(const ConfigDocument& doc) {
  const auto* g = doc.get("grid");
  if (!g) throw InputError("dynamics: config needs a [grid] section");
  g->require_keys({"t0", "t1", "dt"});
  return TimeGrid::uniform(g->number("t0", 0.0), g->number("t1"), g->number("dt"));
}

DynamicsRun solve_from_config(const Loaded& l) {
  const auto* d = l.doc.get("dynamics");
  if (!d) throw InputError("dynamics: config needs a [dynamics] section");
  d->require_keys({"family", "x0", "D0", "D0p", "r0", "sd_x", "sd_D", "sd_r", "scenarios"});
  const TimeGrid grid = dynamics_grid(l.doc);
  const std::string fam = d->str("family", "arbitrage");
  const Eigen::VectorXd x0 = to_vec(d->numbers("x0")), D0 = to_vec(d->numbers("D0"));
  if (D0.size() != x0.size()) throw InputError(d->where(d->require("D0")) + ": length differs from x0");
  const std::size_t ns = d->count("scenarios", 1);
  if (ns < 1) throw InputError(d->where(*d->find("scenarios")) + ": must be >= 1");
  DynamicsRun out;
  if (fam == "arbitrage") {
    const PerturbationSpec spec{ConditionSet::arbitrage, d->number("sd_x", 0.0), d->number("sd_D", 0.0),
                                d->number("sd_r", 0.0)};
    const Eigen::VectorXd D0p = to_vec(d->numbers("D0p"));
    const Eigen::VectorXd r0 = to_vec(d->numbers("r0", std::vector<double>(x0.size(), 0.0)));
    if (D0p.size() != x0.size() || r0.size() != x0.size())
      throw InputError(d->where(d->require("D0p")) + ": D0p and r0 need one entry per asset");
    out.sol = solve_arbitrage_dynamics(x0, D0, D0p, r0, grid, spec, ns, l.seed);
    out.p = x0.dot(D0p);
  } else if (fam == "no-arbitrage") {
    for (const char* k : {"D0p", "r0", "sd_r"})
      if (d->has(k)) throw InputError(d->where(*d->find(k)) + ": not used by the no-arbitrage family");
    const PerturbationSpec spec{ConditionSet::no_arbitrage, d->number("sd_x", 0.0), d->number("sd_D", 0.0), 0.0};
    out.sol = solve_noarb_dynamics(x0, D0, grid, spec, ns, l.seed);
  } else {
    throw InputError(d->where(*d->find("family")) + ": expected arbitrage | no-arbitrage");
  }
  return out;
}

NoetherOptions noether_options(const ConfigDocument& doc, double& k, std::string& source) {
  NoetherOptions o;
  k = 3.0;
  source = doc.get("dynamics") ? "dynamics" : "strategy";
  if (const auto* n = doc.get("noether")) {
    n->require_keys({"source", "t_min", "stderr_multiple"});
    source = n->str("source", source);
    if (source != "dynamics" && source != "strategy")
      throw InputError(n->where(*n->find("source")) + ": expected dynamics | strategy");
    o.t_min = n->number("t_min", o.t_min);
    k = n->number("stderr_multiple", k);
  }
  return o;
}

void write_noether_csv(std::ostream& os, const FirstIntegralReport& r) {
  os << "label,t,component,value,drift_stderr\n";
  for (const auto& f : r.integrals)
    for (std::size_t i = 0; i < f.value.size(); ++i)
      for (std::size_t c = 0; c < f.value[i].size(); ++c)
        os << f.label << ',' << io::num(r.times[i]) << ',' << c << ',' << io::num(f.value[i][c]) << ','
           << io::num(f.drift_stderr[i][c]) << '\n';
}

int cmd_dynamics(const RunConfig& run) {
  const Loaded l = load_document(run, true);
  const DynamicsRun dr = solve_from_config(l);
  const DynamicsSolution& sol = dr.sol;
  const double gap_tol = run.tol.value_or(1e-6);
  double k = 3.0;
  std::string source;
  const NoetherOptions no = noether_options(l.doc, k, source);
  const FirstIntegralReport noether = noether_integrals(sol, no);
  const ELResidual res = sol.core_residual();

  Artifacts art(run.out);
  art.write("solution.csv", [&](std::ostream& os) { write_solution_csv(os, sol); });
  art.write("residual.csv", [&](std::ostream& os) {
    os << "t,eq1,eq2,eq3\n";
    for (std::size_t i = 0; i < sol.grid.size(); ++i)
      os << io::num(sol.grid[i]) << ',' << io::num(res.eq1[i]) << ',' << io::num(res.eq2[i]) << ','
         << io::num(res.eq3[i]) << '\n';
  });
  art.write("noether.csv", [&](std::ostream& os) { write_noether_csv(os, noether); });
  art.json_file("noether.json", noether.to_json(k));

  json report{{"command", "dynamics"},
              {"family", sol.family == SolutionFamily::arbitrage ? "arbitrage" : "no-arbitrage"},
              {"N", sol.N()},
              {"scenarios", sol.n_scenarios()},
              {"grid", grid_json(sol.grid)},
              {"g", to_json(sol.g)},
              {"el_residual", {{"eq1", res.max1}, {"eq2", res.max2}, {"eq3", res.max3}}},
              {"self_financing_defect", self_financing_defect(sol)}};
  double decay = 0.0;
  for (std::size_t i = 0; i < sol.grid.size(); ++i)
    decay = std::max(decay, (sol.D_core[i] - std::exp(-sol.grid[i]) * sol.g).cwiseAbs().maxCoeff());
  if (sol.family == SolutionFamily::arbitrage) {
    const std::vector<double> ode = arbitrage_rate_ode(dr.p, sol.w.front(), sol.grid);
    double worst = 0.0;
    art.write("rate_gap.csv", [&](std::ostream& os) {
      os << "t,w_closed_form,w_ode,abs_gap,r\n";
      for (std::size_t i = 0; i < sol.grid.size(); ++i) {
        const double gap = std::abs(sol.w[i] - ode[i]);
        worst = std::max(worst, gap);
        os << io::num(sol.grid[i]) << ',' << io::num(sol.w[i]) << ',' << io::num(ode[i]) << ',' << io::num(gap) << ','
           << io::num(sol.r_core[i][0]) << '\n';
      }
    });
    report["p"] = dr.p;
    report["singular_time"] = dr.p > 0 ? json(std::log(dr.p)) : json(nullptr);
    report["decay_deviation"] = decay;
    report["rate_gap"] = {{"max", worst}, {"tol", gap_tol}, {"ok", worst <= gap_tol}};
  } else {
    json mart = json::array();
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(sol.N()); ++j) {
      const auto m = martingale_pricing_check(sol, Eigen::VectorXd::Unit(sol.N(), j));
      mart.push_back({{"asset", j}, {"max_abs_gap", m.max_abs_gap()}, {"max_z", m.max_z()}});
    }
    report["martingale"] = mart;
  }
  report["noether"] = noether.to_json(k);
  emit_report(art, run, report);
  write_manifest(art, run, l.text, l.seed, {{"grid", grid_json(sol.grid)}, {"scenarios", sol.n_scenarios()}});
  return 0;
}

// ---------------------------------------------------------------- noether

int cmd_noether(const RunConfig& run) {
  const Loaded l = load_document(run, true);
  double k = 3.0;
  std::string source;
  const NoetherOptions no = noether_options(l.doc, k, source);
  if (run.tol) k = *run.tol;
  FirstIntegralReport rep;
  json extra{{"source", source}};
  std::optional<std::string> strategy_path;
  if (source == "dynamics") {
    const DynamicsRun dr = solve_from_config(l);
    rep = noether_integrals(dr.sol, no);
    extra["family"] = dr.sol.family == SolutionFamily::arbitrage ? "arbitrage" : "no-arbitrage";
  } else {
    const ScenarioConfig c = load_scenario_cfg(run, l);
    const ActionInputs in = read_action_inputs(l, c, "noether");
    strategy_path = in.strategy_path;
    const SimulatedMarket sm = build_market(c.effective_model(), c.grid, c.n_outer, c.seed, c.build);
    // A calibrated market is measured in pricing-kernel units, where the
    // return-weighted integrands vanish identically.
    const bool deflate = sm.calibration && in.beta_kind == "kernel";
    rep = noether_integrals(deflate ? deflate_market(sm.market, sm.calibration->beta) : sm.market, in.strategy, no);
    extra["market"] = deflate ? "deflated by pricing kernel" : "as simulated";
  }
  Artifacts art(run.out);
  art.write("noether.csv", [&](std::ostream& os) { write_noether_csv(os, rep); });
  json j = rep.to_json(k);
  j["stderr_multiple"] = k;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  emit_report(art, run, {{"command", "noether"}, {"noether", j}});
  json mextra{{"source", source}};
  if (strategy_path) mextra["strategy_hash"] = "fnv1a64:" + fnv1a(read_file(*strategy_path, "strategy file"));
  write_manifest(art, run, l.text, l.seed, mextra);
  return 0;
}

// ---------------------------------------------------------------- ingest

int cmd_ingest(const RunConfig& run_in) {
  RunConfig run = run_in;
  const Loaded l = load_document(run, false);
  IngestOptions o;
  if (const auto* s = l.doc.get("ingest")) {
    s->require_keys({"csv", "window", "max_gap", "rate", "stderr_multiple", "n_random"});
    if (run.input.empty() && s->has("csv")) run.input = resolve(l, s->str("csv", ""));
    o.window = s->count("window", o.window);
    o.max_gap = s->number("max_gap", o.max_gap);
    o.rate = s->number("rate", o.rate);
    o.stderr_multiple = s->number("stderr_multiple", o.stderr_multiple);
    o.n_random_portfolios = s->count("n_random", o.n_random_portfolios);
  }
  if (run.tol) o.stderr_multiple = *run.tol;
  o.portfolio_seed = l.seed;
  if (run.input.empty()) throw InputError("ingest: no input CSV (positional argument or [ingest] csv)");
  std::ifstream f(run.input);
  if (!f) throw InputError("cannot open input CSV '" + run.input + "'");
  const IngestedSeries series = read_price_csv(f, run.input, o);
  const MarketModel m = ingest_market(series, o);
  const NflvrReport rep = empirical_curvature_report(m, o);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(m.N(), 1.0);
  const CurvatureField rho = curvature(m, *m.log_drift(), x);

  Artifacts art(run.out);
  art.write("prices.csv", [&](std::ostream& os) {
    std::vector<double> v;
    for (const auto& p : series.prices) v.insert(v.end(), p.begin(), p.end());
    write_csv(os, PathEnsemble(series.grid(), 1, series.N(), std::move(v)));
  });
  art.write("log_drift.csv", [&](std::ostream& os) { write_values_csv(os, *m.log_drift()); });
  art.write("rho.csv", [&](std::ostream& os) { write_curvature_csv(os, rho); });
  json nj = rep.to_json();
  nj["window"] = o.window;
  nj["stderr_multiple"] = o.stderr_multiple;
  art.json_file("nflvr.json", nj);
  json labels = series.labels;
  emit_report(art, run,
              {{"command", "ingest"},
               {"N", series.N()},
               {"labels", labels},
               {"rows", series.times.size()},
               {"time_column", series.dates ? "iso-date" : "decimal-years"},
               {"span_years", series.times.back() - series.times.front()},
               {"nflvr", nj}});
  write_manifest(art, run, l.text, l.seed, {{"labels", labels}, {"rate", o.rate}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curvlab: market curvature, arbitrage actions and market dynamics"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  RunConfig run;
  long long seed = 0;
  double tol = 0;
  app.add_option("--config", run.config_path, "scenario config file");
  app.add_option("--out", run.out, "output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  auto* tol_opt = app.add_option("--tol", tol, "override the command's main tolerance");
  app.add_option("--format", run.format, "report format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();

  const std::vector<std::pair<const char*, const char*>> cmds{
      {"simulate", "simulate a market and export its gauges"},
      {"curvature", "curvature field and NFLVR verdict"},
      {"action", "arbitrage action along a strategy file"},
      {"dynamics", "closed-form market dynamics with checks"},
      {"noether", "first integrals along dynamics or a strategy"},
      {"ingest", "empirical single-path market from a price CSV"}};
  for (const auto& [name, help] : cmds) {
    auto* sc = app.add_subcommand(name, help);
    if (std::string(name) == "ingest") sc->add_option("csv", run.input, "price CSV: date|t,<label>,...");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  run.command = app.get_subcommands().front()->get_name();
  if (*seed_opt) run.seed = seed;
  if (*tol_opt) {
    if (!(tol >= 0)) {
      std::cerr << "curvlab: error: --tol must be >= 0\n";
      return 2;
    }
    run.tol = tol;
  }

  try {
    if (run.command == "simulate") return cmd_simulate(run);
    if (run.command == "curvature") return cmd_curvature(run);
    if (run.command == "action") return cmd_action(run);
    if (run.command == "dynamics") return cmd_dynamics(run);
    if (run.command == "noether") return cmd_noether(run);
    return cmd_ingest(run);
  } catch (const curvlab::Error& e) {
    std::cerr << "curvlab " << run.command << ": error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "curvlab " << run.command << ": internal error: " << e.what() << '\n';
    return 3;
  }
}
