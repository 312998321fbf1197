#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <tuple>

#include "curvlab/io.hpp"
#include "curvlab/paths/ensemble.hpp"

namespace curvlab {

// Columnar layout: scenario,time,dim,value
inline void write_csv(std::ostream& os, const PathEnsemble& e) {
  os << "scenario,time,dim,value\n";
  for (std::size_t s = 0; s < e.n_scenarios(); ++s)
    for (std::size_t i = 0; i < e.n_times(); ++i)
      for (std::size_t d = 0; d < e.n_dims(); ++d)
        os << s << ',' << io::num(e.grid()[i]) << ',' << d << ',' << io::num(e(s, d, i)) << '\n';
}

inline PathEnsemble read_ensemble_csv(std::istream& is, std::uint64_t seed = 0) {
  std::string line;
  if (!std::getline(is, line) || io::split(line) != std::vector<std::string>{"scenario", "time", "dim", "value"})
    throw InputError("ensemble csv: expected header scenario,time,dim,value");
  std::map<std::tuple<long long, double, long long>, double> rows;
  std::set<double> times;
  long long ns = 0, nd = 0;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (io::trim(line).empty()) continue;
    const auto f = io::split(line);
    const std::string where = "ensemble csv line " + std::to_string(lineno);
    if (f.size() != 4) throw InputError(where + ": expected 4 fields");
    const long long s = io::to_int(f[0], where), d = io::to_int(f[2], where);
    const double t = io::to_double(f[1], where), v = io::to_double(f[3], where);
    if (s < 0 || d < 0) throw InputError(where + ": negative index");
    if (!rows.emplace(std::tuple{s, t, d}, v).second) throw InputError(where + ": duplicate row");
    times.insert(t);
    ns = std::max(ns, s + 1);
    nd = std::max(nd, d + 1);
  }
  if (rows.empty()) throw InputError("ensemble csv: no data rows");
  TimeGrid grid(std::vector<double>(times.begin(), times.end()));
  const std::size_t nt = grid.size();
  if (rows.size() != static_cast<std::size_t>(ns * nd) * nt)
    throw InputError("ensemble csv: ragged data (every scenario/dim needs every time)");
  std::vector<double> v(rows.size());
  for (const auto& [k, val] : rows) {
    const auto [s, t, d] = k;
    const std::size_t i = grid.index_of(t, 0.0);
    v[(static_cast<std::size_t>(s) * nd + d) * nt + i] = val;
  }
  return PathEnsemble(std::move(grid), ns, nd, std::move(v), seed);
}

}  // namespace curvlab
