#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <string>
#include <vector>

#include "curvlab/geometry/curvature.hpp"
#include "curvlab/geometry/market.hpp"
#include "curvlab/io.hpp"

namespace curvlab {

// One observed price path per asset on a strictly increasing time column.
struct IngestedSeries {
  std::vector<std::string> labels;
  std::vector<double> times;                // decimal years (ISO dates measured from the first row)
  std::vector<std::vector<double>> prices;  // [asset][t]
  bool dates = false;

  std::size_t N() const { return labels.size(); }
  TimeGrid grid() const { return TimeGrid(times); }
};

struct IngestOptions {
  double max_gap = 5.0;     // largest step allowed, as a multiple of the median step
  std::size_t window = 10;  // half-width (in rows) of the rolling drift estimate
  double rate = 0.0;        // flat short rate attached to every asset
  double stderr_multiple = 5.0;
  double abs_floor = 1e-10;
  std::size_t n_random_portfolios = 16;
  std::uint64_t portfolio_seed = 7;
};

namespace detail {

// YYYY-MM-DD to days since 1970-01-01; false if the text is not an ISO date.
inline bool parse_iso_date(std::string_view s, long& days) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  long long y, m, d;
  try {
    y = io::to_int(s.substr(0, 4), ""), m = io::to_int(s.substr(5, 2), ""), d = io::to_int(s.substr(8, 2), "");
  } catch (const InputError&) {
    return false;
  }
  using namespace std::chrono;
  const year_month_day ymd{year{static_cast<int>(y)}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return false;
  days = static_cast<long>(sys_days{ymd}.time_since_epoch().count());
  return true;
}

}  // namespace detail

// Header: a time column (date | t) followed by one price column per asset.
// Times are ISO dates or decimal years; the first data row fixes which.
inline IngestedSeries read_price_csv(std::istream& is, const std::string& origin = "<csv>",
                                     const IngestOptions& o = {}) {
  std::string line;
  if (!std::getline(is, line)) throw InputError(origin + ": empty file");
  const auto head = io::split(line);
  if (head.size() < 2 || (head[0] != "date" && head[0] != "t"))
    throw InputError(origin + ":1: expected header 'date|t,<label>,...'");
  IngestedSeries out;
  out.labels.assign(head.begin() + 1, head.end());
  for (const auto& l : out.labels)
    if (l.empty()) throw InputError(origin + ":1: empty asset label");
  out.prices.resize(out.N());
  std::size_t ln = 1;
  long day0 = 0;
  while (std::getline(is, line)) {
    ++ln;
    if (io::trim(line).empty()) continue;
    const std::string at = origin + ":" + std::to_string(ln);
    const auto f = io::split(line);
    if (f.size() != head.size()) throw InputError(at + ": expected " + std::to_string(head.size()) + " fields");
    long days = 0;
    const bool is_date = detail::parse_iso_date(f[0], days);
    if (out.times.empty()) {
      out.dates = is_date;
      day0 = days;
    } else if (is_date != out.dates) {
      throw InputError(at + ": mixed date and numeric time values");
    }
    const double t = is_date ? static_cast<double>(days - day0) / 365.25 : io::to_double(f[0], at);
    if (!std::isfinite(t)) throw InputError(at + ": non-finite time");
    if (!out.times.empty() && !(t > out.times.back()))
      throw InputError(at + ": times must be strictly increasing (" + std::string(f[0]) + ")");
    out.times.push_back(t);
    for (std::size_t j = 0; j < out.N(); ++j) {
      const double p = io::to_double(f[j + 1], at);
      if (!(p > 0) || !std::isfinite(p)) throw InputError(at + ": price of '" + out.labels[j] + "' must be positive");
      out.prices[j].push_back(p);
    }
  }
  if (out.times.size() < 3) throw InputError(origin + ": need at least three rows");
  std::vector<double> steps;
  for (std::size_t i = 1; i < out.times.size(); ++i) steps.push_back(out.times[i] - out.times[i - 1]);
  std::vector<double> sorted = steps;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double med = sorted[sorted.size() / 2];
  for (std::size_t i = 0; i < steps.size(); ++i)
    if (steps[i] > o.max_gap * med)
      throw InputError(origin + ": gap of " + io::num(steps[i]) + " before data row " + std::to_string(i + 2) +
                       " exceeds " + io::num(o.max_gap) + " x the median step");
  return out;
}

// Single-path substitute for the conditional mean derivative of log price:
// symmetric difference over `window` rows on each side, NaN near the ends.
inline Field rolling_log_drift(const IngestedSeries& s, std::size_t window) {
  if (window < 1) throw ValidationError("rolling window must be >= 1");
  const std::size_t nt = s.times.size(), N = s.N();
  if (2 * window >= nt) throw ValidationError("rolling window too wide for the series length");
  Field f = Field::unavailable(s.grid(), 1, N);
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t i = window; i + window < nt; ++i)
      f.at(0, j, i) = (std::log(s.prices[j][i + window]) - std::log(s.prices[j][i - window])) /
                      (s.times[i + window] - s.times[i - window]);
  return f;
}

// One-scenario market: prices as deflators, a flat short-rate placeholder as
// term structure and rolling-window drifts attached as the log drift.
inline MarketModel ingest_market(const IngestedSeries& s, const IngestOptions& o = {}) {
  const TimeGrid g = s.grid();
  std::vector<Gauge> gs;
  for (std::size_t j = 0; j < s.N(); ++j)
    gs.push_back(Gauge{PathEnsemble(g, 1, 1, s.prices[j]), CurveTermStructure::flat(g, 1, o.rate), s.labels[j]});
  return MarketModel(std::move(gs), rolling_log_drift(s, o.window));
}

// Time averages replace ensemble means. Overlapping windows share increments,
// so the effective sample count is the number of times over 2 * window, and
// the tolerance widens accordingly.
inline NflvrReport empirical_curvature_report(const MarketModel& m, const IngestOptions& o = {}) {
  if (m.n_scenarios() != 1) throw ValidationError("empirical curvature expects a single path");
  if (!m.log_drift()) throw ValidationError("empirical curvature needs rolling drifts");
  const Field& drift = *m.log_drift();
  const std::size_t nt = m.grid().size(), N = m.N();
  double sum_mean2 = 0, sum_var = 0, sum_path2 = 0;
  std::size_t cnt = 0, blocks = 0;
  for (const auto& x : sample_portfolios(N, o.n_random_portfolios, o.portfolio_seed)) {
    const auto c = curvature(m, drift, x);
    for (std::size_t j = 0; j < N; ++j) {
      double mean = 0, m2 = 0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < nt; ++i)
        if (c.rho.available(0, j, i)) {
          const double v = c.rho(0, j, i);
          mean += v, m2 += v * v, ++n;
        }
      if (n < 2) continue;
      mean /= n;
      const double var = std::max(0.0, (m2 - n * mean * mean) / (n - 1));
      const double n_eff = std::max(1.0, static_cast<double>(n) / (2.0 * o.window));
      sum_mean2 += mean * mean;
      sum_var += var / n_eff;
      sum_path2 += m2 / n;
      ++blocks;
      cnt += n;
    }
  }
  if (blocks == 0) throw ValidationError("empirical curvature: no times with rolling drifts");
  NflvrReport r;
  r.empirical = true;
  r.n_points = cnt;
  r.curvature_rms = std::sqrt(sum_mean2 / blocks);
  r.pathwise_rms = std::sqrt(sum_path2 / blocks);
  r.stderr = std::sqrt(sum_var / blocks);
  r.threshold = o.stderr_multiple * r.stderr + o.abs_floor;
  r.verdict = r.curvature_rms <= r.threshold ? "consistent-with-NFLVR" : "arbitrage-detected";
  return r;
}

}  // namespace curvlab
