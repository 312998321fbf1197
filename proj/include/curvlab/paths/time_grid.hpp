#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "curvlab/error.hpp"

namespace curvlab {

template <class Real = double>
class basic_time_grid {
 public:
  basic_time_grid() = default;

  explicit basic_time_grid(std::vector<Real> times, Real dt_hint = Real(0))
      : t_(std::move(times)) {
    if (t_.size() < 2) throw ValidationError("time grid needs at least 2 points");
    for (std::size_t i = 0; i < t_.size(); ++i) {
      if (!std::isfinite(t_[i])) throw ValidationError("time grid contains a non-finite point");
      if (i > 0 && !(t_[i] > t_[i - 1])) {
        std::ostringstream os;
        os << "time grid not strictly increasing at index " << i;
        throw ValidationError(os.str());
      }
    }
    dt_ = dt_hint > 0 ? dt_hint : (t_.back() - t_.front()) / Real(t_.size() - 1);
  }

  // n = round((t1 - t0)/dt) steps; the last point is exactly t1.
  static basic_time_grid uniform(Real t0, Real t1, Real dt) {
    if (!(dt > 0) || !(t1 > t0)) throw ValidationError("uniform grid needs t1 > t0 and dt > 0");
    const auto n = static_cast<std::size_t>(std::llround((t1 - t0) / dt));
    if (n < 1) throw ValidationError("uniform grid has fewer than 2 points");
    std::vector<Real> t(n + 1);
    const Real h = (t1 - t0) / Real(n);
    for (std::size_t i = 0; i <= n; ++i) t[i] = t0 + h * Real(i);
    t[n] = t1;
    return basic_time_grid(std::move(t), h);
  }

  std::size_t size() const noexcept { return t_.size(); }
  Real operator[](std::size_t i) const { return t_[i]; }
  Real front() const { return t_.front(); }
  Real back() const { return t_.back(); }
  Real dt() const noexcept { return dt_; }
  const std::vector<Real>& times() const noexcept { return t_; }

  bool is_uniform(Real rel_tol = Real(1e-9)) const {
    for (std::size_t i = 1; i < t_.size(); ++i)
      if (std::abs((t_[i] - t_[i - 1]) - dt_) > rel_tol * dt_) return false;
    return true;
  }

  // Index of the grid point equal to t within tol, else throws.
  std::size_t index_of(Real t, Real tol = Real(1e-9)) const {
    std::size_t lo = 0, hi = t_.size() - 1;
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      (t_[mid] <= t ? lo : hi) = mid;
    }
    if (std::abs(t_[lo] - t) <= tol) return lo;
    if (std::abs(t_[hi] - t) <= tol) return hi;
    std::ostringstream os;
    os << "time " << t << " is not a grid point";
    throw DimensionError(os.str());
  }

  // Every stride-th point (the last point is kept only if it falls on the stride).
  basic_time_grid subsample(std::size_t stride) const {
    if (stride == 0) throw ValidationError("stride must be positive");
    std::vector<Real> t;
    for (std::size_t i = 0; i < t_.size(); i += stride) t.push_back(t_[i]);
    return basic_time_grid(std::move(t), dt_ * Real(stride));
  }

  bool same_as(const basic_time_grid& o, Real tol = Real(1e-12)) const {
    if (o.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (std::abs(o.t_[i] - t_[i]) > tol * (1 + std::abs(t_[i]))) return false;
    return true;
  }

 private:
  std::vector<Real> t_;
  Real dt_ = 0;
};

using TimeGrid = basic_time_grid<double>;

}  // namespace curvlab
