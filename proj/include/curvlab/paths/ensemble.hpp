#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "curvlab/error.hpp"
#include "curvlab/paths/time_grid.hpp"

namespace curvlab {

namespace detail {

// Dense (scenario, dim, time) storage, time fastest.
template <class Real>
class ensemble_storage {
 public:
  ensemble_storage() = default;
  ensemble_storage(basic_time_grid<Real> grid, std::size_t ns, std::size_t nd,
                   std::vector<Real> values, std::uint64_t seed)
      : grid_(std::move(grid)), ns_(ns), nd_(nd), v_(std::move(values)), seed_(seed) {
    if (ns_ < 1) throw ValidationError("ensemble needs at least one scenario");
    if (nd_ < 1) throw ValidationError("ensemble needs at least one dimension");
    if (v_.size() != ns_ * nd_ * grid_.size()) {
      std::ostringstream os;
      os << "ensemble value count " << v_.size() << " != " << ns_ << "x" << nd_ << "x" << grid_.size();
      throw DimensionError(os.str());
    }
  }

  const basic_time_grid<Real>& grid() const noexcept { return grid_; }
  std::size_t n_scenarios() const noexcept { return ns_; }
  std::size_t n_dims() const noexcept { return nd_; }
  std::size_t n_times() const noexcept { return grid_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }

  Real operator()(std::size_t s, std::size_t d, std::size_t i) const {
    return v_[(s * nd_ + d) * grid_.size() + i];
  }
  Real operator()(std::size_t s, std::size_t i) const { return (*this)(s, 0, i); }

  std::span<const Real> path(std::size_t s, std::size_t d = 0) const {
    return {v_.data() + (s * nd_ + d) * grid_.size(), grid_.size()};
  }
  const std::vector<Real>& values() const noexcept { return v_; }

  static std::size_t offset(std::size_t nd, std::size_t nt, std::size_t s, std::size_t d,
                            std::size_t i) {
    return (s * nd + d) * nt + i;
  }

 protected:
  basic_time_grid<Real> grid_;
  std::size_t ns_ = 0, nd_ = 0;
  std::vector<Real> v_;
  std::uint64_t seed_ = 0;
};

}  // namespace detail

// Immutable sampled process. Construction rejects NaN and Inf.
template <class Real = double>
class basic_path_ensemble : public detail::ensemble_storage<Real> {
  using base = detail::ensemble_storage<Real>;

 public:
  basic_path_ensemble() = default;
  basic_path_ensemble(basic_time_grid<Real> grid, std::size_t ns, std::size_t nd,
                      std::vector<Real> values, std::uint64_t seed = 0)
      : base(std::move(grid), ns, nd, std::move(values), seed) {
    const std::size_t nt = this->grid_.size();
    for (std::size_t k = 0; k < this->v_.size(); ++k) {
      if (!std::isfinite(this->v_[k])) {
        const std::size_t i = k % nt, sd = k / nt;
        std::ostringstream os;
        os << "non-finite value in path ensemble at scenario " << sd / nd << ", dim " << sd % nd
           << ", t=" << this->grid_[i];
        throw ValidationError(os.str());
      }
    }
  }

  static basic_path_ensemble constant(basic_time_grid<Real> grid, std::size_t ns, std::size_t nd,
                                      Real value, std::uint64_t seed = 0) {
    std::vector<Real> v(ns * nd * grid.size(), value);
    return basic_path_ensemble(std::move(grid), ns, nd, std::move(v), seed);
  }

  // One dimension of a vector ensemble.
  basic_path_ensemble component(std::size_t d) const {
    const std::size_t nt = this->n_times();
    std::vector<Real> v(this->ns_ * nt);
    for (std::size_t s = 0; s < this->ns_; ++s)
      for (std::size_t i = 0; i < nt; ++i) v[s * nt + i] = (*this)(s, d, i);
    return basic_path_ensemble(this->grid_, this->ns_, 1, std::move(v), this->seed_);
  }

  basic_path_ensemble subsample(std::size_t stride) const {
    auto g = this->grid_.subsample(stride);
    const std::size_t nt = g.size(), nd = this->nd_;
    std::vector<Real> v(this->ns_ * nd * nt);
    for (std::size_t s = 0; s < this->ns_; ++s)
      for (std::size_t d = 0; d < nd; ++d)
        for (std::size_t i = 0; i < nt; ++i)
          v[base::offset(nd, nt, s, d, i)] = (*this)(s, d, i * stride);
    return basic_path_ensemble(std::move(g), this->ns_, nd, std::move(v), this->seed_);
  }
};

// Same layout, but NaN marks "not available" (e.g. backward derivative at t0).
template <class Real = double>
class basic_field : public detail::ensemble_storage<Real> {
  using base = detail::ensemble_storage<Real>;

 public:
  basic_field() = default;
  basic_field(basic_time_grid<Real> grid, std::size_t ns, std::size_t nd, std::vector<Real> values)
      : base(std::move(grid), ns, nd, std::move(values), 0) {}

  static basic_field unavailable(basic_time_grid<Real> grid, std::size_t ns, std::size_t nd) {
    std::vector<Real> v(ns * nd * grid.size(), std::numeric_limits<Real>::quiet_NaN());
    return basic_field(std::move(grid), ns, nd, std::move(v));
  }

  bool available(std::size_t s, std::size_t d, std::size_t i) const {
    return !std::isnan((*this)(s, d, i));
  }
  bool available_at(std::size_t i) const {
    for (std::size_t s = 0; s < this->ns_; ++s)
      for (std::size_t d = 0; d < this->nd_; ++d)
        if (!available(s, d, i)) return false;
    return true;
  }
  Real& at(std::size_t s, std::size_t d, std::size_t i) {
    return this->v_[base::offset(this->nd_, this->grid_.size(), s, d, i)];
  }
};

using PathEnsemble = basic_path_ensemble<double>;
using Field = basic_field<double>;

template <class A, class B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (!a.grid().same_as(b.grid()) || a.n_scenarios() != b.n_scenarios()) {
    std::ostringstream os;
    os << what << ": grid or scenario count mismatch";
    throw DimensionError(os.str());
  }
}

}  // namespace curvlab
