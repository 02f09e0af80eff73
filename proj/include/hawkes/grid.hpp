#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hawkes/error.hpp"

namespace hawkes {

// Uniform grid t_k = k * dt, k = 0..n, with n * dt = T. The only grid with
// n = 0 is the degenerate one at T = 0.
struct TimeGrid {
  double T = 0.0;
  double dt = 0.0;
  std::size_t n = 0;

  static TimeGrid make(double T, double dt) {
    if (!(T >= 0.0) || !std::isfinite(T)) throw DomainError("time grid needs finite T >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("time grid needs dt > 0");
    if (T == 0.0) return {0.0, dt, 0};
    const double steps = T / dt;
    const auto n = static_cast<std::size_t>(std::llround(steps));
    if (n == 0 || std::abs(steps - static_cast<double>(n)) > 1e-6 * std::max(1.0, steps))
      throw DomainError("dt must divide T into a whole number of steps");
    return {T, T / static_cast<double>(n), n};
  }

  double time(std::size_t k) const noexcept {
    return k == n ? T : static_cast<double>(k) * dt;
  }
  std::size_t points() const noexcept { return n + 1; }

  // Index of a time lying on the grid (within 1e-9 relative).
  std::size_t index_of(double t) const {
    if (!(t >= -1e-12) || t > T * (1 + 1e-12) + 1e-12)
      throw DomainError("time " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
    if (n == 0) return 0;
    const double pos = t / dt;
    const auto k = static_cast<std::size_t>(std::llround(pos));
    if (std::abs(pos - static_cast<double>(k)) > 1e-9 * std::max(1.0, pos) || k > n)
      throw DomainError("time " + std::to_string(t) + " is not a grid point");
    return k;
  }

  bool same_as(const TimeGrid& o) const noexcept {
    return n == o.n && std::abs(T - o.T) <= 1e-12 * std::max(1.0, T);
  }
};

// Row-major (rows x cols) matrix of doubles; rows index grid times.
class Table {
 public:
  Table() = default;
  Table(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double* row(std::size_t r) noexcept { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const noexcept { return data_.data() + r * cols_; }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  const std::vector<double>& data() const noexcept { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace hawkes
