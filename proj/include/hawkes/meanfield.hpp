#pragma once

// Deterministic mean-field limit: the Volterra equation
//   m_t = int_0^t phi( int_0^s h(s-u) dm_u ) ds,
// its intensity lambda_t, and the Poisson limit law of a single particle.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hawkes/error.hpp"
#include "hawkes/grid.hpp"
#include "hawkes/model.hpp"

namespace hawkes {

// Grid form of the Stieltjes convolution via integration by parts:
//   int_0^{t_k} h(t_k - s) df_s = h(0) f_k + int_0^{t_k} h'(t_k - s) f_s ds,  f_0 = 0,
// with the h' integral by the trapezoid rule. Lags are tabulated once per grid.
class GridConvolution {
 public:
  GridConvolution() = default;
  GridConvolution(const Kernel& kernel, const TimeGrid& grid)
      : h0_(kernel(0.0)), dt_(grid.dt), zero_(kernel.is_zero()), hprime_(grid.points()) {
    for (std::size_t j = 0; j < hprime_.size(); ++j) hprime_[j] = kernel.deriv(grid.time(j));
  }

  double operator()(std::span<const double> f, std::size_t k) const noexcept {
    if (zero_) return 0.0;
    double acc = 0.5 * (hprime_[k] * f[0] + hprime_[0] * f[k]);
    for (std::size_t j = 1; j < k; ++j) acc += hprime_[k - j] * f[j];
    return h0_ * f[k] + (k > 0 ? acc * dt_ : 0.0);
  }

  bool zero() const noexcept { return zero_; }
  double h0() const noexcept { return h0_; }
  double dt() const noexcept { return dt_; }
  double hprime(std::size_t lag) const noexcept { return hprime_[lag]; }

 private:
  double h0_ = 0.0;
  double dt_ = 0.0;
  bool zero_ = true;
  std::vector<double> hprime_;
};

struct MeanPath {
  TimeGrid grid;
  std::vector<double> m;       // m_{t_k}, m[0] = 0, non-decreasing
  std::vector<double> lambda;  // phi(drive[k])
  std::vector<double> drive;   // int_0^{t_k} h(t_k - s) dm_s

  double m_at(double t) const { return m[grid.index_of(t)]; }

  // Piecewise-linear intensity between grid points.
  double lambda_at(double t) const noexcept {
    if (grid.n == 0 || t <= 0.0) return lambda.front();
    if (t >= grid.T) return lambda.back();
    const double pos = t / grid.dt;
    const auto k = std::min(static_cast<std::size_t>(pos), grid.n - 1);
    const double w = pos - static_cast<double>(k);
    return lambda[k] + w * (lambda[k + 1] - lambda[k]);
  }

  double lambda_max() const noexcept { return *std::max_element(lambda.begin(), lambda.end()); }
};

// Explicit Euler steps m[k+1] = m[k] + dt * phi(c_k), then one Picard sweep that
// re-integrates phi(c(m)) with the trapezoid rule. The Volterra map contracts
// with factor alpha * ||h||_L1 < 1, so the sweep removes most of the Euler error.
inline MeanPath solve_mean(const Kernel& kernel, const RateFn& rate, double T, double dt) {
  if (!(T >= 0.0)) throw DomainError("solve_mean requires T >= 0");
  if (T > 0.0 && dt > T / 10.0 * (1.0 + 1e-12)) throw DomainError("solve_mean requires dt <= T/10");
  MeanPath out;
  out.grid = TimeGrid::make(T, dt);
  const std::size_t n = out.grid.n;
  const GridConvolution conv(kernel, out.grid);
  const double step = out.grid.dt;

  std::vector<double> m(n + 1, 0.0), lam(n + 1, 0.0);
  auto check = [](double v, std::size_t k) {
    if (!std::isfinite(v)) throw SolverDivergence("mean-field solver produced a non-finite value", k);
  };
  for (std::size_t k = 0; k < n; ++k) {
    lam[k] = rate(conv(m, k));
    check(lam[k], k);
    m[k + 1] = m[k] + step * lam[k];
  }
  lam[n] = rate(conv(m, n));
  check(lam[n], n);

  std::vector<double> picard(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    picard[k + 1] = picard[k] + 0.5 * step * (lam[k] + lam[k + 1]);
    check(picard[k + 1], k + 1);
  }

  out.m = std::move(picard);
  out.drive.resize(n + 1);
  out.lambda.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    out.drive[k] = conv(out.m, k);
    out.lambda[k] = rate(out.drive[k]);
    check(out.lambda[k], k);
  }
  return out;
}

struct GridPath {
  TimeGrid grid;
  std::vector<double> values;  // f(t_k), f(0) = 0
};

// Weighted atoms of a pure-jump path on [0, T]; unit weights when empty.
struct EventPath {
  double T = 0.0;
  std::vector<double> times;
  std::vector<double> weights;
};

inline double convolve(const Kernel& kernel, const GridPath& path, double t) {
  const std::size_t k = path.grid.index_of(t);
  if (path.values.size() != path.grid.points()) throw DomainError("grid path length mismatch");
  return GridConvolution(kernel, path.grid)(path.values, k);
}

// Exact Stieltjes sum over atoms at times <= t.
inline double convolve(const Kernel& kernel, const EventPath& path, double t) {
  if (!(t >= 0.0) || t > path.T) throw DomainError("convolution time outside [0, T]");
  if (!path.weights.empty() && path.weights.size() != path.times.size())
    throw DomainError("event path weights mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < path.times.size(); ++i)
    if (path.times[i] <= t) acc += (path.weights.empty() ? 1.0 : path.weights[i]) * kernel(t - path.times[i]);
  return acc;
}

struct LimitLaw {
  std::vector<double> pmf;  // P(X = x), x = 0..K
  double tail_mass = 0.0;   // P(X > K)
  double mean = 0.0;
};

constexpr double kDefaultTailThreshold = 1e-8;

inline std::size_t default_truncation(double mean) {
  return static_cast<std::size_t>(std::ceil(mean + 10.0 * std::sqrt(mean + 1.0)));
}

// Poisson(mean) truncated at K; the tail is summed directly past K so it stays
// accurate far below machine epsilon relative to 1.
inline LimitLaw poisson_law(double mean, std::size_t K, double tail_threshold = kDefaultTailThreshold) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("Poisson mean must be finite and >= 0");
  if (K < 1) throw DomainError("state count K must be >= 1");
  LimitLaw law;
  law.mean = mean;
  law.pmf.assign(K + 1, 0.0);
  if (mean == 0.0) {
    law.pmf[0] = 1.0;
    return law;
  }
  const double log_m = std::log(mean);
  auto term = [&](std::size_t x) {
    return std::exp(-mean + static_cast<double>(x) * log_m - std::lgamma(static_cast<double>(x) + 1.0));
  };
  for (std::size_t x = 0; x <= K; ++x) law.pmf[x] = term(x);
  double tail = 0.0;
  for (std::size_t x = K + 1;; ++x) {
    const double p = term(x);
    tail += p;
    if (static_cast<double>(x) > mean && (p < 1e-300 || p < tail * 1e-17)) break;
  }
  law.tail_mass = tail;
  if (tail > tail_threshold)
    throw TruncationError("Poisson tail mass " + std::to_string(tail) + " above threshold at K=" +
                          std::to_string(K) + "; increase K (suggested K >= " +
                          std::to_string(default_truncation(mean)) + ")");
  return law;
}

inline LimitLaw limit_law(const MeanPath& mean, double t, std::size_t K,
                          double tail_threshold = kDefaultTailThreshold) {
  return poisson_law(mean.m[mean.grid.index_of(t)], K, tail_threshold);
}

// law(k, x) = L_{t_k}(x) for every grid time; the tail check is applied at the
// final time, where it is largest because m is non-decreasing.
inline Table law_table(const MeanPath& mean, std::size_t K, double tail_threshold = kDefaultTailThreshold) {
  Table out(mean.grid.points(), K + 1);
  for (std::size_t k = 0; k <= mean.grid.n; ++k) {
    const auto law = poisson_law(mean.m[k], K, k == mean.grid.n ? tail_threshold : 1.0);
    std::copy(law.pmf.begin(), law.pmf.end(), out.row(k));
  }
  return out;
}

}  // namespace hawkes
