#pragma once

// Exact simulation of the N-particle mean-field Hawkes system by thinning its
// Poisson embedding. Particle i owns the sub-stream (seed, i) standing in for
// its Poisson random measure: candidate arrivals come from unit exponentials
// and each candidate carries a uniform mark u, accepted iff u * bound <= lambda.
//
// All particles share one dominating rate, so candidates are scheduled on a
// common hazard clock H(t) = int_0^t bound(s) ds. A particle's next candidate
// sits at a fixed hazard level H + E; when the bound changes (only at accepted
// jumps) the pending levels stay valid and only the level-to-time map changes.
// No draw is ever discarded, and equal hazard levels break ties by particle index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "hawkes/error.hpp"
#include "hawkes/grid.hpp"
#include "hawkes/meanfield.hpp"
#include "hawkes/model.hpp"
#include "hawkes/random.hpp"

namespace hawkes {

enum class LogKind : std::uint8_t { hawkes = 0, mf_poisson = 1, perturbed = 2 };

struct EventLog {
  std::uint32_t N = 0;
  double T = 0.0;
  std::uint64_t seed = 0;
  LogKind kind = LogKind::hawkes;
  std::vector<std::vector<double>> jumps;  // per particle, strictly increasing, in (0, T]

  std::size_t total_jumps() const noexcept {
    std::size_t s = 0;
    for (const auto& j : jumps) s += j.size();
    return s;
  }

  // Z^i_t: jumps of particle i at times <= t.
  std::size_t count(std::size_t i, double t) const {
    const auto& j = jumps[i];
    return static_cast<std::size_t>(std::upper_bound(j.begin(), j.end(), t) - j.begin());
  }

  bool same_events(const EventLog& o) const noexcept {
    return N == o.N && T == o.T && seed == o.seed && jumps == o.jumps;
  }
};

struct CouplingLog {
  EventLog hawkes;
  EventLog poisson;
  std::uint64_t seed = 0;
};

// Gradient of the tilting test function psi along the count lattice:
// grad(t, x) = psi(t, x+1) - psi(t, x); grad_sup bounds |grad| on [0, T] x N.
struct Tilt {
  std::function<double(double, std::uint64_t)> grad;
  double grad_sup = 0.0;
};

inline Tilt linear_tilt(double c) {
  return {[c](double, std::uint64_t) { return c; }, std::abs(c)};
}

struct SimulationLimits {
  double max_rate = 1e12;  // dominating rate above this aborts
};

namespace detail {

// N^{-1} sum_j int_0^{t-} h(t - s) dZ^j_s, queried at non-decreasing times.
class Excitation {
 public:
  Excitation(const Kernel& kernel, std::uint32_t N) : kernel_(kernel), inv_n_(1.0 / N) {
    if (const auto* e = kernel.as_exponential()) {
      exp_ = true;
      a_ = e->a;
      b_ = e->b;
    } else if (const auto* c = std::get_if<ConstantKernel>(&kernel.descriptor())) {
      constant_ = true;
      a_ = c->c;
    }
  }

  double at(double t) {
    if (kernel_.is_zero()) return 0.0;
    if (exp_) {
      y_ *= std::exp(-b_ * (t - t_));
      t_ = t;
      return y_;
    }
    if (constant_) return a_ * static_cast<double>(count_) * inv_n_;
    double acc = 0.0;
    for (double s : times_) acc += kernel_(t - s);
    return acc * inv_n_;
  }

  void add_jump(double t) {
    ++count_;
    if (exp_) {
      at(t);
      y_ += a_ * inv_n_;
    } else if (!constant_ && !kernel_.is_zero()) {
      times_.push_back(t);
    }
  }

 private:
  const Kernel& kernel_;
  double inv_n_;
  bool exp_ = false;
  bool constant_ = false;
  double a_ = 0.0, b_ = 0.0;
  double y_ = 0.0, t_ = 0.0;
  std::size_t count_ = 0;
  std::vector<double> times_;
};

struct Pending {
  double level;
  std::uint32_t particle;
  bool operator>(const Pending& o) const noexcept {
    return level > o.level || (level == o.level && particle > o.particle);
  }
};

// Drives the shared hazard clock. `bound()` is the current dominating rate and
// `visit(i, t, u)` decides acceptance for particle i's candidate at time t with
// uniform mark u; it returns true when the dominating rate must be refreshed.
template <class Bound, class Visit>
void run_thinning(std::uint32_t N, double T, std::uint64_t seed, Bound&& bound, Visit&& visit,
                  const SimulationLimits& limits) {
  std::vector<MarkStream> streams(N);
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;
  for (std::uint32_t i = 0; i < N; ++i) {
    streams[i] = MarkStream(seed, i);
    queue.push({streams[i].exponential(), i});
  }
  auto checked = [&](double r) {
    if (!std::isfinite(r) || r > limits.max_rate)
      throw SimulationAbort("dominating rate " + std::to_string(r) + " overflows the configured limit");
    if (!(r > 0.0)) throw SimulationAbort("dominating rate must be positive");
    return r;
  };
  double rate = checked(bound());
  double t = 0.0, level = 0.0;
  while (!queue.empty()) {
    const Pending next = queue.top();
    const double tc = t + (next.level - level) / rate;
    if (tc > T) break;
    queue.pop();
    t = tc;
    level = next.level;
    const double u = streams[next.particle].uniform();
    if (visit(next.particle, t, u, rate)) rate = checked(bound());
    queue.push({level + streams[next.particle].exponential(), next.particle});
  }
}

inline void check_intensity(double lambda, double bound, double t) {
  if (!(lambda <= bound * (1.0 + 1e-12)))
    throw SimulationAbort("intensity " + std::to_string(lambda) + " exceeds dominating rate " +
                          std::to_string(bound) + " at t=" + std::to_string(t));
}

inline void check_args(std::uint32_t N, double T) {
  if (N < 1) throw DomainError("simulation needs N >= 1");
  if (!(T > 0.0) || !std::isfinite(T)) throw DomainError("simulation needs finite T > 0");
}

}  // namespace detail

// Mean-field Hawkes system with common intensity phi(N^{-1} sum_j int h dZ^j).
// Dominating rate phi(0) + alpha * ||h||_0^T * Zbar, valid until the next jump.
inline EventLog simulate_hawkes(std::uint32_t N, const Kernel& kernel, const RateFn& rate, double T,
                                std::uint64_t seed, const SimulationLimits& limits = {}) {
  detail::check_args(N, T);
  EventLog log{N, T, seed, LogKind::hawkes, std::vector<std::vector<double>>(N)};
  detail::Excitation exc(kernel, N);
  const double phi0 = rate(0.0);
  const double slope = rate.lipschitz() * kernel_sup(kernel, T);
  std::size_t total = 0;
  detail::run_thinning(
      N, T, seed, [&] { return phi0 + slope * static_cast<double>(total) / N; },
      [&](std::uint32_t i, double t, double u, double bound) {
        const double lambda = rate(exc.at(t));
        detail::check_intensity(lambda, bound, t);
        if (u * bound > lambda) return false;
        log.jumps[i].push_back(t);
        exc.add_jump(t);
        ++total;
        return true;
      },
      limits);
  return log;
}

// Hawkes system and N independent inhomogeneous Poisson processes with the
// limit intensity lambda_t, both thinned from the same candidate points and
// marks: a candidate enters each log iff its mark clears that log's intensity.
inline CouplingLog simulate_coupled(std::uint32_t N, const Kernel& kernel, const RateFn& rate,
                                    const MeanPath& mean, double T, std::uint64_t seed,
                                    const SimulationLimits& limits = {}) {
  detail::check_args(N, T);
  if (mean.grid.T < T * (1.0 - 1e-12)) throw DomainError("mean path does not cover [0, T]");
  CouplingLog out;
  out.seed = seed;
  out.hawkes = {N, T, seed, LogKind::hawkes, std::vector<std::vector<double>>(N)};
  out.poisson = {N, T, seed, LogKind::mf_poisson, std::vector<std::vector<double>>(N)};
  detail::Excitation exc(kernel, N);
  const double phi0 = rate(0.0);
  const double slope = rate.lipschitz() * kernel_sup(kernel, T);
  const double mf_max = mean.lambda_max();
  std::size_t total = 0;
  detail::run_thinning(
      N, T, seed, [&] { return std::max(phi0 + slope * static_cast<double>(total) / N, mf_max); },
      [&](std::uint32_t i, double t, double u, double bound) {
        const double lam_h = rate(exc.at(t));
        const double lam_mf = mean.lambda_at(t);
        detail::check_intensity(lam_h, bound, t);
        detail::check_intensity(lam_mf, bound, t);
        if (u * bound <= lam_mf) out.poisson.jumps[i].push_back(t);
        if (u * bound > lam_h) return false;
        out.hawkes.jumps[i].push_back(t);
        exc.add_jump(t);
        ++total;
        return true;
      },
      limits);
  return out;
}

// Tilted system: particle i jumps with intensity
//   exp(scale * grad psi(t, Z^i_{t-})) * phi(int_0^{t-} h(t-s) dZbar_s),
// where scale = a(N)/sqrt(N). The Hawkes bound is multiplied by exp(scale * sup|grad psi|).
inline EventLog simulate_perturbed(std::uint32_t N, const Kernel& kernel, const RateFn& rate,
                                   const Tilt& tilt, double scale, double T, std::uint64_t seed,
                                   const SimulationLimits& limits = {}) {
  detail::check_args(N, T);
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("tilt scale a(N)/sqrt(N) must be positive");
  if (!tilt.grad || !std::isfinite(tilt.grad_sup)) throw DomainError("tilt needs a gradient with finite sup");
  EventLog log{N, T, seed, LogKind::perturbed, std::vector<std::vector<double>>(N)};
  detail::Excitation exc(kernel, N);
  const double phi0 = rate(0.0);
  const double slope = rate.lipschitz() * kernel_sup(kernel, T);
  const double mult = std::exp(scale * tilt.grad_sup);
  std::size_t total = 0;
  detail::run_thinning(
      N, T, seed, [&] { return mult * (phi0 + slope * static_cast<double>(total) / N); },
      [&](std::uint32_t i, double t, double u, double bound) {
        const double g = tilt.grad(t, log.jumps[i].size());
        if (std::abs(g) > tilt.grad_sup * (1.0 + 1e-12))
          throw SimulationAbort("tilt gradient exceeds its declared sup at t=" + std::to_string(t));
        const double lambda = std::exp(scale * g) * rate(exc.at(t));
        detail::check_intensity(lambda, bound, t);
        if (u * bound > lambda) return false;
        log.jumps[i].push_back(t);
        exc.add_jump(t);
        ++total;
        return true;
      },
      limits);
  return log;
}

// Zbar^N on a grid: N^{-1} sum_i #{jumps of i <= t_k}.
inline std::vector<double> mean_path(const EventLog& log, const TimeGrid& grid) {
  if (std::abs(grid.T - log.T) > 1e-12 * std::max(1.0, log.T)) throw DomainError("grid and log horizons differ");
  std::vector<double> all;
  all.reserve(log.total_jumps());
  for (const auto& j : log.jumps) all.insert(all.end(), j.begin(), j.end());
  std::sort(all.begin(), all.end());
  std::vector<double> out(grid.points(), 0.0);
  std::size_t p = 0;
  for (std::size_t k = 0; k <= grid.n; ++k) {
    const double t = grid.time(k);
    while (p < all.size() && all[p] <= t) ++p;
    out[k] = static_cast<double>(p) / static_cast<double>(log.N);
  }
  return out;
}

struct EmpiricalMeasure {
  std::vector<double> pmf;  // fraction of particles at each count 0..K
  std::size_t overflow = 0;  // particles with count > K
};

// L^N_t restricted to {0..K}.
inline EmpiricalMeasure empirical_measure(const EventLog& log, double t, std::size_t K) {
  if (log.N == 0) throw DomainError("empirical measure needs N >= 1");
  EmpiricalMeasure out{std::vector<double>(K + 1, 0.0), 0};
  const double w = 1.0 / static_cast<double>(log.N);
  for (std::size_t i = 0; i < log.N; ++i) {
    const std::size_t c = log.count(i, t);
    if (c > K) {
      ++out.overflow;
    } else {
      out.pmf[c] += w;
    }
  }
  return out;
}

}  // namespace hawkes
