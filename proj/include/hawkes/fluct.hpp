#pragma once

// Gaussian fluctuations around the mean-field limit: empirical centered and
// rescaled fields built from event logs, the scalar limit SDE for the mean
// process with its variance, and the field-valued limit on a truncated lattice.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hawkes/engine.hpp"
#include "hawkes/error.hpp"
#include "hawkes/grid.hpp"
#include "hawkes/meanfield.hpp"
#include "hawkes/model.hpp"
#include "hawkes/random.hpp"

namespace hawkes {

// Signed-measure-valued path on grid x {0..K}; values(k, x) is the field at
// (t_k, x). mass_defect[k] is the mass carried beyond K, so that
// sum_x values(k, x) = -mass_defect[k].
struct FieldPath {
  TimeGrid grid;
  std::size_t K = 0;
  Table values;
  std::vector<double> mass_defect;

  // <field_{t_k}, f> over the truncated lattice.
  template <class F>
  double pair(std::size_t k, F&& f) const {
    double acc = 0.0;
    const double* row = values.row(k);
    for (std::size_t x = 0; x <= K; ++x) acc += row[x] * f(x);
    return acc;
  }
  double pair_ell(std::size_t k) const {
    return pair(k, [](std::size_t x) { return static_cast<double>(x); });
  }
  double total_mass(std::size_t k) const {
    return pair(k, [](std::size_t) { return 1.0; });
  }
  double sup_abs() const {
    double s = 0.0;
    for (double v : values.data()) s = std::max(s, std::abs(v));
    return s;
  }
};

// a(N) = N^gamma with gamma in (0, 1/2), so a(N) -> infinity and a(N)/sqrt(N) -> 0.
struct SpeedSequence {
  double gamma = 0.25;

  explicit SpeedSequence(double g) : gamma(g) {
    if (!(g > 0.0 && g < 0.5)) throw DomainError("speed exponent gamma must lie in (0, 1/2)");
  }
  double operator()(double N) const noexcept { return std::pow(N, gamma); }
  double tilt_scale(double N) const noexcept { return std::pow(N, gamma - 0.5); }
};

// sqrt(N) (L^N_t(x) - L_t(x)) on mean.grid x {0..K}.
inline FieldPath centered_field(const EventLog& log, const MeanPath& mean, std::size_t K,
                                double tail_threshold = kDefaultTailThreshold) {
  if (std::abs(mean.grid.T - log.T) > 1e-12 * std::max(1.0, log.T))
    throw DomainError("event log and mean path horizons differ");
  if (log.N == 0) throw DomainError("centered field needs N >= 1");
  const Table law = law_table(mean, K, tail_threshold);
  const auto& grid = mean.grid;
  Table counts(grid.points(), K + 1);
  for (const auto& jumps : log.jumps) {
    std::size_t c = 0;
    for (std::size_t k = 0; k <= grid.n; ++k) {
      const double t = grid.time(k);
      while (c < jumps.size() && jumps[c] <= t) ++c;
      if (c <= K) counts(k, c) += 1.0;
    }
  }
  const double N = log.N;
  const double rootN = std::sqrt(N);
  FieldPath out{grid, K, Table(grid.points(), K + 1), std::vector<double>(grid.points(), 0.0)};
  for (std::size_t k = 0; k <= grid.n; ++k) {
    double sum = 0.0;
    for (std::size_t x = 0; x <= K; ++x) {
      const double v = rootN * (counts(k, x) / N - law(k, x));
      out.values(k, x) = v;
      sum += v;
    }
    out.mass_defect[k] = -sum;
  }
  return out;
}

// sqrt(N) (L^N - L) / a(N).
inline FieldPath rescaled_field(const EventLog& log, const MeanPath& mean, std::size_t K,
                                const SpeedSequence& speed, double tail_threshold = kDefaultTailThreshold) {
  FieldPath f = centered_field(log, mean, K, tail_threshold);
  const double a = speed(log.N);
  for (std::size_t k = 0; k < f.values.rows(); ++k) {
    double* row = f.values.row(k);
    for (std::size_t x = 0; x <= K; ++x) row[x] /= a;
    f.mass_defect[k] /= a;
  }
  return f;
}

// Euler-Maruyama for the limit of sqrt(N)(Zbar^N - m):
//   dX = phi'(c_t) (int_0^t h(t-s) dX_s) dt + sqrt(lambda_t) dW_t,  X_0 = 0.
inline std::vector<double> simulate_limit_mean(const MeanPath& mean, const Kernel& kernel,
                                               const RateFn& rate, std::uint64_t seed) {
  const auto& grid = mean.grid;
  const GridConvolution conv(kernel, grid);
  std::vector<double> x(grid.points(), 0.0);
  for (std::size_t k = 0; k < grid.n; ++k) {
    const double drift = conv.zero() ? 0.0 : rate.deriv(mean.drive[k]) * conv(x, k);
    x[k + 1] = x[k] + grid.dt * drift + std::sqrt(mean.lambda[k] * grid.dt) * gaussian_at(seed, 0, k);
    if (!std::isfinite(x[k + 1])) throw SolverDivergence("limit mean SDE diverged", k + 1);
  }
  return x;
}

constexpr std::size_t kDenseVarianceCap = 512;

// Variance of the limit mean process by propagating the noise loadings of a
// Heun-type linear recursion: X_k = sum_i G(k, i) xi_i, Var X_k = sum_i G(k, i)^2.
// Memory O(n^2), time O(n^3); refuses grids with n > cap.
inline std::vector<double> dense_mean_variance(const MeanPath& mean, const Kernel& kernel,
                                               const RateFn& rate, std::size_t cap = kDenseVarianceCap) {
  const auto& grid = mean.grid;
  const std::size_t n = grid.n;
  if (n > cap)
    throw DomainError("grid has " + std::to_string(n) + " steps, above the dense propagation cap of " +
                      std::to_string(cap) + "; use a coarser grid or the Monte Carlo estimate");
  const GridConvolution conv(kernel, grid);
  const double dt = grid.dt;
  // G(k, i): loading of X_k on xi_i (i < k).
  Table G(n + 1, std::max<std::size_t>(n, 1));
  std::vector<double> d0(n), d1(n);
  // Convolution of the loading rows, evaluated column-wise over noise indices.
  auto drift_into = [&](std::size_t k, std::vector<double>& out) {
    const double beta = rate.deriv(mean.drive[k]);
    std::fill(out.begin(), out.end(), 0.0);
    if (conv.zero() || beta == 0.0) return;
    const double* gk = G.row(k);
    const double c_last = conv.h0() + (k > 0 ? 0.5 * conv.hprime(0) * dt : 0.0);
    for (std::size_t i = 0; i < k; ++i) out[i] = c_last * gk[i];
    for (std::size_t j = 1; j < k; ++j) {
      const double w = conv.hprime(k - j) * dt;
      const double* gj = G.row(j);
      for (std::size_t i = 0; i < j; ++i) out[i] += w * gj[i];
    }
    for (std::size_t i = 0; i < k; ++i) out[i] *= beta;
  };
  std::vector<double> var(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = std::sqrt(0.5 * dt * (mean.lambda[k] + mean.lambda[k + 1]));
    drift_into(k, d0);
    double* next = G.row(k + 1);
    const double* cur = G.row(k);
    for (std::size_t i = 0; i < k; ++i) next[i] = cur[i] + dt * d0[i];
    next[k] = s;
    drift_into(k + 1, d1);
    for (std::size_t i = 0; i < k; ++i) next[i] = cur[i] + 0.5 * dt * (d0[i] + d1[i]);
    next[k] = s + 0.5 * dt * d1[k];
    double v = 0.0;
    for (std::size_t i = 0; i <= k; ++i) v += next[i] * next[i];
    var[k + 1] = v;
  }
  return var;
}

// Exponential kernel h(t) = a e^{-bt}: with Y_t = int_0^t h(t-s) dX_s the limit
// SDE is the 2-dimensional linear system
//   dX = beta_t Y dt + sqrt(lambda_t) dW,  dY = (a beta_t - b) Y dt + a sqrt(lambda_t) dW,
// beta_t = phi'(c_t). Its covariance P solves P' = A P + P A^T + lambda_t [[1, a], [a, a^2]],
// integrated by RK4 with lambda and beta interpolated linearly between grid points.
inline std::vector<double> lyapunov_mean_variance(const MeanPath& mean, const Kernel& kernel,
                                                  const RateFn& rate, std::size_t substeps = 8) {
  const auto* e = kernel.as_exponential();
  if (e == nullptr) throw DomainError("Lyapunov variance route needs an exponential kernel");
  const auto& grid = mean.grid;
  const double a = e->a, b = e->b;
  std::vector<double> beta(grid.points());
  for (std::size_t k = 0; k <= grid.n; ++k) beta[k] = rate.deriv(mean.drive[k]);

  struct P3 {
    double xx, xy, yy;
  };
  auto rhs = [&](const P3& p, double lam, double bt) {
    const double f = a * bt - b;
    return P3{2.0 * bt * p.xy + lam, bt * p.yy + f * p.xy + a * lam, 2.0 * f * p.yy + a * a * lam};
  };
  auto axpy = [](const P3& p, double h, const P3& d) {
    return P3{p.xx + h * d.xx, p.xy + h * d.xy, p.yy + h * d.yy};
  };
  std::vector<double> var(grid.points(), 0.0);
  P3 p{0.0, 0.0, 0.0};
  const double h = grid.dt / static_cast<double>(substeps);
  for (std::size_t k = 0; k < grid.n; ++k) {
    auto lam_at = [&](double w) { return mean.lambda[k] + w * (mean.lambda[k + 1] - mean.lambda[k]); };
    auto beta_at = [&](double w) { return beta[k] + w * (beta[k + 1] - beta[k]); };
    for (std::size_t s = 0; s < substeps; ++s) {
      const double w0 = static_cast<double>(s) / substeps;
      const double wm = (s + 0.5) / substeps;
      const double w1 = static_cast<double>(s + 1) / substeps;
      const P3 k1 = rhs(p, lam_at(w0), beta_at(w0));
      const P3 k2 = rhs(axpy(p, 0.5 * h, k1), lam_at(wm), beta_at(wm));
      const P3 k3 = rhs(axpy(p, 0.5 * h, k2), lam_at(wm), beta_at(wm));
      const P3 k4 = rhs(axpy(p, h, k3), lam_at(w1), beta_at(w1));
      p = {p.xx + h / 6.0 * (k1.xx + 2 * k2.xx + 2 * k3.xx + k4.xx),
           p.xy + h / 6.0 * (k1.xy + 2 * k2.xy + 2 * k3.xy + k4.xy),
           p.yy + h / 6.0 * (k1.yy + 2 * k2.yy + 2 * k3.yy + k4.yy)};
    }
    var[k + 1] = p.xx;
  }
  return var;
}

// Var of the limit mean process at every grid time: Lyapunov route for
// exponential kernels, dense propagation otherwise.
inline std::vector<double> limit_mean_variance(const MeanPath& mean, const Kernel& kernel,
                                               const RateFn& rate, std::size_t cap = kDenseVarianceCap) {
  if (kernel.as_exponential() != nullptr) return lyapunov_mean_variance(mean, kernel, rate);
  return dense_mean_variance(mean, kernel, rate, cap);
}

struct FieldOptions {
  double defect_threshold = 1e-6;
  double tail_threshold = kDefaultTailThreshold;
};

// Euler-Maruyama for the field-valued limit on {0..K}. Testing the weak form
// against the point masses 1_{x} turns every <., grad phi> pairing into a
// birth-ladder difference, because
//   sum_x v(x) (phi(x+1) - phi(x)) = sum_x phi(x) (v(x-1) - v(x)),  v(-1) = 0.
// Hence
//   dX(x) = lambda [X(x-1) - X(x)] dt + phi'(c) (int h d<X, l>) [L(x-1) - L(x)] dt
//           + sqrt(lambda dt) (sqrt(L(x-1)) xi(x-1) - sqrt(L(x)) xi(x)),
// the same xi(x) feeding states x and x+1. Flux out of K is dropped into
// mass_defect. noise(k, x) supplies xi_k(x).
template <class Noise>
FieldPath simulate_limit_field(const MeanPath& mean, const Kernel& kernel, const RateFn& rate,
                               std::size_t K, Noise&& noise, const FieldOptions& opt = {}) {
  const auto& grid = mean.grid;
  const Table law = law_table(mean, K, opt.tail_threshold);
  const GridConvolution conv(kernel, grid);
  FieldPath out{grid, K, Table(grid.points(), K + 1), std::vector<double>(grid.points(), 0.0)};
  std::vector<double> ell(grid.points(), 0.0);
  std::vector<double> xi(K + 1), root_law(K + 1);
  const double dt = grid.dt;
  for (std::size_t k = 0; k < grid.n; ++k) {
    const double lam = mean.lambda[k];
    const double coupling = conv.zero() ? 0.0 : rate.deriv(mean.drive[k]) * conv(ell, k);
    const double amp = std::sqrt(lam * dt);
    const double* cur = out.values.row(k);
    const double* L = law.row(k);
    double* next = out.values.row(k + 1);
    for (std::size_t x = 0; x <= K; ++x) {
      xi[x] = noise(k, x);
      root_law[x] = std::sqrt(L[x]);
    }
    double ell_next = 0.0;
    for (std::size_t x = 0; x <= K; ++x) {
      const double below = x > 0 ? cur[x - 1] : 0.0;
      const double law_below = x > 0 ? L[x - 1] : 0.0;
      const double noise_below = x > 0 ? root_law[x - 1] * xi[x - 1] : 0.0;
      next[x] = cur[x] + dt * (lam * (below - cur[x]) + coupling * (law_below - L[x])) +
                amp * (noise_below - root_law[x] * xi[x]);
      if (!std::isfinite(next[x])) throw SolverDivergence("field SDE diverged", k + 1);
      ell_next += static_cast<double>(x) * next[x];
    }
    out.mass_defect[k + 1] = out.mass_defect[k] + dt * (lam * cur[K] + coupling * L[K]) + amp * root_law[K] * xi[K];
    if (std::abs(out.mass_defect[k + 1]) > opt.defect_threshold)
      throw TruncationError("boundary flux " + std::to_string(out.mass_defect[k + 1]) +
                            " above threshold; increase K");
    ell[k + 1] = ell_next;
  }
  return out;
}

inline FieldPath simulate_limit_field(const MeanPath& mean, const Kernel& kernel, const RateFn& rate,
                                      std::size_t K, std::uint64_t seed, const FieldOptions& opt = {}) {
  return simulate_limit_field(
      mean, kernel, rate, K, [seed](std::size_t k, std::size_t x) { return gaussian_at(seed, x + 1, k); },
      opt);
}

struct Moments {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;     // unbiased
  double mean_ci = 0.0;      // 95% half-width, normal approximation
  double variance_ci = 0.0;  // 95% half-width, var * sqrt(2/(R-1))
};

inline Moments estimate_moments(std::span<const double> samples) {
  if (samples.size() < 2) throw DomainError("moment estimates need at least 2 replicas");
  Moments m;
  m.count = samples.size();
  const double R = static_cast<double>(samples.size());
  // Two-pass for accuracy.
  double s = 0.0;
  for (double v : samples) s += v;
  m.mean = s / R;
  double ss = 0.0;
  for (double v : samples) ss += (v - m.mean) * (v - m.mean);
  m.variance = ss / (R - 1.0);
  m.mean_ci = 1.96 * std::sqrt(m.variance / R);
  m.variance_ci = 1.96 * m.variance * std::sqrt(2.0 / (R - 1.0));
  return m;
}

}  // namespace hawkes
