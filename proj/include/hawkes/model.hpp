#pragma once

// Exciting kernels h, rate functions phi, and the standing-assumption checks
// that gate every limit-theorem computation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hawkes/error.hpp"

namespace hawkes {

struct ZeroKernel {};
struct ExponentialKernel {
  double a;  // amplitude
  double b;  // decay
};
struct ConstantKernel {
  double c;
};
// Piecewise-linear interpolant of (times, values); times start at 0 and
// increase strictly. Held constant past the last knot.
struct TabulatedKernel {
  std::vector<double> times;
  std::vector<double> values;
};

using KernelDescriptor = std::variant<ZeroKernel, ExponentialKernel, ConstantKernel, TabulatedKernel>;

class Kernel {
 public:
  Kernel() : desc_(ZeroKernel{}) {}
  explicit Kernel(KernelDescriptor desc) : desc_(std::move(desc)) { check(); }

  static Kernel zero() { return Kernel(ZeroKernel{}); }
  static Kernel exponential(double a, double b) { return Kernel(ExponentialKernel{a, b}); }
  static Kernel constant(double c) { return Kernel(ConstantKernel{c}); }
  static Kernel tabulated(std::vector<double> t, std::vector<double> v) {
    return Kernel(TabulatedKernel{std::move(t), std::move(v)});
  }

  double operator()(double t) const { return eval(t); }

  double eval(double t) const {
    return std::visit(
        [t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, ZeroKernel>) {
            return 0.0;
          } else if constexpr (std::is_same_v<K, ExponentialKernel>) {
            return k.a * std::exp(-k.b * t);
          } else if constexpr (std::is_same_v<K, ConstantKernel>) {
            return k.c;
          } else {
            const auto [i, w] = locate(k.times, t);
            if (i + 1 >= k.times.size()) return k.values.back();
            return k.values[i] + w * (k.values[i + 1] - k.values[i]);
          }
        },
        desc_);
  }

  // Derivative of the interpolant; right derivative at tabulated knots.
  double deriv(double t) const {
    return std::visit(
        [t](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, ZeroKernel> || std::is_same_v<K, ConstantKernel>) {
            return 0.0;
          } else if constexpr (std::is_same_v<K, ExponentialKernel>) {
            return -k.a * k.b * std::exp(-k.b * t);
          } else {
            const auto [i, w] = locate(k.times, t);
            if (i + 1 >= k.times.size()) return 0.0;
            return (k.values[i + 1] - k.values[i]) / (k.times[i + 1] - k.times[i]);
          }
        },
        desc_);
  }

  const KernelDescriptor& descriptor() const noexcept { return desc_; }
  bool is_zero() const noexcept { return std::holds_alternative<ZeroKernel>(desc_); }
  const ExponentialKernel* as_exponential() const noexcept {
    return std::get_if<ExponentialKernel>(&desc_);
  }

 private:
  static std::pair<std::size_t, double> locate(const std::vector<double>& ts, double t) {
    if (t <= ts.front()) return {0, 0.0};
    if (t >= ts.back()) return {ts.size() - 1, 0.0};
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - ts.begin()) - 1;
    return {i, (t - ts[i]) / (ts[i + 1] - ts[i])};
  }

  void check() const {
    if (const auto* e = std::get_if<ExponentialKernel>(&desc_)) {
      if (!(e->a >= 0.0) || !(e->b >= 0.0) || !std::isfinite(e->a) || !std::isfinite(e->b))
        throw ValidationError("exponential kernel needs finite a >= 0, b >= 0");
    } else if (const auto* c = std::get_if<ConstantKernel>(&desc_)) {
      if (!(c->c >= 0.0) || !std::isfinite(c->c))
        throw ValidationError("constant kernel needs a finite value >= 0");
    } else if (const auto* tab = std::get_if<TabulatedKernel>(&desc_)) {
      if (tab->times.size() < 2 || tab->times.size() != tab->values.size())
        throw ValidationError("tabulated kernel needs >= 2 matching (time, value) pairs");
      if (tab->times.front() != 0.0) throw ValidationError("tabulated kernel grid must start at 0");
      for (std::size_t i = 1; i < tab->times.size(); ++i)
        if (!(tab->times[i] > tab->times[i - 1]))
          throw ValidationError("tabulated kernel grid must increase strictly");
    }
  }

  KernelDescriptor desc_;
};

struct AffineRate {
  double base;
  double slope;
};
// C^1 monotone cubic Hermite interpolant (Fritsch-Carlson slopes) through
// (x, y); x starts at 0. Extrapolated linearly past the last knot.
struct TabulatedRate {
  std::vector<double> x;
  std::vector<double> y;
};
struct CustomRate {
  std::function<double(double)> f;
  std::function<double(double)> df;
  double lipschitz;
};

using RateDescriptor = std::variant<AffineRate, TabulatedRate, CustomRate>;

class RateFn {
 public:
  RateFn() : RateFn(AffineRate{1.0, 0.0}) {}
  explicit RateFn(RateDescriptor desc) : desc_(std::move(desc)) { prepare(); }

  static RateFn affine(double base, double slope) { return RateFn(AffineRate{base, slope}); }
  static RateFn constant(double value) { return RateFn(AffineRate{value, 0.0}); }
  static RateFn tabulated(std::vector<double> x, std::vector<double> y) {
    return RateFn(TabulatedRate{std::move(x), std::move(y)});
  }
  static RateFn custom(std::function<double(double)> f, std::function<double(double)> df,
                       double lipschitz) {
    return RateFn(CustomRate{std::move(f), std::move(df), lipschitz});
  }

  double operator()(double x) const { return eval(x); }

  double eval(double x) const {
    if (const auto* a = std::get_if<AffineRate>(&desc_)) return a->base + a->slope * x;
    if (const auto* t = std::get_if<TabulatedRate>(&desc_)) return hermite(*t, x, false);
    return std::get<CustomRate>(desc_).f(x);
  }

  double deriv(double x) const {
    if (const auto* a = std::get_if<AffineRate>(&desc_)) return a->slope;
    if (const auto* t = std::get_if<TabulatedRate>(&desc_)) return hermite(*t, x, true);
    return std::get<CustomRate>(desc_).df(x);
  }

  double lipschitz() const noexcept { return lipschitz_; }
  const RateDescriptor& descriptor() const noexcept { return desc_; }
  const AffineRate* as_affine() const noexcept { return std::get_if<AffineRate>(&desc_); }

 private:
  void prepare() {
    if (const auto* a = std::get_if<AffineRate>(&desc_)) {
      if (!std::isfinite(a->base) || !std::isfinite(a->slope))
        throw ValidationError("affine rate needs finite base and slope");
      lipschitz_ = std::abs(a->slope);
    } else if (auto* t = std::get_if<TabulatedRate>(&desc_)) {
      if (t->x.size() < 2 || t->x.size() != t->y.size())
        throw ValidationError("tabulated rate needs >= 2 matching (x, y) pairs");
      if (t->x.front() != 0.0) throw ValidationError("tabulated rate grid must start at 0");
      for (std::size_t i = 1; i < t->x.size(); ++i)
        if (!(t->x[i] > t->x[i - 1])) throw ValidationError("tabulated rate grid must increase strictly");
      slopes_ = fritsch_carlson(t->x, t->y);
      // Each piece's derivative is a quadratic in s; its extremes sit at the
      // knots or at the vertex.
      double lip = 0.0;
      for (double m : slopes_) lip = std::max(lip, std::abs(m));
      for (std::size_t i = 0; i + 1 < t->x.size(); ++i) {
        const double h = t->x[i + 1] - t->x[i];
        const double d = (t->y[i + 1] - t->y[i]) / h, m0 = slopes_[i], m1 = slopes_[i + 1];
        const double denom = 6.0 * (m0 + m1) - 12.0 * d;
        if (denom == 0.0) continue;
        const double s = (4.0 * m0 + 2.0 * m1 - 6.0 * d) / denom;
        if (s > 0.0 && s < 1.0) lip = std::max(lip, std::abs(hermite(*t, t->x[i] + s * h, true)));
      }
      lipschitz_ = lip * (1.0 + 1e-9);
    } else {
      const auto& c = std::get<CustomRate>(desc_);
      if (!c.f || !c.df) throw ValidationError("custom rate needs value and derivative callables");
      if (!(c.lipschitz >= 0.0) || !std::isfinite(c.lipschitz))
        throw ValidationError("custom rate needs a finite declared Lipschitz constant");
      lipschitz_ = c.lipschitz;
    }
  }

  static std::vector<double> fritsch_carlson(const std::vector<double>& x,
                                             const std::vector<double>& y) {
    const std::size_t n = x.size();
    std::vector<double> delta(n - 1), m(n);
    for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i)
      m[i] = (delta[i - 1] * delta[i] <= 0.0) ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (delta[i] == 0.0) {
        m[i] = m[i + 1] = 0.0;
        continue;
      }
      const double a = m[i] / delta[i];
      const double b = m[i + 1] / delta[i];
      const double s = a * a + b * b;
      if (s > 9.0) {
        const double tau = 3.0 / std::sqrt(s);
        m[i] = tau * a * delta[i];
        m[i + 1] = tau * b * delta[i];
      }
    }
    return m;
  }

  double hermite(const TabulatedRate& t, double x, bool derivative) const {
    const auto& xs = t.x;
    if (x >= xs.back()) return derivative ? slopes_.back() : t.y.back() + slopes_.back() * (x - xs.back());
    if (x <= 0.0) return derivative ? slopes_.front() : t.y.front() + slopes_.front() * x;
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
    const double h = xs[i + 1] - xs[i];
    const double s = (x - xs[i]) / h;
    const double y0 = t.y[i], y1 = t.y[i + 1], m0 = slopes_[i] * h, m1 = slopes_[i + 1] * h;
    if (!derivative) {
      const double s2 = s * s, s3 = s2 * s;
      return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * y1 +
             (s3 - s2) * m1;
    }
    const double s2 = s * s;
    return ((6 * s2 - 6 * s) * y0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) * y1 +
            (3 * s2 - 2 * s) * m1) /
           h;
  }

  RateDescriptor desc_;
  std::vector<double> slopes_;
  double lipschitz_ = 0.0;
};

struct KernelNorms {
  double sup_norm = 0.0;
  double l1_norm = 0.0;
};

namespace detail {

inline std::vector<double> probe_times(double T, double dt) {
  const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  std::vector<double> ts(steps + 1);
  for (std::size_t k = 0; k < steps; ++k) ts[k] = static_cast<double>(k) * dt;
  ts[steps] = T;
  return ts;
}

inline std::string fmt_time(double t) {
  std::ostringstream os;
  os.precision(17);
  os << t;
  return os.str();
}

}  // namespace detail

// Sup norm and L1 norm of h on [0, T]: sup over the grid {0, dt, ..., T},
// L1 by the trapezoid rule on the same grid. Exponential kernels use the closed
// forms a and (a/b)(1 - exp(-bT)).
inline KernelNorms kernel_norms(const Kernel& kernel, double T, double dt) {
  if (!(T > 0.0) || !(dt > 0.0) || dt > T)
    throw DomainError("kernel_norms requires T > 0 and 0 < dt <= T");
  const auto ts = detail::probe_times(T, dt);
  KernelNorms out;
  double prev = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double v = kernel(ts[k]);
    if (!std::isfinite(v)) throw ValidationError("non-finite kernel value at t=" + detail::fmt_time(ts[k]));
    out.sup_norm = std::max(out.sup_norm, std::abs(v));
    if (k > 0) out.l1_norm += 0.5 * (ts[k] - ts[k - 1]) * (std::abs(v) + std::abs(prev));
    prev = v;
  }
  if (const auto* e = kernel.as_exponential()) {
    out.sup_norm = e->a;
    out.l1_norm = e->b > 0.0 ? (e->a / e->b) * (1.0 - std::exp(-e->b * T)) : e->a * T;
  }
  return out;
}

// Exact sup of h over [0, T]: closed forms, or the knots of a tabulated kernel.
inline double kernel_sup(const Kernel& kernel, double T) {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, ZeroKernel>) {
          return 0.0;
        } else if constexpr (std::is_same_v<K, ExponentialKernel>) {
          return k.a;
        } else if constexpr (std::is_same_v<K, ConstantKernel>) {
          return k.c;
        } else {
          double s = kernel(T);
          for (std::size_t i = 0; i < k.times.size() && k.times[i] <= T; ++i) s = std::max(s, k.values[i]);
          return s;
        }
      },
      kernel.descriptor());
}

struct AssumptionReport {
  double l1_norm = 0.0;
  double sup_norm = 0.0;
  double stability_margin = 0.0;  // 1 - alpha * ||h||_{L1[0,T]}
  bool passed = false;
  std::vector<std::string> warnings;
};

// Grid-probe check of the standing assumptions: h >= 0 with finite derivative,
// phi > 0, phi alpha-Lipschitz, phi' consistent with phi, and the stability
// condition alpha * ||h||_{L1[0,T]} < 1. A failing model is reported, not thrown;
// only non-finite evaluations throw.
inline AssumptionReport validate_assumptions(const Kernel& kernel, const RateFn& rate, double T,
                                             std::optional<double> probe_dt = std::nullopt) {
  if (!(T > 0.0)) throw DomainError("validate_assumptions requires T > 0");
  const double dt = probe_dt.value_or(T / 1000.0);
  const auto norms = kernel_norms(kernel, T, dt);

  AssumptionReport rep;
  rep.l1_norm = norms.l1_norm;
  rep.sup_norm = norms.sup_norm;
  rep.stability_margin = 1.0 - rate.lipschitz() * norms.l1_norm;
  bool probes_ok = true;
  auto warn = [&](std::string msg) {
    probes_ok = false;
    rep.warnings.push_back(std::move(msg));
  };

  const auto ts = detail::probe_times(T, dt);
  for (double t : ts) {
    const double v = kernel(t);
    const double d = kernel.deriv(t);
    if (!std::isfinite(v) || !std::isfinite(d))
      throw ValidationError("non-finite kernel value or derivative at t=" + detail::fmt_time(t));
    if (v < 0.0) {
      warn("kernel negative at t=" + detail::fmt_time(t));
      break;
    }
  }
  if (const auto* e = kernel.as_exponential()) {
    for (double t : ts) {
      const double step = 1e-4 * std::max(1.0, t);
      const double lo = std::max(0.0, t - step);
      const double fd = (kernel(t + step) - kernel(lo)) / (t + step - lo);
      const double d = kernel.deriv(t);
      // One-sided difference at t = 0 carries O(b^2 step) error; rescale the tolerance.
      const double tol = (lo == t ? 1e-4 * std::max(1.0, e->b) : 1e-6) * std::max(std::abs(d), 1e-12);
      if (std::abs(fd - d) > tol + 1e-10 * e->a) {
        warn("exponential kernel derivative inconsistent at t=" + detail::fmt_time(t));
        break;
      }
    }
  }

  // Excitation values reachable in practice are bounded by a multiple of the
  // kernel mass times the expected count; probe phi well beyond that range.
  const double phi0 = rate(0.0);
  if (!std::isfinite(phi0)) throw ValidationError("non-finite rate value at x=0");
  const double x_max = 10.0 * (1.0 + norms.l1_norm + norms.sup_norm) * std::max(1.0, std::abs(phi0) * T);
  const std::size_t probes = ts.size();
  const double alpha = rate.lipschitz();
  double prev_x = 0.0, prev_v = phi0;
  for (std::size_t i = 0; i < probes; ++i) {
    const double x = x_max * static_cast<double>(i) / static_cast<double>(probes - 1);
    const double v = rate(x);
    const double d = rate.deriv(x);
    if (!std::isfinite(v) || !std::isfinite(d))
      throw ValidationError("non-finite rate value or derivative at x=" + detail::fmt_time(x));
    if (!(v > 0.0)) {
      warn("rate not positive at x=" + detail::fmt_time(x));
      break;
    }
    if (i > 0 && std::abs(v - prev_v) > alpha * (x - prev_x) * (1.0 + 1e-9) + 1e-12) {
      warn("rate violates declared Lipschitz constant near x=" + detail::fmt_time(x));
      break;
    }
    const double step = 1e-5 * std::max(1.0, x);
    const double lo = std::max(0.0, x - step);
    const double fd = (rate(x + step) - rate(lo)) / (x + step - lo);
    if (std::abs(fd - d) > 1e-4 * std::max({std::abs(d), std::abs(fd), 1e-8})) {
      warn("rate derivative inconsistent with finite differences at x=" + detail::fmt_time(x));
      break;
    }
    prev_x = x;
    prev_v = v;
  }

  if (!(rep.stability_margin > 0.0))
    rep.warnings.push_back("stability condition alpha*||h||_L1 < 1 fails (margin " +
                           detail::fmt_time(rep.stability_margin) + ")");
  rep.passed = rep.stability_margin > 0.0 && probes_ok;
  return rep;
}

}  // namespace hawkes
