#pragma once

// Moderate-deviation functionals. All time integrals are discretized so that
// the forward-Euler solver of the linearized equation is their exact discrete
// adjoint: with D_k phi = (phi_{k+1} - phi_k)/dt,
//
//   <mu_n, phi_n> - sum_k dt <mu_{k+1}, D_k phi> = sum_k <mu_{k+1} - mu_k, phi_k>,
//
// and the solver's increment mu_{k+1} - mu_k pairs with phi_k through the same
// lattice gradient used below. Hence Upsilon_{mu^psi}(phi) = [psi, phi] holds to
// rounding error on the truncated lattice, not just to O(dt).
//
// Lattice gradient: grad phi(x) = phi(x+1) - phi(x), with phi(K+1) = 0. This is
// the adjoint of the absorbing boundary at K (flux out of K is dropped).

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hawkes/engine.hpp"
#include "hawkes/error.hpp"
#include "hawkes/fluct.hpp"
#include "hawkes/grid.hpp"
#include "hawkes/meanfield.hpp"
#include "hawkes/model.hpp"

namespace hawkes {

class TestFunction {
 public:
  TestFunction() = default;
  TestFunction(TimeGrid grid, std::size_t K, Table values, std::string name = {})
      : grid_(grid), K_(K), values_(std::move(values)), name_(std::move(name)) {
    if (values_.rows() != grid_.points() || values_.cols() != K_ + 1)
      throw DomainError("test function table does not match grid x {0..K}");
  }

  template <class F>
  static TestFunction from_function(const TimeGrid& grid, std::size_t K, F&& f, std::string name = {}) {
    Table v(grid.points(), K + 1);
    for (std::size_t k = 0; k <= grid.n; ++k)
      for (std::size_t x = 0; x <= K; ++x) v(k, x) = f(grid.time(k), x);
    return TestFunction(grid, K, std::move(v), std::move(name));
  }

  double value(std::size_t k, std::size_t x) const noexcept { return values_(k, x); }
  double grad(std::size_t k, std::size_t x) const noexcept {
    return (x < K_ ? values_(k, x + 1) : 0.0) - values_(k, x);
  }
  // Forward difference; backward at the last grid point.
  double time_deriv(std::size_t k, std::size_t x) const noexcept {
    if (grid_.n == 0) return 0.0;
    const std::size_t lo = k < grid_.n ? k : k - 1;
    return (values_(lo + 1, x) - values_(lo, x)) / grid_.dt;
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t K() const noexcept { return K_; }
  const Table& values() const noexcept { return values_; }
  const std::string& name() const noexcept { return name_; }

  // grad as a (points x (K+1)) source table.
  Table grad_table() const {
    Table g(grid_.points(), K_ + 1);
    for (std::size_t k = 0; k <= grid_.n; ++k)
      for (std::size_t x = 0; x <= K_; ++x) g(k, x) = grad(k, x);
    return g;
  }

  friend TestFunction combine(double a, const TestFunction& f, double b, const TestFunction& g) {
    Table v(f.values_.rows(), f.values_.cols());
    for (std::size_t k = 0; k < v.rows(); ++k)
      for (std::size_t x = 0; x < v.cols(); ++x) v(k, x) = a * f.values_(k, x) + b * g.values_(k, x);
    return TestFunction(f.grid_, f.K_, std::move(v));
  }

 private:
  TimeGrid grid_;
  std::size_t K_ = 0;
  Table values_;
  std::string name_;
};

inline TestFunction ell_function(const TimeGrid& grid, std::size_t K) {
  return TestFunction::from_function(grid, K, [](double, std::size_t x) { return static_cast<double>(x); }, "ell");
}

inline TestFunction indicator_at_least(const TimeGrid& grid, std::size_t K, std::size_t x0) {
  return TestFunction::from_function(
      grid, K, [x0](double, std::size_t x) { return x >= x0 ? 1.0 : 0.0; }, "ge" + std::to_string(x0));
}

inline TestFunction constant_function(const TimeGrid& grid, std::size_t K, double c) {
  return TestFunction::from_function(grid, K, [c](double, std::size_t) { return c; }, "const");
}

inline TestFunction time_ell_function(const TimeGrid& grid, std::size_t K) {
  return TestFunction::from_function(
      grid, K, [](double t, std::size_t x) { return t * static_cast<double>(x); }, "t*ell");
}

// Simulation tilt from a lattice test function. Time is interpolated linearly
// between grid points; states at or beyond K reuse the gradient at K-1, the last
// one not affected by the truncation.
inline Tilt tilt_from(const TestFunction& psi) {
  const std::size_t K = psi.K();
  double sup = 0.0;
  for (std::size_t k = 0; k <= psi.grid().n; ++k)
    for (std::size_t x = 0; x < K; ++x) sup = std::max(sup, std::abs(psi.grad(k, x)));
  auto grad = [psi](double t, std::uint64_t x) {
    const auto& g = psi.grid();
    const std::size_t xs = std::min<std::size_t>(x, psi.K() - 1);
    if (g.n == 0 || t >= g.T) return psi.grad(g.n, xs);
    const double pos = std::max(0.0, t / g.dt);
    const std::size_t k = std::min(static_cast<std::size_t>(pos), g.n - 1);
    const double w = pos - static_cast<double>(k);
    return (1.0 - w) * psi.grad(k, xs) + w * psi.grad(k + 1, xs);
  };
  return {grad, sup};
}

// Precomputed limit quantities shared by all functionals on one grid and lattice.
class DeviationModel {
 public:
  DeviationModel(const MeanPath& mean, const Kernel& kernel, const RateFn& rate, std::size_t K,
                 double tail_threshold = kDefaultTailThreshold)
      : grid_(mean.grid),
        K_(K),
        lambda_(mean.lambda),
        beta_(mean.grid.points()),
        law_(law_table(mean, K, tail_threshold)),
        conv_(kernel, mean.grid) {
    for (std::size_t k = 0; k <= grid_.n; ++k) {
      if (!(lambda_[k] > 0.0)) throw ValidationError("limit intensity must be positive (step " + std::to_string(k) + ")");
      beta_[k] = rate.deriv(mean.drive[k]);
    }
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t K() const noexcept { return K_; }
  double lambda(std::size_t k) const noexcept { return lambda_[k]; }
  double beta(std::size_t k) const noexcept { return beta_[k]; }
  const Table& law() const noexcept { return law_; }
  const GridConvolution& conv() const noexcept { return conv_; }

  void require(const TimeGrid& g, std::size_t K, const char* what) const {
    if (!g.same_as(grid_) || K != K_) throw DomainError(std::string("mismatched discretization: ") + what);
  }

 private:
  TimeGrid grid_;
  std::size_t K_;
  std::vector<double> lambda_;
  std::vector<double> beta_;
  Table law_;
  GridConvolution conv_;
};

// [f, g] = sum_k dt lambda_k sum_x L_k(x) grad f grad g.
inline double inner(const TestFunction& f, const TestFunction& g, const DeviationModel& model) {
  model.require(f.grid(), f.K(), "inner(f)");
  model.require(g.grid(), g.K(), "inner(g)");
  const auto& grid = model.grid();
  double acc = 0.0;
  for (std::size_t k = 0; k < grid.n; ++k) {
    const double* L = model.law().row(k);
    double s = 0.0;
    for (std::size_t x = 0; x <= model.K(); ++x) s += L[x] * f.grad(k, x) * g.grad(k, x);
    acc += grid.dt * model.lambda(k) * s;
  }
  return acc;
}

inline double inner(const TestFunction& f, const TestFunction& g, const MeanPath& mean, std::size_t K) {
  return inner(f, g, DeviationModel(mean, Kernel::zero(), RateFn::constant(1.0), K));
}

// Upsilon_mu(phi) = <mu_T, phi_T> - int <mu, d_t phi> - int <mu, grad phi> lambda
//                   - int <L, grad phi> phi'(c) (int h d<mu, l>).
inline double upsilon(const FieldPath& mu, const TestFunction& phi, const DeviationModel& model) {
  model.require(mu.grid, mu.K, "upsilon(mu)");
  model.require(phi.grid(), phi.K(), "upsilon(phi)");
  const auto& grid = model.grid();
  const std::size_t K = model.K();
  std::vector<double> eta(grid.points());
  for (std::size_t k = 0; k <= grid.n; ++k) eta[k] = mu.pair_ell(k);

  double acc = 0.0;
  for (std::size_t x = 0; x <= K; ++x) acc += mu.values(grid.n, x) * phi.value(grid.n, x);
  for (std::size_t k = 0; k < grid.n; ++k) {
    const double* L = model.law().row(k);
    double time_term = 0.0, drift_term = 0.0, law_term = 0.0;
    for (std::size_t x = 0; x <= K; ++x) {
      const double gr = phi.grad(k, x);
      time_term += mu.values(k + 1, x) * (phi.value(k + 1, x) - phi.value(k, x));
      drift_term += mu.values(k, x) * gr;
      law_term += L[x] * gr;
    }
    const double coupling = model.conv().zero() ? 0.0 : model.beta(k) * model.conv()(eta, k);
    acc -= time_term + grid.dt * (model.lambda(k) * drift_term + coupling * law_term);
  }
  return acc;
}

inline double upsilon(const FieldPath& mu, const TestFunction& phi, const MeanPath& mean,
                      const Kernel& kernel, const RateFn& rate) {
  return upsilon(mu, phi, DeviationModel(mean, kernel, rate, mu.K));
}

// J_mu(phi) = Upsilon_mu(phi) - [phi, phi] / 2.
inline double j_functional(const FieldPath& mu, const TestFunction& phi, const DeviationModel& model) {
  return upsilon(mu, phi, model) - 0.5 * inner(phi, phi, model);
}

inline double j_functional(const FieldPath& mu, const TestFunction& phi, const MeanPath& mean,
                           const Kernel& kernel, const RateFn& rate) {
  return j_functional(mu, phi, DeviationModel(mean, kernel, rate, mu.K));
}

struct LinearizedOptions {
  double defect_threshold = 1e-6;
};

// Forward Euler for the linearized limit equation with source g:
//   d_t mu(x) = lambda [mu(x-1) - mu(x)] + phi'(c) (int h d<mu, l>) [L(x-1) - L(x)]
//               + lambda [g(x-1) L(x-1) - g(x) L(x)],  mu_0 = 0.
// With g = grad psi the solution is the limit mu^psi of the tilted system.
inline FieldPath solve_linearized(const Table& g, const DeviationModel& model, const LinearizedOptions& opt = {}) {
  const auto& grid = model.grid();
  const std::size_t K = model.K();
  if (g.rows() != grid.points() || g.cols() != K + 1) throw DomainError("source table does not match grid x {0..K}");
  FieldPath mu{grid, K, Table(grid.points(), K + 1), std::vector<double>(grid.points(), 0.0)};
  std::vector<double> eta(grid.points(), 0.0);
  const double dt = grid.dt;
  for (std::size_t k = 0; k < grid.n; ++k) {
    const double lam = model.lambda(k);
    const double coupling = model.conv().zero() ? 0.0 : model.beta(k) * model.conv()(eta, k);
    const double* cur = mu.values.row(k);
    const double* L = model.law().row(k);
    const double* gk = g.row(k);
    double* next = mu.values.row(k + 1);
    double ell = 0.0;
    for (std::size_t x = 0; x <= K; ++x) {
      if (!std::isfinite(gk[x])) throw DomainError("source g must be finite");
      const double below = x > 0 ? cur[x - 1] : 0.0;
      const double law_below = x > 0 ? L[x - 1] : 0.0;
      const double src_below = x > 0 ? gk[x - 1] * L[x - 1] : 0.0;
      next[x] = cur[x] + dt * (lam * (below - cur[x]) + coupling * (law_below - L[x]) + lam * (src_below - gk[x] * L[x]));
      if (!std::isfinite(next[x])) throw SolverDivergence("linearized equation diverged", k + 1);
      ell += static_cast<double>(x) * next[x];
    }
    mu.mass_defect[k + 1] = mu.mass_defect[k] + dt * (lam * cur[K] + coupling * L[K] + lam * gk[K] * L[K]);
    if (std::abs(mu.mass_defect[k + 1]) > opt.defect_threshold)
      throw TruncationError("boundary flux " + std::to_string(mu.mass_defect[k + 1]) + " above threshold; increase K");
    eta[k + 1] = ell;
  }
  return mu;
}

inline FieldPath solve_linearized(const Table& g, const MeanPath& mean, const Kernel& kernel, const RateFn& rate,
                                  std::size_t K, const LinearizedOptions& opt = {}) {
  return solve_linearized(g, DeviationModel(mean, kernel, rate, K), opt);
}

// mu^psi: the linearized solution driven by g = grad psi.
inline FieldPath solve_linearized(const TestFunction& psi, const DeviationModel& model,
                                  const LinearizedOptions& opt = {}) {
  model.require(psi.grid(), psi.K(), "solve_linearized(psi)");
  return solve_linearized(psi.grad_table(), model, opt);
}

struct RateFieldResult {
  double rate = 0.0;                // 1/2 b^T c, a lower bound on I(mu)
  std::vector<double> coefficients;  // maximizer in span(basis)
  double ridge = 0.0;
  double condition = 0.0;  // of the regularized Gram matrix
};

// Galerkin maximization of J_mu over span(basis): solve (G + eps I) c = b with
// G_ij = [phi_i, phi_j], b_i = Upsilon_mu(phi_i), eps = 1e-10 trace(G)/d.
inline RateFieldResult rate_field(const FieldPath& mu, std::span<const TestFunction> basis,
                                  const DeviationModel& model) {
  const std::size_t d = basis.size();
  if (d == 0) throw DomainError("rate_field needs a non-empty basis");
  Eigen::MatrixXd G(d, d);
  Eigen::VectorXd b(d);
  for (std::size_t i = 0; i < d; ++i) {
    b(i) = upsilon(mu, basis[i], model);
    for (std::size_t j = 0; j <= i; ++j) G(i, j) = G(j, i) = inner(basis[i], basis[j], model);
  }
  const double trace = G.trace();
  if (!std::isfinite(trace) || !(trace > 0.0))
    throw ConditioningError("Gram matrix of the basis vanishes; basis has no gradient mass", std::numeric_limits<double>::infinity());
  RateFieldResult out;
  out.ridge = 1e-10 * trace / static_cast<double>(d);
  G.diagonal().array() += out.ridge;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  const auto& ev = eig.eigenvalues();
  out.condition = ev.maxCoeff() / ev.minCoeff();
  if (eig.info() != Eigen::Success || !(ev.minCoeff() > 0.0) || !std::isfinite(out.condition))
    throw ConditioningError("regularized Gram matrix is singular (condition " + std::to_string(out.condition) + ")",
                            out.condition);
  const Eigen::VectorXd c = eig.eigenvectors() * (eig.eigenvectors().transpose() * b).cwiseQuotient(ev);
  out.coefficients.assign(c.data(), c.data() + d);
  out.rate = std::max(0.0, 0.5 * b.dot(c));
  return out;
}

inline RateFieldResult rate_field(const FieldPath& mu, std::span<const TestFunction> basis, const MeanPath& mean,
                                  const Kernel& kernel, const RateFn& rate) {
  return rate_field(mu, basis, DeviationModel(mean, kernel, rate, mu.K));
}

// Default Galerkin basis: l, the ladder indicators 1_{>= x} for x = 1..ladder,
// and x^p t^q for p = 1..x_degree, q = 0..t_degree (skipping p = 1, q = 0, which is l).
inline std::vector<TestFunction> default_basis(const TimeGrid& grid, std::size_t K, std::size_t ladder = 8,
                                               std::size_t x_degree = 2, std::size_t t_degree = 1) {
  std::vector<TestFunction> out;
  out.push_back(ell_function(grid, K));
  for (std::size_t x0 = 1; x0 <= std::min(ladder, K); ++x0) out.push_back(indicator_at_least(grid, K, x0));
  const double xs = std::max(1.0, static_cast<double>(K) / 4.0);
  for (std::size_t p = 1; p <= x_degree; ++p)
    for (std::size_t q = 0; q <= t_degree; ++q) {
      if (p == 1 && q == 0) continue;
      out.push_back(TestFunction::from_function(
          grid, K,
          [p, q, xs](double t, std::size_t x) {
            return std::pow(static_cast<double>(x), static_cast<double>(p)) / std::pow(xs, static_cast<double>(p - 1)) *
                   std::pow(t, static_cast<double>(q));
          },
          "x^" + std::to_string(p) + "t^" + std::to_string(q)));
    }
  return out;
}

// Ten fixed functions used to probe the duality identity.
inline std::vector<TestFunction> probe_basis(const TimeGrid& grid, std::size_t K) {
  std::vector<TestFunction> out;
  out.push_back(ell_function(grid, K));
  out.push_back(indicator_at_least(grid, K, 1));
  out.push_back(indicator_at_least(grid, K, 2));
  out.push_back(indicator_at_least(grid, K, 3));
  out.push_back(time_ell_function(grid, K));
  out.push_back(TestFunction::from_function(
      grid, K, [](double t, std::size_t x) { return x >= 1 ? t : 0.0; }, "t*ge1"));
  out.push_back(TestFunction::from_function(
      grid, K, [](double, std::size_t x) { return 0.25 * static_cast<double>(x * x); }, "x^2/4"));
  out.push_back(TestFunction::from_function(
      grid, K, [](double t, std::size_t x) { return (1.0 + t) * std::sin(static_cast<double>(x)); }, "(1+t)sin"));
  out.push_back(TestFunction::from_function(
      grid, K, [](double t, std::size_t x) { return std::exp(-0.5 * static_cast<double>(x)) * std::cos(t); },
      "exp*cos"));
  out.push_back(constant_function(grid, K, 1.0));
  return out;
}

// Path eta with eta_0 = 0. When absolutely continuous, eta[k] = sum_{j<k} eta_deriv[j] dt.
struct MeanDeviationPath {
  TimeGrid grid;
  std::vector<double> eta;
  std::vector<double> eta_deriv;
  bool ac = true;

  static MeanDeviationPath from_derivative(const TimeGrid& grid, std::vector<double> deriv) {
    if (deriv.size() != grid.points()) throw DomainError("derivative length does not match grid");
    MeanDeviationPath p{grid, std::vector<double>(grid.points(), 0.0), std::move(deriv), true};
    for (std::size_t k = 0; k < grid.n; ++k) p.eta[k + 1] = p.eta[k] + p.eta_deriv[k] * grid.dt;
    return p;
  }

  // Forward differences of sampled values; the caller declares absolute continuity.
  static MeanDeviationPath from_values(const TimeGrid& grid, std::vector<double> values, bool ac = true) {
    if (values.size() != grid.points()) throw DomainError("path length does not match grid");
    if (values.front() != 0.0) throw DomainError("deviation path must start at 0");
    MeanDeviationPath p{grid, std::move(values), std::vector<double>(grid.points(), 0.0), ac};
    for (std::size_t k = 0; k < grid.n; ++k) p.eta_deriv[k] = (p.eta[k + 1] - p.eta[k]) / grid.dt;
    if (grid.n > 0) p.eta_deriv[grid.n] = p.eta_deriv[grid.n - 1];
    return p;
  }
};

// J(eta) = 1/2 sum_k dt (eta'_k - phi'(c_k) int_0^{t_k} h(t_k - s) d eta_s)^2 / lambda_k,
// +infinity for paths flagged as not absolutely continuous.
inline double rate_mean(const MeanDeviationPath& eta, const MeanPath& mean, const Kernel& kernel, const RateFn& rate) {
  if (!eta.grid.same_as(mean.grid)) throw DomainError("mismatched discretization: rate_mean");
  if (!eta.ac) return std::numeric_limits<double>::infinity();
  const auto& grid = mean.grid;
  const GridConvolution conv(kernel, grid);
  double acc = 0.0;
  for (std::size_t k = 0; k < grid.n; ++k) {
    const double lam = mean.lambda[k];
    if (!(lam > 0.0)) throw ValidationError("limit intensity must be positive (step " + std::to_string(k) + ")");
    const double feedback = conv.zero() ? 0.0 : rate.deriv(mean.drive[k]) * conv(eta.eta, k);
    const double r = eta.eta_deriv[k] - feedback;
    acc += grid.dt * r * r / lam;
  }
  return 0.5 * acc;
}

}  // namespace hawkes
