#include <gtest/gtest.h>

#include <cmath>

#include "hawkes/deviations.hpp"

using namespace hawkes;

namespace {

const Kernel kExp = Kernel::exponential(1.0, 2.0);
const RateFn kAffine = RateFn::affine(1.0, 1.0);
const RateFn kTwo = RateFn::constant(2.0);

struct Case {
  Kernel kernel;
  RateFn rate;
  MeanPath mean;
  DeviationModel model;
  Case(Kernel k, RateFn r, double dt, std::size_t K)
      : kernel(k), rate(r), mean(solve_mean(k, r, 1.0, dt)), model(mean, k, r, K) {}
  const TimeGrid& grid() const { return mean.grid; }
  std::size_t K() const { return model.K(); }
};

FieldPath zero_field(const Case& s) {
  return FieldPath{s.grid(), s.K(), Table(s.grid().points(), s.K() + 1), std::vector<double>(s.grid().points(), 0.0)};
}

}  // namespace

TEST(TestFunction, GradientAndTimeDerivative) {
  auto grid = TimeGrid::make(1.0, 0.25);
  auto f = TestFunction::from_function(grid, 4, [](double t, std::size_t x) { return t * x * x; });
  EXPECT_DOUBLE_EQ(f.grad(2, 1), 0.5 * 3);
  EXPECT_DOUBLE_EQ(f.grad(2, 4), -0.5 * 16);  // zero extension past K
  EXPECT_DOUBLE_EQ(f.time_deriv(1, 2), 4.0);
  EXPECT_DOUBLE_EQ(f.time_deriv(4, 2), 4.0);
  EXPECT_THROW(TestFunction(grid, 4, Table(3, 5)), DomainError);
}

TEST(RateMean, Examples) {
  auto mean = solve_mean(Kernel::zero(), kTwo, 1.0, 1e-3);
  auto zero = MeanDeviationPath::from_derivative(mean.grid, std::vector<double>(mean.grid.points(), 0.0));
  EXPECT_EQ(rate_mean(zero, mean, Kernel::zero(), kTwo), 0.0);
  auto line = MeanDeviationPath::from_derivative(mean.grid, std::vector<double>(mean.grid.points(), 1.0));
  EXPECT_NEAR(rate_mean(line, mean, Kernel::zero(), kTwo), 0.25, 1e-6);
  line.ac = false;
  EXPECT_TRUE(std::isinf(rate_mean(line, mean, Kernel::zero(), kTwo)));
}

TEST(RateMean, QuadraticHomogeneityAndSign) {
  auto mean = solve_mean(kExp, kAffine, 1.0, 1e-2);
  std::vector<double> d(mean.grid.points());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = std::sin(3.0 * mean.grid.time(k)) + 0.2;
  auto eta = MeanDeviationPath::from_derivative(mean.grid, d);
  const double J = rate_mean(eta, mean, kExp, kAffine);
  EXPECT_GT(J, 0.0);
  for (double c : {0.5, 2.0, 10.0, -3.0}) {
    auto s = d;
    for (auto& v : s) v *= c;
    const double Jc = rate_mean(MeanDeviationPath::from_derivative(mean.grid, s), mean, kExp, kAffine);
    EXPECT_NEAR(Jc / (c * c * J), 1.0, 1e-10);
  }
}

TEST(RateMean, FeedbackPathHasZeroCost) {
  // eta solving eta' = beta (h * d eta) exactly has zero rate; eta = 0 is the only
  // such path from 0, so any nonzero eta costs something.
  auto mean = solve_mean(kExp, kAffine, 1.0, 1e-2);
  auto eta = MeanDeviationPath::from_values(mean.grid, std::vector<double>(mean.grid.points(), 0.0));
  EXPECT_EQ(rate_mean(eta, mean, kExp, kAffine), 0.0);
  EXPECT_THROW(MeanDeviationPath::from_values(mean.grid, std::vector<double>(mean.grid.points(), 1.0)), DomainError);
}

TEST(Inner, Examples) {
  Case p(Kernel::zero(), kTwo, 1e-3, 20);
  auto ell = ell_function(p.grid(), p.K());
  EXPECT_NEAR(inner(ell, ell, p.model), 2.0, 1e-6);
  auto one = constant_function(p.grid(), p.K(), 1.0);
  EXPECT_NEAR(inner(one, ell, p.model), 0.0, 1e-12);
  EXPECT_NEAR(inner(one, one, p.model), 0.0, 1e-12);

  Case e(kExp, kAffine, 1e-3, 20);
  auto ell_e = ell_function(e.grid(), e.K());
  EXPECT_NEAR(inner(ell_e, ell_e, e.model), 1.367879, 1e-3);
}

TEST(Inner, SymmetricAndBilinear) {
  Case s(kExp, kAffine, 1e-2, 15);
  auto probes = probe_basis(s.grid(), s.K());
  for (std::size_t i = 0; i < probes.size(); ++i)
    for (std::size_t j = 0; j < probes.size(); ++j) {
      const double fg = inner(probes[i], probes[j], s.model);
      EXPECT_NEAR(fg, inner(probes[j], probes[i], s.model), 1e-12);
      const auto& h = probes[(i + 3) % probes.size()];
      const double lhs = inner(combine(1.5, probes[i], -0.7, h), probes[j], s.model);
      const double rhs = 1.5 * fg - 0.7 * inner(h, probes[j], s.model);
      EXPECT_NEAR(lhs, rhs, 1e-12 * (1 + std::abs(lhs)));
    }
}

TEST(Upsilon, ZeroFieldGivesZero) {
  Case s(kExp, kAffine, 1e-2, 15);
  const auto mu = zero_field(s);
  for (const auto& phi : probe_basis(s.grid(), s.K())) {
    EXPECT_EQ(upsilon(mu, phi, s.model), 0.0);
    EXPECT_LE(j_functional(mu, phi, s.model), 0.0);
    EXPECT_NEAR(j_functional(mu, phi, s.model), -0.5 * inner(phi, phi, s.model), 1e-15);
  }
}

TEST(Upsilon, MassFreeFieldAgainstEll) {
  // h = 0: for a field with zero total mass, Upsilon(ell) = <mu_T, ell>.
  Case s(Kernel::zero(), kTwo, 1e-2, 20);
  auto mu = zero_field(s);
  for (std::size_t k = 0; k <= s.grid().n; ++k) {
    const double t = s.grid().time(k);
    mu.values(k, 1) = t;
    mu.values(k, 3) = -2 * t * t;
    mu.values(k, 4) = 2 * t * t - t;
  }
  auto ell = ell_function(s.grid(), s.K());
  EXPECT_NEAR(upsilon(mu, ell, s.model), mu.pair_ell(s.grid().n), 1e-12);
}

TEST(Upsilon, ConstantTestFunction) {
  // phi = c: J_mu = c <mu_T, 1> up to the boundary term at K.
  Case s(kExp, kAffine, 1e-2, 15);
  auto mu = solve_linearized(ell_function(s.grid(), s.K()), s.model);
  auto c = constant_function(s.grid(), s.K(), 3.0);
  EXPECT_NEAR(j_functional(mu, c, s.model), 3.0 * mu.total_mass(s.grid().n), 1e-9);
}

TEST(SolveLinearized, Examples) {
  Case s(Kernel::zero(), kTwo, 1e-3, 20);
  auto zero = solve_linearized(Table(s.grid().points(), s.K() + 1), s.model);
  EXPECT_EQ(zero.sup_abs(), 0.0);
  auto one = solve_linearized(Table(s.grid().points(), s.K() + 1, 1.0), s.model);
  EXPECT_NEAR(one.pair_ell(s.grid().n), 2.0, 1e-3);
  for (std::size_t k = 0; k <= s.grid().n; ++k) EXPECT_NEAR(one.total_mass(k), -one.mass_defect[k], 1e-12);
  EXPECT_THROW(solve_linearized(Table(3, 3), s.model), DomainError);
}

TEST(SolveLinearized, SmallTruncationThrows) {
  auto mean = solve_mean(Kernel::zero(), kTwo, 1.0, 1e-2);
  DeviationModel model(mean, Kernel::zero(), kTwo, 18);
  EXPECT_THROW(solve_linearized(ell_function(mean.grid, 4), DeviationModel(mean, Kernel::zero(), kTwo, 4, 1.0)),
               TruncationError);
  EXPECT_NO_THROW(solve_linearized(ell_function(mean.grid, 18), model));
}

TEST(Duality, HoldsOnProbeBasis) {
  for (const auto& kernel : {kExp, Kernel::zero(), Kernel::constant(0.3)}) {
    Case s(kernel, kAffine, 1e-2, 15);
    auto probes = probe_basis(s.grid(), s.K());
    for (const auto& psi : {ell_function(s.grid(), s.K()), indicator_at_least(s.grid(), s.K(), 1),
                            time_ell_function(s.grid(), s.K())}) {
      const auto mu = solve_linearized(psi, s.model);
      for (const auto& phi : probes) {
        const double ip = inner(psi, phi, s.model);
        EXPECT_LE(std::abs(upsilon(mu, phi, s.model) - ip), 1e-6 * (1 + std::abs(ip))) << psi.name() << "/" << phi.name();
      }
      EXPECT_NEAR(j_functional(mu, psi, s.model), 0.5 * inner(psi, psi, s.model), 1e-6);
    }
  }
}

TEST(Duality, GeneralKernelAndTabulatedRate) {
  Case s(Kernel::tabulated({0.0, 0.3, 1.0}, {0.8, 0.3, 0.1}), RateFn::tabulated({0, 1, 3}, {1.0, 1.6, 1.9}), 1e-2, 15);
  const auto psi = TestFunction::from_function(s.grid(), s.K(), [](double t, std::size_t x) {
    return std::cos(t) * std::log1p(static_cast<double>(x));
  });
  const auto mu = solve_linearized(psi, s.model);
  for (const auto& phi : probe_basis(s.grid(), s.K())) {
    const double ip = inner(psi, phi, s.model);
    EXPECT_LE(std::abs(upsilon(mu, phi, s.model) - ip), 1e-6 * (1 + std::abs(ip)));
  }
}

TEST(RateField, Examples) {
  Case s(Kernel::zero(), kTwo, 1e-3, 20);
  auto ell = ell_function(s.grid(), s.K());
  std::vector<TestFunction> just_ell{ell};
  auto mu = solve_linearized(ell, s.model);
  auto r = rate_field(mu, std::span<const TestFunction>(just_ell), s.model);
  EXPECT_NEAR(r.rate, 1.0, 1e-3);
  EXPECT_NEAR(r.coefficients[0], 1.0, 1e-6);

  auto basis = default_basis(s.grid(), s.K());
  EXPECT_EQ(rate_field(zero_field(s), std::span<const TestFunction>(basis), s.model).rate, 0.0);
}

TEST(RateField, MonotoneInBasis) {
  Case s(kExp, kAffine, 1e-2, 15);
  const auto psi = TestFunction::from_function(s.grid(), s.K(), [](double t, std::size_t x) {
    return (1 + t) * std::sqrt(static_cast<double>(x));
  });
  const auto mu = solve_linearized(psi, s.model);
  auto basis = default_basis(s.grid(), s.K());
  double prev = 0.0;
  for (std::size_t d = 1; d <= basis.size(); ++d) {
    const double I = rate_field(mu, std::span<const TestFunction>(basis.data(), d), s.model).rate;
    EXPECT_GE(I + 1e-10, prev);
    EXPECT_GE(I, 0.0);
    prev = I;
  }
  // The Riesz representative itself recovers 1/2 [psi, psi].
  basis.push_back(psi);
  const double full = rate_field(mu, std::span<const TestFunction>(basis), s.model).rate;
  EXPECT_NEAR(full / (0.5 * inner(psi, psi, s.model)), 1.0, 1e-6);
}

TEST(RateField, ContractionAgreesWithRateMean) {
  Case s(kExp, kAffine, 1e-2, 15);
  auto ell = ell_function(s.grid(), s.K());
  for (double c : {1.0, -0.5, 3.0}) {
    auto psi = combine(c, ell, 0.0, ell);
    auto mu = solve_linearized(psi, s.model);
    std::vector<double> eta(s.grid().points());
    for (std::size_t k = 0; k < eta.size(); ++k) eta[k] = mu.pair_ell(k);
    auto basis = default_basis(s.grid(), s.K());
    const double field = rate_field(mu, std::span<const TestFunction>(basis), s.model).rate;
    const double scalar = rate_mean(MeanDeviationPath::from_values(s.grid(), eta), s.mean, s.kernel, s.rate);
    EXPECT_NEAR(scalar / field, 1.0, 0.01) << "c=" << c;
  }
}

TEST(RateField, DegenerateBasisReportsConditioning) {
  Case s(kExp, kAffine, 1e-2, 15);
  std::vector<TestFunction> flat{TestFunction(s.grid(), s.K(), Table(s.grid().points(), s.K() + 1))};
  try {
    rate_field(zero_field(s), std::span<const TestFunction>(flat), s.model);
    FAIL();
  } catch (const ConditioningError& e) {
    EXPECT_TRUE(std::isinf(e.condition()));
  }
}

TEST(Tilt, FromTestFunction) {
  auto grid = TimeGrid::make(1.0, 0.5);
  auto psi = TestFunction::from_function(grid, 3, [](double t, std::size_t x) { return (1 + t) * x; });
  auto tilt = tilt_from(psi);
  EXPECT_DOUBLE_EQ(tilt.grad(0.0, 1), 1.0);
  EXPECT_DOUBLE_EQ(tilt.grad(0.25, 0), 1.25);
  EXPECT_DOUBLE_EQ(tilt.grad(1.0, 10), 2.0);  // beyond K reuses K-1
  EXPECT_DOUBLE_EQ(tilt.grad_sup, 2.0);
}
