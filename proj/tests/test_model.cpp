#include <gtest/gtest.h>

#include <cmath>

#include "hawkes/model.hpp"

using namespace hawkes;

TEST(KernelNorms, Examples) {
  auto z = kernel_norms(Kernel::zero(), 1.0, 1e-3);
  EXPECT_EQ(z.sup_norm, 0.0);
  EXPECT_EQ(z.l1_norm, 0.0);

  auto e = kernel_norms(Kernel::exponential(1.0, 2.0), 1.0, 1e-3);
  EXPECT_DOUBLE_EQ(e.sup_norm, 1.0);
  EXPECT_NEAR(e.l1_norm, 0.5 * (1.0 - std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(e.l1_norm, 0.4323324, 1e-7);

  auto c = kernel_norms(Kernel::constant(0.3), 2.0, 1e-3);
  EXPECT_NEAR(c.sup_norm, 0.3, 1e-15);
  EXPECT_NEAR(c.l1_norm, 0.6, 1e-12);
}

TEST(KernelNorms, TabulatedTrapezoid) {
  // Triangle of height 1 on [0, 2]: area 1 exactly under the trapezoid rule
  // when the knots lie on the grid.
  auto k = Kernel::tabulated({0.0, 1.0, 2.0}, {0.0, 1.0, 0.0});
  auto n = kernel_norms(k, 2.0, 0.5);
  EXPECT_NEAR(n.l1_norm, 1.0, 1e-12);
  EXPECT_NEAR(n.sup_norm, 1.0, 1e-12);
}

TEST(KernelNorms, MonotoneInHorizon) {
  const Kernel kernels[] = {Kernel::exponential(0.7, 1.3), Kernel::constant(0.2),
                            Kernel::tabulated({0.0, 0.5, 3.0}, {1.0, 0.2, 0.4})};
  for (const auto& k : kernels) {
    double prev = 0.0;
    for (double T : {0.5, 1.0, 1.5, 2.0, 4.0}) {
      const double l1 = kernel_norms(k, T, T / 200).l1_norm;
      EXPECT_LE(prev, l1 + 1e-12);
      prev = l1;
    }
  }
}

TEST(KernelNorms, NonFiniteValueNamesTime) {
  auto k = Kernel::tabulated({0.0, 1.0}, {1.0, 1.0});
  EXPECT_NO_THROW(kernel_norms(k, 1.0, 0.1));
  auto bad = Kernel::tabulated({0.0, 1.0}, {1.0, INFINITY});
  try {
    kernel_norms(bad, 1.0, 0.5);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("t="), std::string::npos) << e.what();
  }
}

TEST(Kernel, ExponentialEvalAndDeriv) {
  auto k = Kernel::exponential(1.5, 2.0);
  EXPECT_DOUBLE_EQ(k(0.3), 1.5 * std::exp(-0.6));
  EXPECT_DOUBLE_EQ(k.deriv(0.3), -3.0 * std::exp(-0.6));
  const double h = 1e-6;
  EXPECT_NEAR((k(0.3 + h) - k(0.3 - h)) / (2 * h), k.deriv(0.3), 1e-6 * std::abs(k.deriv(0.3)));
}

TEST(Kernel, TabulatedInterpolatesLinearly) {
  auto k = Kernel::tabulated({0.0, 1.0, 2.0}, {2.0, 1.0, 1.5});
  EXPECT_DOUBLE_EQ(k(0.5), 1.5);
  EXPECT_DOUBLE_EQ(k(1.5), 1.25);
  EXPECT_DOUBLE_EQ(k(5.0), 1.5);
  EXPECT_DOUBLE_EQ(k.deriv(0.5), -1.0);
  EXPECT_DOUBLE_EQ(k.deriv(1.5), 0.5);
}

TEST(Rate, AffineLipschitzIsSlope) {
  auto r = RateFn::affine(1.0, 0.75);
  EXPECT_DOUBLE_EQ(r.lipschitz(), 0.75);
  EXPECT_DOUBLE_EQ(r(2.0), 2.5);
  EXPECT_DOUBLE_EQ(r.deriv(2.0), 0.75);
  EXPECT_DOUBLE_EQ(RateFn::constant(2.0).lipschitz(), 0.0);
}

TEST(Rate, TabulatedIsMonotoneAndSmooth) {
  auto r = RateFn::tabulated({0.0, 1.0, 2.0, 4.0}, {1.0, 1.5, 1.7, 1.8});
  double prev = r(0.0);
  for (double x = 0.01; x < 5.0; x += 0.01) {
    const double y = r(x);
    EXPECT_GE(y, prev - 1e-14);
    prev = y;
    const double h = 1e-6;
    EXPECT_NEAR((r(x + h) - r(x - h)) / (2 * h), r.deriv(x), 1e-4 * std::max(1.0, std::abs(r.deriv(x))));
    EXPECT_LE(std::abs(r.deriv(x)), r.lipschitz());
  }
  EXPECT_DOUBLE_EQ(r(1.0), 1.5);
}

TEST(Assumptions, Examples) {
  auto a = validate_assumptions(Kernel::zero(), RateFn::affine(1, 1), 1.0);
  EXPECT_TRUE(a.passed);
  EXPECT_DOUBLE_EQ(a.stability_margin, 1.0);

  auto b = validate_assumptions(Kernel::exponential(1, 2), RateFn::affine(1, 1), 1.0);
  EXPECT_TRUE(b.passed) << (b.warnings.empty() ? "" : b.warnings.front());
  EXPECT_NEAR(b.stability_margin, 1.0 - 0.4323324, 1e-7);

  auto c = validate_assumptions(Kernel::constant(1), RateFn::affine(1, 1), 2.0);
  EXPECT_FALSE(c.passed);
  EXPECT_NEAR(c.stability_margin, -1.0, 1e-9);
}

TEST(Assumptions, ZeroKernelAlwaysPasses) {
  for (auto r : {RateFn::constant(2.0), RateFn::affine(0.1, 5.0), RateFn::tabulated({0, 1, 3}, {0.5, 2.0, 2.5})})
    EXPECT_TRUE(validate_assumptions(Kernel::zero(), r, 3.0).passed);
}

TEST(Assumptions, FailingProbesAreReportedNotThrown) {
  // Rate that turns non-positive inside the probe range.
  auto r = RateFn::affine(1.0, -1.0);
  AssumptionReport rep;
  EXPECT_NO_THROW(rep = validate_assumptions(Kernel::exponential(0.5, 2.0), r, 1.0));
  EXPECT_FALSE(rep.passed);
  EXPECT_FALSE(rep.warnings.empty());

  // Declared Lipschitz constant too small.
  auto liar = RateFn::custom([](double x) { return 1.0 + 2.0 * x; }, [](double) { return 2.0; }, 1.0);
  auto rep2 = validate_assumptions(Kernel::exponential(0.2, 2.0), liar, 1.0);
  EXPECT_FALSE(rep2.passed);

  // Wrong derivative.
  auto bad_deriv = RateFn::custom([](double x) { return 1.0 + x * x / (1 + x); },
                                  [](double) { return 0.0; }, 1.0);
  EXPECT_FALSE(validate_assumptions(Kernel::exponential(0.2, 2.0), bad_deriv, 1.0).passed);

  // Negative kernel.
  auto neg = Kernel::tabulated({0.0, 1.0}, {0.1, -0.1});
  EXPECT_FALSE(validate_assumptions(neg, RateFn::affine(1, 0.5), 1.0).passed);
}
