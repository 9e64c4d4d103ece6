#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sslab/operator.hpp"

using namespace sslab;

namespace {

CoefficientField random_coeff(const GridSpec& g, std::mt19937& rng, double alpha, double beta) {
  std::uniform_real_distribution<double> u(alpha, beta);
  std::vector<std::vector<double>> faces(g.dim(), std::vector<double>(faces_per_axis(g)));
  for (auto& axis : faces)
    for (double& a : axis) a = u(rng);
  return CoefficientField(g, std::move(faces), alpha, beta);
}

Field random_field(const GridSpec& g, std::mt19937& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Field f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = u(rng);
  return f;
}

}  // namespace

TEST(Assemble, OneDimensionalLaplacian) {
  const GridSpec g(1, 3);
  const auto sys = assemble(CoefficientField::constant(g, 1.0), Field(g));
  const double s = 1.0 / (g.h() * g.h());
  const double expect[3][3] = {{2, -1, 0}, {-1, 2, -1}, {0, -1, 2}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(sys.entry(i, j), expect[i][j] * s, 1e-12);

  const auto shifted = assemble(CoefficientField::constant(g, 1.0), Field(g, 5.0));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(shifted.entry(i, i), 2 * s + 5.0, 1e-12);
}

TEST(Assemble, RandomCoefficientsGiveSymmetricMMatrix) {
  std::mt19937 rng(7);
  for (int d = 1; d <= 3; ++d) {
    const GridSpec g(d, 4);
    const auto sys = assemble(random_coeff(g, rng, 0.5, 3.0), random_field(g, rng, 0.0, 2.0));
    for (std::size_t i = 0; i < g.size(); ++i) {
      double offsum = 0.0;
      for (std::size_t j = 0; j < g.size(); ++j) {
        ASSERT_EQ(sys.entry(i, j), sys.entry(j, i));
        if (i != j) {
          ASSERT_LE(sys.entry(i, j), 0.0);
          offsum += -sys.entry(i, j);
        }
      }
      ASSERT_GE(sys.entry(i, i), offsum);  // weak diagonal dominance
    }
  }
}

TEST(Assemble, NegativeReactionThrows) {
  const GridSpec g(1, 4);
  Field c(g);
  c[2] = -1e-3;
  EXPECT_THROW(assemble(CoefficientField::constant(g, 1.0), c), DomainError);
}

TEST(Apply, SineIsAnEigenfunction) {
  const GridSpec g(1, 63);
  const Field s = Field::sample(g, [](const Point& x) { return std::sin(std::numbers::pi * x[0]); });
  const Field y = apply(assemble(CoefficientField::constant(g, 1.0), Field(g)), s);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  double worst = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) worst = std::max(worst, std::abs(y[i] - pi2 * s[i]));
  // truncation error pi^4 h^2 / 12
  EXPECT_LT(worst, pi2 * pi2 * g.h() * g.h() / 12 * 1.01);
}

TEST(Apply, ZeroAndSymmetry) {
  std::mt19937 rng(11);
  const GridSpec g(2, 6);
  const auto sys = assemble(random_coeff(g, rng, 1.0, 2.0), random_field(g, rng, 0.0, 1.0));
  EXPECT_TRUE(apply(sys, Field(g)).is_zero());
  const Field x = random_field(g, rng, -1, 1), y = random_field(g, rng, -1, 1);
  const double a = inner(apply(sys, x), y), b = inner(x, apply(sys, y));
  EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
}

TEST(Apply, EnergyIdentityAndCoercivity) {
  std::mt19937 rng(3);
  for (int d = 1; d <= 3; ++d) {
    const GridSpec g(d, 5);
    const auto coeff = random_coeff(g, rng, 0.7, 4.0);
    const auto sys = assemble(coeff, Field(g));
    for (int trial = 0; trial < 5; ++trial) {
      const Field x = random_field(g, rng, -2, 2);
      const double lhs = inner(apply(sys, x), x);
      const double energy = weighted_energy(coeff, x);
      EXPECT_NEAR(lhs, energy, 1e-12 * energy);
      const double h1 = h1_seminorm(x);
      EXPECT_GE(lhs, coeff.alpha() * h1 * h1 * (1 - 1e-12));
    }
  }
}

TEST(Ellipticity, ReportsViolationsWithLocation) {
  const GridSpec g(2, 4);
  auto coeff = CoefficientField::constant(g, 1.0);
  EXPECT_TRUE(ellipticity_audit(coeff).pass);
  coeff.faces(1)[3] = 0.0;
  const auto rep = ellipticity_audit(coeff);
  ASSERT_FALSE(rep.pass);
  ASSERT_EQ(rep.violations.size(), 1u);
  EXPECT_EQ(rep.violations[0].axis, 1);
  EXPECT_EQ(rep.violations[0].face, 3u);
  std::mt19937 rng(5);
  EXPECT_TRUE(ellipticity_audit(random_coeff(g, rng, 0.2, 0.9)).pass);
}

TEST(Cg, RecoversKnownSolution) {
  std::mt19937 rng(17);
  const GridSpec g(3, 8);
  const auto sys = assemble(random_coeff(g, rng, 1.0, 5.0), random_field(g, rng, 0.0, 3.0));
  const Field xstar = random_field(g, rng, -1, 1);
  const auto res = cg_solve(sys, apply(sys, xstar), 1e-12);
  EXPECT_LE(res.relative_residual, 1e-12);
  double err = 0.0;
  for (std::size_t i = 0; i < xstar.size(); ++i) err = std::max(err, std::abs(res.x[i] - xstar[i]));
  EXPECT_LT(err, 1e-8);
}

TEST(Cg, ZeroRhsIsImmediate) {
  const GridSpec g(2, 5);
  const auto res = cg_solve(assemble(CoefficientField::constant(g, 1.0), Field(g)), Field(g));
  EXPECT_TRUE(res.x.is_zero());
  EXPECT_LE(res.iterations, 1);
}

TEST(Cg, IterationCapThrowsWithResidual) {
  const GridSpec g(2, 15);
  const auto sys = assemble(CoefficientField::constant(g, 1.0), Field(g));
  try {
    (void)cg_solve(sys, Field(g, 1.0), 1e-14, 2);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_GT(e.residual(), 1e-14);
    EXPECT_EQ(e.iterations(), 2);
  }
}

TEST(Cg, PoissonSecondOrder) {
  // -Lap u = 2 pi^2 sin(pi x) sin(pi y); error ratio ~4 when h halves
  std::vector<double> errs;
  for (int n : {7, 15, 31}) {
    const GridSpec g(2, n);
    auto exact = [](const Point& x) { return std::sin(std::numbers::pi * x[0]) * std::sin(std::numbers::pi * x[1]); };
    const Field rhs = Field::sample(g, [&](const Point& x) { return 2 * std::numbers::pi * std::numbers::pi * exact(x); });
    const auto res = cg_solve(assemble(CoefficientField::constant(g, 1.0), Field(g)), rhs, 1e-12);
    errs.push_back((res.x - Field::sample(g, exact)).sup_abs());
  }
  EXPECT_NEAR(errs[0] / errs[1], 4.0, 0.4);
  EXPECT_NEAR(errs[1] / errs[2], 4.0, 0.4);
}

TEST(Cg, DiscreteMaximumPrinciple) {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const GridSpec g(2, 9);
    const auto sys = assemble(random_coeff(g, rng, 0.1, 10.0), random_field(g, rng, 0.0, 50.0));
    Field rhs = random_field(g, rng, 0.0, 1.0);
    for (std::size_t i = 0; i < rhs.size(); ++i)
      if (i % 3) rhs[i] = 0.0;  // sparse sources make the minimum principle bite
    const auto res = cg_solve(sys, rhs);
    EXPECT_GE(res.x.min(), -1e-10 * rhs.sup_abs());
  }
}

TEST(Cg, LargerReactionDoesNotIncreaseSolution) {
  std::mt19937 rng(29);
  const GridSpec g(2, 8);
  const auto coeff = random_coeff(g, rng, 1.0, 2.0);
  const Field c1 = random_field(g, rng, 0.0, 5.0);
  const Field c2 = c1 + random_field(g, rng, 0.0, 5.0);
  const Field rhs = random_field(g, rng, 0.0, 1.0);
  const auto x1 = cg_solve(assemble(coeff, c1), rhs, 1e-13).x;
  const auto x2 = cg_solve(assemble(coeff, c2), rhs, 1e-13).x;
  for (std::size_t i = 0; i < x1.size(); ++i) EXPECT_LE(x2[i], x1[i] + 1e-11 * x1.sup_abs());
}
