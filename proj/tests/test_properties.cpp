// Randomized invariants; every generator is a seeded std::mt19937.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracle.hpp"
#include "sslab/scheme.hpp"

using namespace sslab;

namespace {

constexpr int kTrials = 200;

Rational random_rational(std::mt19937& rng, int lo_num, int hi_num, int max_den) {
  std::uniform_int_distribution<int> den(1, max_den);
  const int q = den(rng);
  std::uniform_int_distribution<int> num(lo_num * q, hi_num * q);
  return Rational(num(rng), q);
}

Params random_params(std::mt19937& rng) {
  Params p;
  p.d = std::uniform_int_distribution<int>(3, 9)(rng);
  p.r = random_rational(rng, 2, 12, 4);
  p.gamma = Rational(std::uniform_int_distribution<int>(1, 11)(rng), 12);
  p.theta = Rational(std::uniform_int_distribution<int>(0, 11)(rng), 12);
  p.m = random_rational(rng, 1, 6, 13);
  return p;
}

Field random_field(const GridSpec& g, std::mt19937& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Field f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = u(rng);
  return f;
}

GridSpec random_grid(std::mt19937& rng, int max_cells = 7) {
  return GridSpec(std::uniform_int_distribution<int>(1, 3)(rng), std::uniform_int_distribution<int>(3, max_cells)(rng));
}

}  // namespace

TEST(Properties, HolderIsAnInvolution) {
  std::mt19937 rng(1);
  EXPECT_EQ(holder_conjugate(holder_conjugate(Rational(1))), Exponent(1));
  EXPECT_EQ(holder_conjugate(holder_conjugate(Exponent::infinity())), Exponent::infinity());
  for (int t = 0; t < kTrials; ++t) {
    const Rational p = random_rational(rng, 1, 40, 17);
    if (p < Rational(1)) continue;
    ASSERT_EQ(holder_conjugate(holder_conjugate(p)), Exponent(p)) << p;
  }
}

TEST(Properties, DoubleSobolevClosedForm) {
  std::mt19937 rng(2);
  for (int t = 0; t < kTrials; ++t) {
    const int d = std::uniform_int_distribution<int>(3, 12)(rng);
    const Rational m = random_rational(rng, 1, d, 23);
    if (m < Rational(1) || m >= Rational(d, 2)) continue;
    ASSERT_EQ(double_sobolev(m, d), Exponent(Rational(d) * m / (Rational(d) - 2 * m)));
  }
}

TEST(Properties, DualThresholdMeetsTwoStar) {
  std::mt19937 rng(3);
  for (int t = 0; t < kTrials; ++t) {
    Params p = random_params(rng);
    p.m = dual_space_threshold(p);
    ASSERT_EQ(double_sobolev(p.m, p.d).value() * (Rational(1) + p.gamma), two_star(p.d)) << p.str();
  }
}

TEST(Properties, PmIsMonotoneWithinEachBranch) {
  std::mt19937 rng(4);
  for (int t = 0; t < kTrials; ++t) {
    Params a = random_params(rng);
    Params b = a;
    b.m = a.m + random_rational(rng, 0, 1, 19);
    for (const auto& ea : p_m(a))
      if (const auto eb = classify(b).u_exponent(ea.tag)) {
        ASSERT_LE(ea.u_exponent, *eb) << a.str() << " vs " << b.str();
      }
  }
}

TEST(Properties, ClassifyIsTotalDeterministicAndMatchesOracle) {
  std::mt19937 rng(5);
  for (int t = 0; t < kTrials; ++t) {
    const Params p = random_params(rng);
    const Regime a = classify(p), b = classify(p);
    ASSERT_EQ(a.entries, b.entries);
    ASSERT_EQ(oracle::to_str(a.entries), oracle::to_str(oracle::regimes(oracle::from(p)))) << p.str();
    // Bounded and Borderline exclude each other and the m < d/2 branches
    if (a.has(RegimeTag::Bounded) || a.has(RegimeTag::Borderline)) {
      ASSERT_EQ(a.entries.size(), 1u) << p.str();
    }
  }
}

TEST(Properties, TruncationSplit) {
  std::mt19937 rng(6);
  for (int t = 0; t < 50; ++t) {
    const Field f = random_field(random_grid(rng), rng, -5, 5);
    const double k = std::uniform_real_distribution<double>(0, 4)(rng);
    const Field tk = truncate_Tk(f, k), gk = excess_Gk(f, k);
    ASSERT_LE(tk.sup_abs(), k);
    for (std::size_t i = 0; i < f.size(); ++i) {
      // |F| - k can round when |F| > k, so the sum is exact only to one ulp
      ASSERT_LE(std::abs(tk[i] + gk[i] - f[i]), std::nextafter(std::abs(f[i]), HUGE_VAL) - std::abs(f[i]));
      if (std::abs(f[i]) <= k) {
        ASSERT_EQ(tk[i], f[i]);
      }
      ASSERT_EQ(gk[i] == 0.0, std::abs(f[i]) <= k);
    }
  }
}

TEST(Properties, NormalizedLpIsMonotoneInP) {
  std::mt19937 rng(7);
  for (int t = 0; t < 50; ++t) {
    const Field f = random_field(random_grid(rng), rng, -3, 3);
    const double mu = f.grid().measure();
    double prev = 0.0;
    for (double p : {1.0, 1.5, 2.0, 3.0, 7.0, 20.0}) {
      const double v = lp_norm(f, p) / std::pow(mu, 1.0 / p);
      ASSERT_GE(v, prev * (1 - 1e-12));
      prev = v;
    }
    ASSERT_GE(f.sup_abs(), prev * (1 - 1e-12));
  }
}

TEST(Properties, H1VanishesOnlyForZero) {
  std::mt19937 rng(8);
  for (int t = 0; t < 50; ++t) {
    const GridSpec g = random_grid(rng);
    Field f(g);
    EXPECT_EQ(h1_seminorm(f), 0.0);
    f[std::uniform_int_distribution<std::size_t>(0, f.size() - 1)(rng)] = 1e-3;
    EXPECT_GT(h1_seminorm(f), 0.0);
  }
}

TEST(Properties, OperatorInvariants) {
  std::mt19937 rng(9);
  for (int t = 0; t < 40; ++t) {
    const GridSpec g = random_grid(rng, 9);
    std::uniform_real_distribution<double> ua(0.3, 6.0);
    std::vector<std::vector<double>> faces(g.dim(), std::vector<double>(faces_per_axis(g)));
    for (auto& axis : faces)
      for (double& a : axis) a = ua(rng);
    const CoefficientField coeff(g, faces, 0.3, 6.0);
    const Field c = random_field(g, rng, 0.0, 10.0);
    const auto sys = assemble(coeff, c);
    const Field x = random_field(g, rng, -1, 1);
    const auto plain = assemble(coeff, Field(g));
    const double e = weighted_energy(coeff, x);
    ASSERT_NEAR(inner(apply(plain, x), x), e, 1e-12 * e);
    ASSERT_GE(inner(apply(plain, x), x), coeff.alpha() * std::pow(h1_seminorm(x), 2) * (1 - 1e-12));
    const Field rhs = random_field(g, rng, 0.0, 1.0);
    const auto sol = cg_solve(sys, rhs).x;
    ASSERT_GE(sol.min(), -1e-10 * rhs.sup_abs());
    const auto sol2 = cg_solve(assemble(coeff, c + Field(g, 1.0)), rhs, 1e-12).x;
    for (std::size_t i = 0; i < sol.size(); ++i) ASSERT_LE(sol2[i], sol[i] + 1e-9 * sol.sup_abs());
  }
}

TEST(Properties, SchemeOutputsAreNonnegative) {
  std::mt19937 rng(10);
  for (int t = 0; t < 10; ++t) {
    const GridSpec g(std::uniform_int_distribution<int>(1, 3)(rng), std::uniform_int_distribution<int>(3, 6)(rng));
    Params p;
    p.r = Rational(std::uniform_int_distribution<int>(4, 10)(rng), 2);
    p.gamma = Rational(std::uniform_int_distribution<int>(1, 7)(rng), 8);
    p.theta = Rational(std::uniform_int_distribution<int>(0, 7)(rng), 8);
    p.d = g.dim() < 3 ? 3 : g.dim();
    const ProblemData data(p, CoefficientField::constant(g, 1.0), random_field(g, rng, 0.0, 4.0));
    const int n = std::uniform_int_distribution<int>(1, 16)(rng);
    const auto st = solve_level(data, n);
    ASSERT_TRUE(st.converged) << p.str() << " n=" << n << " " << st.message;
    ASSERT_GE(st.u.min(), 0.0);
    ASSERT_GE(st.v.min(), 0.0);
  }
}
