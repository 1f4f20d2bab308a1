#include "support.hpp"

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <random>

using namespace brw;

namespace {

TwoTypeModel with_law(BranchingLaw law, double k1 = 1.0, double k2 = 0.5) {
  return TwoTypeModel(JumpKernel::nearest_neighbour(1), k1, JumpKernel::nearest_neighbour(1), k2, std::move(law));
}

Eigen::Matrix2d expm(double a, double d, double b, double c, double t) {
  Eigen::Matrix2d m;
  m << a, b, c, d;
  return (m * t).exp();
}

double max_abs_diff(const MomentField& f, const MomentField& g) {
  double worst = 0.0;
  for (int s = 0; s < 4; ++s)
    for (std::size_t k = 0; k < f.box.size(); ++k) worst = std::max(worst, std::abs(f.values[s][k] - g.values[s][k]));
  return worst;
}

double max_rel_diff(const MomentField& f, const MomentField& g) {
  double worst = 0.0;
  for (int s = 0; s < 4; ++s) {
    double scale = 0.0, diff = 0.0;
    for (std::size_t k = 0; k < f.box.size(); ++k) {
      scale = std::max(scale, std::abs(g.values[s][k]));
      diff = std::max(diff, std::abs(f.values[s][k] - g.values[s][k]));
    }
    if (scale > 0.0) worst = std::max(worst, diff / scale);
  }
  return worst;
}

}  // namespace

TEST(FundamentalMatrix, MatchesMatrixExponential) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-2.0, 1.0), p(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double a = u(gen), d = u(gen), t = 3.0 * p(gen);
    const double b = i % 3 == 0 ? 0.0 : p(gen), c = i % 5 == 0 ? 0.0 : p(gen);
    const auto m = fundamental_matrix(a, d, b, c, t);
    const auto e = expm(a, d, b, c, t);
    for (int s = 0; s < 4; ++s) EXPECT_NEAR(m[s], e(s / 2, s % 2), 1e-12 * std::max(1.0, std::abs(e(s / 2, s % 2))));
  }
}

TEST(FundamentalMatrix, RepeatedAndNearlyRepeatedRoots) {
  for (double bc : {0.0, 1e-20, 1e-17}) {
    for (double gap : {0.0, 1e-12, 1e-10}) {
      const double a = -0.3, d = a + gap, t = 2.5;
      const double b = std::sqrt(bc), c = std::sqrt(bc);
      const auto m = fundamental_matrix(a, d, b, c, t);
      const auto e = expm(a, d, b, c, t);
      for (int s = 0; s < 4; ++s) EXPECT_NEAR(m[s], e(s / 2, s % 2), 1e-12);
    }
  }
  // triangular with equal diagonal: t e^{at} off-diagonal
  const auto m = fundamental_matrix(-0.5, -0.5, 0.7, 0.0, 2.0);
  EXPECT_NEAR(m[1], 0.7 * 2.0 * std::exp(-1.0), 1e-14);
}

TEST(FundamentalMatrix, DegenerateSplitContinuity) {
  const double a = -0.2, d = -0.6, t = 3.0;
  const double b = 1e-4, c = 1e-4;  // bc = 1e-8
  const auto full = fundamental_matrix(a, d, b, c, t);
  const auto upper = fundamental_matrix(a, d, b, 0.0, t);
  const auto lower = fundamental_matrix(a, d, 0.0, c, t);
  EXPECT_NEAR(full[0], upper[0], 1e-4);
  EXPECT_NEAR(full[1], upper[1], 1e-4);
  EXPECT_NEAR(full[2], lower[2], 1e-4);
  EXPECT_NEAR(full[3], lower[3], 1e-4);
}

TEST(FirstMoment, InitialConditionIsIdentityAtOrigin) {
  const auto m = figure_critical_model();
  const ThetaGrid g(1, 256);
  EXPECT_TRUE(first_moment_fourier(m, 0.0, Site{0}, g).isIdentity());
  EXPECT_TRUE(first_moment_fourier(m, 0.0, Site{2}, g).isZero());
  EXPECT_THROW(first_moment_fourier(m, -1.0, Site{0}, g), std::invalid_argument);
}

TEST(FirstMoment, UncoupledTypesAreDampedWalks) {
  const auto law = BranchingLaw(0.3, 0.1, {{2, 0, 0.4}}, {{0, 3, 0.2}});
  const auto m = TwoTypeModel(JumpKernel::nearest_neighbour(1), 1.0, JumpKernel::uniform_box(1, 3), 2.0, law);
  const auto& dc = m.constants();
  ASSERT_EQ(dc.b, 0.0);
  ASSERT_EQ(dc.c, 0.0);
  const ThetaGrid g(1, 256);
  for (double t : {0.5, 2.0})
    for (int x : {0, 1, 4}) {
      const auto v = first_moment_fourier(m, t, Site{x}, g);
      EXPECT_NEAR(v(0, 0), std::exp(dc.r1 * t) * transition_probability(m.kernel(1), 1.0, t, Site{x}, Site{0}, g), 1e-14);
      EXPECT_NEAR(v(1, 1), std::exp(dc.r2 * t) * transition_probability(m.kernel(2), 2.0, t, Site{x}, Site{0}, g), 1e-14);
      EXPECT_EQ(v(0, 1), 0.0);
      EXPECT_EQ(v(1, 0), 0.0);
    }
}

TEST(FirstMoment, BoxSumEqualsSymbolAtZero) {
  const ThetaGrid g(1, 256);
  for (const auto& law : {BranchingLaw(0.2, 0.5, {{2, 0, 0.3}}, {{1, 1, 0.4}}), figure_critical_law()}) {
    const auto m = with_law(law);
    const double t = 2.0;
    const auto f = first_moment_fourier_field(m, t, 40, g);
    const Eigen::Matrix2d total = (m.constants().matrixD * t).exp();
    for (int i = 1; i <= 2; ++i)
      for (int j = 1; j <= 2; ++j) EXPECT_NEAR(f.sum(i, j), total(i - 1, j - 1), 1e-6);
    if (m.constants().b == 0.0) EXPECT_NEAR(f.sum(1, 1), std::exp(m.constants().r1 * t), 1e-6);
  }
}

TEST(FirstMomentOracle, PureWalkAndPureDeath) {
  const ThetaGrid g(1, 256);
  const auto walk = with_law(BranchingLaw(0.0, 0.0, {}, {}));
  const auto f = first_moment_ode_oracle(walk, 2.0, 30);
  EXPECT_FALSE(f.degraded);
  for (int x : {0, 1, 5}) EXPECT_NEAR(f.at(1, 1, Site{x}), support::simple_walk_bessel(2.0, x), 1e-7);
  const auto death = with_law(BranchingLaw(0.7, 0.0, {}, {}));
  const auto h = first_moment_ode_oracle(death, 2.0, 30);
  for (int x : {0, 3}) EXPECT_NEAR(h.at(1, 1, Site{x}), std::exp(-1.4) * support::simple_walk_bessel(2.0, x), 1e-7);
}

TEST(FirstMomentOracle, ParityWithFourierRoute) {
  const ThetaGrid g(1, 256);
  const auto m = figure_critical_model();
  for (double t : {0.5, 2.0}) {
    const auto f = first_moment_fourier_field(m, t, 30, g);
    const auto o = first_moment_ode_oracle(m, t, 30);
    EXPECT_LT(max_abs_diff(f, o), 1e-5);
  }
}

TEST(SecondMoment, InitialConditionAndNoBirths) {
  const ThetaGrid g(1, 256);
  const auto m = figure_critical_model();
  DuhamelOptions opt;
  const auto f0 = second_moment_fourier_field(m, 0.0, g, opt);
  EXPECT_EQ(f0.at(1, 1, Site{0}), 1.0);
  EXPECT_EQ(f0.at(1, 2, Site{0}), 0.0);
  EXPECT_EQ(f0.at(2, 2, Site{1}), 0.0);
  const auto o0 = second_moment_ode_oracle(m, 0.0, 10);
  EXPECT_EQ(o0.second.at(2, 2, Site{0}), 1.0);

  // deaths and walks only: counts are 0/1, so m2 = m1
  const auto death = with_law(BranchingLaw(0.4, 0.2, {}, {}, 0.3));
  const auto f = second_moment_fourier_field(death, 2.0, g, opt);
  const auto f1 = first_moment_fourier_field(death, 2.0, opt.box_radius, g);
  EXPECT_LT(max_abs_diff(f, f1), 1e-14);
  const auto o = second_moment_ode_oracle(death, 2.0, 30);
  EXPECT_LT(max_abs_diff(o.second, o.first), 1e-12);
}

TEST(SecondMoment, CriticalBinaryTotalCount) {
  const double lambda = 0.5, t = 3.0;
  // without walks the total count has E N^2 = 1 + 2 lambda t
  {
    const auto m = support::single_type_model(lambda, {{2, 0, lambda}}, 0.0);
    const auto o = second_moment_ode_oracle(m, t, 2);
    EXPECT_NEAR(o.second.sum(1, 1), 1.0 + 2.0 * lambda * t, 1e-6);
  }
  // with a walk the pair must share a site: sum_x E n(x)^2 = 1 + 2 lambda int_0^t p(2s, 0, 0) ds
  {
    const auto m = support::single_type_model(lambda, {{2, 0, lambda}}, 1.0);
    const auto o = second_moment_ode_oracle(m, t, 30);
    const int n = 2000;
    double integral = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double s = t * k / n;
      const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      integral += w * support::simple_walk_bessel(2.0 * s, 0);
    }
    integral *= t / n / 3.0;
    EXPECT_NEAR(o.second.sum(1, 1), 1.0 + 2.0 * lambda * integral, 1e-6);
    const ThetaGrid g(1, 256);
    const auto f = second_moment_fourier_field(m, t, g);
    EXPECT_NEAR(f.sum(1, 1), 1.0 + 2.0 * lambda * integral, 1e-6);
  }
}

TEST(SecondMoment, ParityWithOracleAndDomination) {
  const ThetaGrid g(1, 256);
  const auto m = figure_critical_model();
  for (double t : {1.0, 3.0}) {
    const auto f = second_moment_fourier_field(m, t, g);
    const auto o = second_moment_ode_oracle(m, t, 30);
    EXPECT_LT(max_rel_diff(f, o.second), 1e-4) << "t=" << t;
    const auto f1 = first_moment_fourier_field(m, t, 30, g);
    for (int s = 0; s < 4; ++s)
      for (std::size_t k = 0; k < f.box.size(); ++k) {
        EXPECT_GE(f1.values[s][k], -1e-14);
        EXPECT_GE(f.values[s][k] - f1.values[s][k], -1e-12);
      }
  }
}

TEST(SecondMoment, PointEvaluationMatchesField) {
  const ThetaGrid g(1, 256);
  const auto m = figure_critical_model();
  const auto f = second_moment_fourier_field(m, 1.5, g);
  const auto v = second_moment_fourier(m, 1.5, Site{3}, g);
  EXPECT_TRUE(v.isApprox(f.matrix_at(Site{3}), 1e-14));
}

TEST(Asymptote, DiagonalCase) {
  const auto m = with_law(BranchingLaw(0.0, 0.0, {}, {}), 1.0, 1.0);
  const auto a = first_moment_asymptote(m, 400.0, Site{0});
  EXPECT_NEAR(a(0, 0), 0.019947, 1e-6);
  const ThetaGrid g(1, 1024);
  const auto f = first_moment_fourier(m, 200.0, Site{0}, g);
  EXPECT_NEAR(f(0, 0) / first_moment_asymptote(m, 200.0, Site{0})(0, 0), 1.0, 0.05);
}

TEST(Asymptote, CrossTermCases) {
  // b = 0, c > 0 with r1 != r2
  const auto m = with_law(BranchingLaw(0.1, 0.3, {{2, 0, 0.1}}, {{1, 1, 0.2}}), 1.0, 1.0);
  const auto& dc = m.constants();
  ASSERT_EQ(dc.b, 0.0);
  ASSERT_GT(dc.c, 0.0);
  const double t = 50.0, g1 = gamma_constant(m.kernel(1), 1.0);
  const auto a = first_moment_asymptote(m, t, Site{0});
  EXPECT_NEAR(a(1, 0), dc.c / (dc.r1 - dc.r2) * (std::exp(dc.r1 * t) - std::exp(dc.r2 * t)) * g1 / std::sqrt(t), 1e-15);
  // C2 = 0: r1 = r2 and bc = 0
  const auto z = with_law(BranchingLaw(0.2, 0.2, {}, {{1, 1, 0.3}}), 1.0, 1.0);
  ASSERT_NEAR(z.constants().C2, 0.0, 1e-15);
  const auto az = first_moment_asymptote(z, t, Site{0});
  EXPECT_NEAR(az(1, 0), 0.3 * std::exp(z.constants().r1 * t) * g1 * std::sqrt(t), 1e-12);
  // unequal walks are rejected
  EXPECT_THROW(first_moment_asymptote(figure_critical_model(), t, Site{0}), UnsupportedConfiguration);
}

TEST(Asymptote, CoupledCaseTracksFourierValues) {
  const auto m = with_law(BranchingLaw(0.3, 0.2, {{1, 1, 0.2}}, {{1, 1, 0.15}}), 1.0, 1.0);
  const ThetaGrid g(1, 2048);
  const double t = 300.0;
  const auto a = first_moment_asymptote(m, t, Site{0});
  const auto f = first_moment_fourier(m, t, Site{0}, g);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(f(i, j) / a(i, j), 1.0, 0.05) << i << j;
}
