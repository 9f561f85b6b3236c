#include <gtest/gtest.h>

#include <cmath>

#include "difflab/gaussian.hpp"
#include "difflab/rng.hpp"
#include "difflab/schedule.hpp"
#include "support/test_support.hpp"

using namespace difflab;

TEST(DiagGaussian, Invariants) {
  EXPECT_THROW(DiagGaussian({0.0}, {1.0, 2.0}), ContractViolation);
  EXPECT_THROW(DiagGaussian({0.0}, {-1.0}), ContractViolation);
}

TEST(LogPdf, StandardNormalAtZero) {
  DiagGaussian g = DiagGaussian::standard(1);
  EXPECT_NEAR(log_pdf(g, {0.0}), -0.5 * std::log(2.0 * M_PI), 1e-12);
  EXPECT_NEAR(log_pdf(g, {0.0}), -0.9189385, 1e-7);
}

TEST(LogPdf, SymmetryAboutMean) {
  DiagGaussian g = DiagGaussian({0.0, 0.0}, {0.7, 2.3});
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    Vec x = rng.normal_vec(2);
    Vec nx = {-x[0], -x[1]};
    EXPECT_DOUBLE_EQ(log_pdf(g, x), log_pdf(g, nx));
  }
}

TEST(LogPdf, IntegratesToOneByQuadrature) {
  DiagGaussian g = DiagGaussian({1.3}, {0.42});
  const double integral = oracle::gh_integrate_exp(
      [&](double x) { return log_pdf(g, {x}); }, g.mean[0], std::sqrt(g.var[0]));
  EXPECT_NEAR(integral, 1.0, 1e-6);
}

TEST(KlDiag, IdenticalIsZero) {
  DiagGaussian g = DiagGaussian({0.3, -0.4}, {1.2, 0.5});
  EXPECT_DOUBLE_EQ(kl_diag(g, g), 0.0);
}

TEST(KlDiag, PaperUnitShiftValue) {
  // KL(N(1,1) || N(0,1)) = 1/2.
  EXPECT_DOUBLE_EQ(kl_diag(DiagGaussian({1.0}, {1.0}), DiagGaussian({0.0}, {1.0})), 0.5);
}

TEST(KlDiag, MatchesMonteCarlo) {
  DiagGaussian p = DiagGaussian({0.5, -1.0}, {0.8, 1.7});
  DiagGaussian q = DiagGaussian({-0.2, 0.3}, {1.1, 0.6});
  Rng rng(77);
  const int n = 100000;
  Vec draws(n);
  for (int i = 0; i < n; ++i) {
    Vec x = reparam_sample(p, rng.normal_vec(2));
    draws[i] = log_pdf(p, x) - log_pdf(q, x);
  }
  const double est = oracle::mean(draws);
  const double se = oracle::std_error_of_mean(draws);
  EXPECT_NEAR(est, kl_diag(p, q), 3.0 * se);
}

TEST(KlDiag, NonNegativeAndZeroOnlyOnDiagonal) {
  Rng rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    Vec m1 = rng.normal_vec(3), m2 = rng.normal_vec(3);
    Vec v1(3), v2(3);
    for (int i = 0; i < 3; ++i) {
      v1[i] = 0.2 + std::fabs(rng.normal());
      v2[i] = 0.2 + std::fabs(rng.normal());
    }
    DiagGaussian p(m1, v1), q(m2, v2);
    EXPECT_GE(kl_diag(p, q), 0.0);
    EXPECT_DOUBLE_EQ(kl_diag(p, p), 0.0);
  }
}

TEST(Reparam, ZeroNoiseReturnsMean) {
  DiagGaussian g({2.0, -3.0}, {4.0, 9.0});
  Vec out = reparam_sample(g, {0.0, 0.0});
  EXPECT_EQ(out[0], 2.0);
  EXPECT_EQ(out[1], -3.0);
}

TEST(Reparam, StandardIsIdentityOnNoise) {
  DiagGaussian g = DiagGaussian::standard(3);
  Vec eps = {0.1, -2.0, 0.7};
  Vec out = reparam_sample(g, eps);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(out[i], eps[i]);
}

TEST(Reparam, EmpiricalMomentsMatch) {
  DiagGaussian g({1.0, -2.0}, {0.25, 3.0});
  Rng rng(13);
  const int n = 100000;
  Vec d0(n), d1(n);
  for (int i = 0; i < n; ++i) {
    Vec x = reparam_sample(g, rng.normal_vec(2));
    d0[i] = x[0];
    d1[i] = x[1];
  }
  EXPECT_NEAR(oracle::mean(d0), g.mean[0], 3.0 * oracle::std_error_of_mean(d0));
  EXPECT_NEAR(oracle::mean(d1), g.mean[1], 3.0 * oracle::std_error_of_mean(d1));
  // SE of sample variance ~ var * sqrt(2/(n-1)).
  EXPECT_NEAR(oracle::variance(d0), g.var[0], 3.0 * g.var[0] * std::sqrt(2.0 / (n - 1)));
  EXPECT_NEAR(oracle::variance(d1), g.var[1], 3.0 * g.var[1] * std::sqrt(2.0 / (n - 1)));
}

TEST(ComposeLinear, IdentityCase) {
  DiagGaussian g({0.5}, {2.0});
  DiagGaussian out = compose_linear(1.0, g, 0.0);
  EXPECT_EQ(out.mean[0], 0.5);
  EXPECT_EQ(out.var[0], 2.0);
  EXPECT_THROW(compose_linear(1.0, g, -0.1), ContractViolation);
}

TEST(ComposeLinear, TwoStepVarianceMatchesPaperForm) {
  // Two forward steps from a point mass give variance 1 - a_t a_{t-1}.
  const double a1 = 0.9, a2 = 0.8;
  DiagGaussian point({1.5}, {0.0});
  DiagGaussian step1 = compose_linear(std::sqrt(a1), point, 1.0 - a1);
  DiagGaussian step2 = compose_linear(std::sqrt(a2), step1, 1.0 - a2);
  EXPECT_NEAR(step2.var[0], 1.0 - a1 * a2, 1e-15);
  EXPECT_NEAR(step2.mean[0], std::sqrt(a1 * a2) * 1.5, 1e-15);
}

// Folding t forward steps from a point mass reproduces the closed-form
// marginal (sqrt(abar_t) x0, (1-abar_t) I).
TEST(ComposeLinear, FoldedChainEqualsClosedFormMarginal) {
  Rng rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    const int T = 2 + static_cast<int>(rng.uniform_index(49));
    NoiseSchedule s = linear_beta_schedule(T, rng.uniform(1e-4, 0.02), rng.uniform(0.05, 0.5));
    const double x0 = rng.normal();
    DiagGaussian acc({x0}, {0.0});
    for (int t = 1; t <= T; ++t)
      acc = compose_linear(std::sqrt(s.a(t)), acc, 1.0 - s.a(t));
    EXPECT_LT(std::fabs(acc.mean[0] - std::sqrt(s.abar(T)) * x0), 1e-12);
    EXPECT_LT(std::fabs(acc.var[0] - s.abar_c(T)), 1e-12);
  }
}
