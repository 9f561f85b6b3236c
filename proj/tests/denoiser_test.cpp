#include <gtest/gtest.h>

#include <cmath>

#include "difflab/denoiser.hpp"
#include "support/test_support.hpp"

using namespace difflab;

namespace {
const Parameterization kAll[] = {Parameterization::kPredictX0, Parameterization::kPredictEps,
                                 Parameterization::kPredictScore};

NoiseSchedule test_schedule(int T = 10) { return linear_beta_schedule(T, 0.01, 0.35); }

DenoiserModel small_model(Parameterization p, int T, int cond_dim = 0, std::uint64_t seed = 5) {
  Rng rng(seed);
  return denoiser_init(2, {16, 16}, T, p, cond_dim, rng);
}
}  // namespace

TEST(Predict, ZeroNetworkGivesZeroOutput) {
  DenoiserModel m = small_model(Parameterization::kPredictEps, 10);
  for (MlpLayer& l : m.mlp.layers) {
    for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] = 0.0;
    for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] = 0.0;
  }
  Vec out = predict(m, {0.3, -0.8}, 4);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
}

TEST(Predict, AbsentConditionUsesNullToken) {
  DenoiserModel m = small_model(Parameterization::kPredictEps, 10, /*cond_dim=*/3);
  // The null token is the zero vector, so the absent-y features end in zeros.
  Vec f = denoiser_features(m, {0.1, 0.2}, 4, std::nullopt);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(f[f.size() - 3 + k], 0.0);
  // And the forward pass agrees with manually substituting the null token.
  Vec with_null = mlp_apply_vec(m.mlp, f);
  Vec via_predict = predict(m, {0.1, 0.2}, 4, std::nullopt);
  EXPECT_EQ(with_null[0], via_predict[0]);
  EXPECT_EQ(with_null[1], via_predict[1]);
}

TEST(Predict, ConditionContractErrors) {
  DenoiserModel uncond = small_model(Parameterization::kPredictEps, 10);
  EXPECT_THROW(predict(uncond, {0.0, 0.0}, 3, 1), ContractViolation);
  DenoiserModel cond = small_model(Parameterization::kPredictEps, 10, 2);
  EXPECT_THROW(predict(cond, {0.0, 0.0}, 3, 5), ContractViolation);
  EXPECT_NO_THROW(predict(cond, {0.0, 0.0}, 3, 1));
}

TEST(Predict, BitwiseDeterministic) {
  auto run = [] {
    DenoiserModel m = small_model(Parameterization::kPredictScore, 10, 0, 77);
    return predict(m, {0.5, -0.25}, 7);
  };
  Vec a = run(), b = run();
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[1], b[1]);
}

TEST(Convert, IdentityWhenSameParameterization) {
  NoiseSchedule s = test_schedule();
  Vec v = {1.5, -2.0};
  for (Parameterization p : kAll) {
    Vec out = convert(v, p, p, {0.3, 0.4}, 5, s);
    EXPECT_EQ(out[0], v[0]);
    EXPECT_EQ(out[1], v[1]);
  }
}

TEST(Convert, AllPairsRoundTrip) {
  NoiseSchedule s = test_schedule();
  Rng rng(3);
  for (Parameterization from : kAll)
    for (Parameterization to : kAll)
      for (int rep = 0; rep < 20; ++rep) {
        Vec v = rng.normal_vec(2);
        Vec x_t = rng.normal_vec(2);
        const int t = 1 + static_cast<int>(rng.uniform_index(s.T));
        Vec back = convert(convert(v, from, to, x_t, t, s), to, from, x_t, t, s);
        EXPECT_LT(oracle::max_abs_diff(back, v), 1e-10);
      }
}

TEST(Convert, EpsToX0RecoversTrueX0) {
  NoiseSchedule s = test_schedule();
  ForwardProcess fp(s, 2);
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    Vec x0 = rng.normal_vec(2);
    Vec eps = rng.normal_vec(2);
    const int t = 1 + static_cast<int>(rng.uniform_index(s.T));
    Vec x_t = noisify(fp, x0, t, eps);
    Vec rec = convert(eps, Parameterization::kPredictEps, Parameterization::kPredictX0, x_t, t, s);
    EXPECT_LT(oracle::max_abs_diff(rec, x0), 1e-10);
  }
}

TEST(Convert, ScoreNoiseFactorIsExact) {
  NoiseSchedule s = test_schedule();
  Rng rng(7);
  for (int t = 1; t <= s.T; ++t) {
    Vec eps = rng.normal_vec(2);
    Vec score = convert(eps, Parameterization::kPredictEps, Parameterization::kPredictScore,
                        {0.0, 0.0}, t, s);
    const double factor = -1.0 / std::sqrt(s.abar_c(t));
    EXPECT_DOUBLE_EQ(score[0], factor * eps[0]);
    EXPECT_DOUBLE_EQ(score[1], factor * eps[1]);
  }
}

TEST(PosteriorMean, ThreeFormsAgreeOnConvertedOutputs) {
  NoiseSchedule s = test_schedule();
  Rng rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    Vec x_t = rng.normal_vec(2);
    Vec raw_x0 = rng.normal_vec(2);
    const int t = 2 + static_cast<int>(rng.uniform_index(s.T - 1));
    Vec mean_x0 = posterior_mean_from(raw_x0, Parameterization::kPredictX0, x_t, t, s);
    Vec as_eps =
        convert(raw_x0, Parameterization::kPredictX0, Parameterization::kPredictEps, x_t, t, s);
    Vec mean_eps = posterior_mean_from(as_eps, Parameterization::kPredictEps, x_t, t, s);
    Vec as_score =
        convert(raw_x0, Parameterization::kPredictX0, Parameterization::kPredictScore, x_t, t, s);
    Vec mean_score = posterior_mean_from(as_score, Parameterization::kPredictScore, x_t, t, s);
    EXPECT_LT(oracle::max_abs_diff(mean_x0, mean_eps), 1e-10);
    EXPECT_LT(oracle::max_abs_diff(mean_x0, mean_score), 1e-10);
  }
}

TEST(PosteriorMean, ZeroNoisePredictionGivesRescaledXt) {
  // eps_hat = 0 collapses the mean to x_t / sqrt(alpha_t).
  NoiseSchedule s = test_schedule();
  const int t = 6;
  Vec x_t = {0.8, -1.2};
  Vec mu = posterior_mean_from({0.0, 0.0}, Parameterization::kPredictEps, x_t, t, s);
  const double inv = 1.0 / std::sqrt(s.a(t));
  EXPECT_NEAR(mu[0], inv * x_t[0], 1e-14);
  EXPECT_NEAR(mu[1], inv * x_t[1], 1e-14);
  EXPECT_THROW(posterior_mean_from({0.0, 0.0}, Parameterization::kPredictEps, x_t, 1, s),
               ContractViolation);
}

// With the oracle x0-predictor on single-Gaussian data, mu_theta equals the
// true posterior mean E[x_{t-1}|x_t] from conjugate-Gaussian algebra.
TEST(PosteriorMean, OraclePredictorMatchesTruePosteriorMean) {
  NoiseSchedule s = test_schedule();
  const Vec mu0 = {0.9, -0.6};
  const double v0 = 1.0;
  Gmm data;
  data.weights = {1.0};
  data.means = {mu0};
  data.vars = {{v0, v0}};
  ReverseModel oracle_model = oracle_reverse(data, s, Parameterization::kPredictX0);

  Rng rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    const int t = 2 + static_cast<int>(rng.uniform_index(s.T - 1));
    Vec x_t = rng.normal_vec(2);
    Vec mu_theta =
        posterior_mean_from(oracle_model.predict(x_t, t, std::nullopt),
                            Parameterization::kPredictX0, x_t, t, s);
    // E[x_{t-1}|x_t] for jointly Gaussian (x_{t-1}, x_t).
    for (int dd = 0; dd < 2; ++dd) {
      const double m_prev = std::sqrt(s.abar(t - 1)) * mu0[dd];
      const double m_cur = std::sqrt(s.abar(t)) * mu0[dd];
      const double v_prev = s.abar(t - 1) * v0 + s.abar_c(t - 1);
      const double v_cur = s.abar(t) * v0 + s.abar_c(t);
      const double cov = std::sqrt(s.a(t)) * v_prev;
      const double want = m_prev + cov / v_cur * (x_t[dd] - m_cur);
      EXPECT_NEAR(mu_theta[dd], want, 1e-8);
    }
  }
}

TEST(Loss, PerfectPredictionIsZero) {
  NoiseSchedule s = test_schedule();
  DenoiserModel m = small_model(Parameterization::kPredictEps, s.T);
  for (MlpLayer& l : m.mlp.layers) {
    for (std::size_t i = 0; i < l.w.size(); ++i) l.w[i] = 0.0;
    for (std::size_t i = 0; i < l.b.size(); ++i) l.b[i] = 0.0;
  }
  Tape tape;
  DenoiserOnTape h = denoiser_on_tape(tape, m);
  // eps = 0: the zero network predicts the target exactly.
  NodeId loss = per_timestep_loss(tape, h, {0.4, -0.2}, 5, {0.0, 0.0}, s, Weighting::kUnit);
  EXPECT_EQ(tape.val(loss).item(), 0.0);
}

// The exact-ELBO weights make the three parameterization losses identical
// for outputs related by convert.
TEST(Loss, ElboExactWeightsAgreeAcrossParameterizations) {
  NoiseSchedule s = test_schedule();
  ForwardProcess fp(s, 2);
  Rng rng(17);
  for (int rep = 0; rep < 200; ++rep) {
    Vec x0 = rng.normal_vec(2);
    Vec eps = rng.normal_vec(2);
    Vec raw_x0 = rng.normal_vec(2);  // an arbitrary x0-space prediction
    const int t = 2 + static_cast<int>(rng.uniform_index(s.T - 1));
    Vec x_t = noisify(fp, x0, t, eps);

    double losses[3];
    int idx = 0;
    for (Parameterization p : kAll) {
      Vec pred = convert(raw_x0, Parameterization::kPredictX0, p, x_t, t, s);
      Vec target = loss_target(p, x0, eps, s, t);
      double sq = 0.0;
      for (int k = 0; k < 2; ++k) sq += (pred[k] - target[k]) * (pred[k] - target[k]);
      losses[idx++] = elbo_exact_weight(p, s, t) * sq;
    }
    EXPECT_NEAR(losses[0], losses[1], 1e-10 * std::fmax(1.0, std::fabs(losses[0])));
    EXPECT_NEAR(losses[0], losses[2], 1e-10 * std::fmax(1.0, std::fabs(losses[0])));
  }
}

TEST(Loss, X0ElboWeightEqualsHalfSnrDelta) {
  NoiseSchedule s = test_schedule(40);
  for (int t = 2; t <= s.T; ++t) {
    const double a = elbo_exact_weight(Parameterization::kPredictX0, s, t);
    const double b = snr_weight(s, t);
    EXPECT_LT(std::fabs(a - b) / std::fmax(std::fabs(b), 1e-30), 1e-12);
  }
}

TEST(Loss, NodeValueMatchesHandComputation) {
  NoiseSchedule s = test_schedule();
  ForwardProcess fp(s, 2);
  DenoiserModel m = small_model(Parameterization::kPredictEps, s.T);
  Rng rng(19);
  Vec x0 = rng.normal_vec(2);
  Vec eps = rng.normal_vec(2);
  const int t = 4;
  Tape tape;
  DenoiserOnTape h = denoiser_on_tape(tape, m);
  NodeId loss = per_timestep_loss(tape, h, x0, t, eps, s, Weighting::kSnrDelta);

  Vec x_t = noisify(fp, x0, t, eps);
  Vec pred = predict(m, x_t, t);
  double sq = 0.0;
  for (int k = 0; k < 2; ++k) sq += (pred[k] - eps[k]) * (pred[k] - eps[k]);
  EXPECT_NEAR(tape.val(loss).item(), snr_weight(s, t) * sq, 1e-12);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  NoiseSchedule s = test_schedule();
  for (Parameterization p : kAll) {
    DenoiserModel m = small_model(p, s.T, 0, 23);
    Rng rng(29);
    Vec x0 = rng.normal_vec(2);
    Vec eps = rng.normal_vec(2);
    const int t = 5;

    Tape tape;
    DenoiserOnTape h = denoiser_on_tape(tape, m);
    NodeId loss = per_timestep_loss(tape, h, x0, t, eps, s, Weighting::kElboExact);
    auto grads = collect_grads(h.mlp, tape.grad(loss));

    auto loss_at = [&](const DenoiserModel& q) {
      Tape t2;
      DenoiserOnTape h2 = denoiser_on_tape(t2, q);
      return t2.val(per_timestep_loss(t2, h2, x0, t, eps, s, Weighting::kElboExact)).item();
    };
    const double hfd = 1e-5;
    std::size_t flat = 0;
    for (std::size_t li = 0; li < m.mlp.layers.size(); ++li) {
      for (int which = 0; which < 2; ++which) {
        Tensor& tt = which == 0 ? m.mlp.layers[li].w : m.mlp.layers[li].b;
        for (std::size_t k = 0; k < tt.size(); k += 7) {  // sample every 7th weight
          DenoiserModel q = m;
          Tensor& qt = which == 0 ? q.mlp.layers[li].w : q.mlp.layers[li].b;
          qt[k] += hfd;
          const double up = loss_at(q);
          qt[k] -= 2 * hfd;
          const double dn = loss_at(q);
          const double fd = (up - dn) / (2 * hfd);
          if (std::fabs(fd) < 1e-12 && std::fabs(grads[flat][k]) < 1e-12) continue;
          EXPECT_LT(oracle::rel_err(grads[flat][k], fd, 1e-6), 1e-3);
        }
        ++flat;
      }
    }
  }
}

TEST(Elbo, DenoisingFormAtT1ReducesToVaeShape) {
  NoiseSchedule s = linear_beta_schedule(1, 0.3, 0.3);
  DenoiserModel m = small_model(Parameterization::kPredictEps, 1);
  Rng rng(31);
  ElboReport rep = elbo_denoising_form(m, {0.5, -0.5}, 8, rng, s);
  EXPECT_EQ(rep.per_t.size(), 0u);
  EXPECT_EQ(rep.matching_kl, 0.0);
  EXPECT_DOUBLE_EQ(rep.elbo, rep.reconstruction - rep.prior_kl);
}

TEST(Elbo, PriorTermTinyOnDefaultSchedule) {
  NoiseSchedule s = default_schedule();
  DenoiserModel m = small_model(Parameterization::kPredictEps, s.T);
  Rng rng(37);
  ElboReport rep = elbo_denoising_form(m, {1.5, -2.0}, 1, rng, s);
  EXPECT_LT(rep.prior_kl, 1e-3);
  EXPECT_TRUE(std::isfinite(rep.elbo));
  for (double kl : rep.per_t) EXPECT_GE(kl, -1e-10);
}

TEST(Elbo, ConsistencyFormIdenticalAtT1) {
  NoiseSchedule s = linear_beta_schedule(1, 0.3, 0.3);
  DenoiserModel m = small_model(Parameterization::kPredictEps, 1, 0, 41);
  Rng rng_a(99);
  Rng rng_b(99);
  ElboReport a = elbo_denoising_form(m, {0.2, 0.7}, 16, rng_a, s);
  ElboReport b = elbo_consistency_form(m, {0.2, 0.7}, 16, rng_b, s);
  EXPECT_EQ(a.elbo, b.elbo);
  EXPECT_EQ(a.reconstruction, b.reconstruction);
  EXPECT_EQ(a.prior_kl, b.prior_kl);
}

// Both estimators bound the same quantity: over repeated estimates their
// means agree within combined Monte-Carlo error.
TEST(Elbo, EstimatorExpectationsAgree) {
  NoiseSchedule s = test_schedule(10);
  DenoiserModel m = small_model(Parameterization::kPredictEps, s.T, 0, 43);
  const Vec x0 = {0.6, -0.3};
  const int reps = 200;
  oracle::Vec den(reps), con(reps);
  Rng rng(47);
  for (int i = 0; i < reps; ++i) {
    Rng ra = rng.split(2 * i);
    Rng rb = rng.split(2 * i + 1);
    den[i] = elbo_denoising_form(m, x0, 1, ra, s).elbo;
    con[i] = elbo_consistency_form(m, x0, 1, rb, s).elbo;
  }
  const double se = std::sqrt(oracle::variance(den) / reps + oracle::variance(con) / reps);
  EXPECT_NEAR(oracle::mean(den), oracle::mean(con), 3.0 * se);
}

TEST(Elbo, DenoisingFormHasLowerVariance) {
  NoiseSchedule s = linear_beta_schedule(20, 1e-3, 0.3);
  DenoiserModel m = small_model(Parameterization::kPredictEps, s.T, 0, 53);
  const Vec x0 = {0.6, -0.3};
  const int reps = 120;
  oracle::Vec den(reps), con(reps);
  Rng rng(59);
  for (int i = 0; i < reps; ++i) {
    Rng ra = rng.split(2 * i);
    Rng rb = rng.split(2 * i + 1);
    den[i] = elbo_denoising_form(m, x0, 1, ra, s).elbo;
    con[i] = elbo_consistency_form(m, x0, 1, rb, s).elbo;
  }
  EXPECT_LT(oracle::variance(den), oracle::variance(con));
}
