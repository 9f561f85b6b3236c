#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "difflab/forward.hpp"
#include "difflab/gmm.hpp"
#include "difflab/mlp.hpp"
#include "difflab/schedule.hpp"

namespace difflab {

enum class Parameterization { kPredictX0, kPredictEps, kPredictScore };

inline std::string to_string(Parameterization p) {
  switch (p) {
    case Parameterization::kPredictX0: return "predict-x0";
    case Parameterization::kPredictEps: return "predict-eps";
    case Parameterization::kPredictScore: return "predict-score";
  }
  return "?";
}

inline Parameterization parameterization_from_string(const std::string& s) {
  if (s == "predict-x0") return Parameterization::kPredictX0;
  if (s == "predict-eps") return Parameterization::kPredictEps;
  if (s == "predict-score") return Parameterization::kPredictScore;
  throw ConfigError("unknown parameterization: " + s);
}

// The learned reverse model: one MLP over [x_t | time features | condition],
// whose raw output is read through the chosen parameterization.
struct DenoiserModel {
  MlpParams mlp;
  Parameterization parameterization = Parameterization::kPredictEps;
  int data_dim = 2;
  int T = 100;           // schedule length the time embedding is scaled by
  int time_freqs = 4;    // sinusoidal frequency pairs on top of the t/T scalar
  int cond_dim = 0;      // width of the one-hot condition; 0 = unconditional
  Vec null_token;        // substituted when conditioning is absent / dropped

  int feature_dim() const { return data_dim + 1 + 2 * time_freqs + cond_dim; }
};

inline DenoiserModel denoiser_init(int data_dim, const std::vector<int>& hidden, int T,
                                   Parameterization param, int cond_dim, Rng& rng) {
  DenoiserModel m;
  m.data_dim = data_dim;
  m.T = T;
  m.parameterization = param;
  m.cond_dim = cond_dim;
  m.null_token.assign(cond_dim, 0.0);
  std::vector<int> dims;
  dims.push_back(m.feature_dim());
  for (int h : hidden) dims.push_back(h);
  dims.push_back(data_dim);
  m.mlp = mlp_init(dims, Activation::kTanh, rng);
  return m;
}

inline Vec time_features(int t, int T, int freqs) {
  const double u = static_cast<double>(t) / static_cast<double>(T);
  Vec f;
  f.reserve(1 + 2 * freqs);
  f.push_back(u);
  double w = M_PI;
  for (int k = 0; k < freqs; ++k) {
    f.push_back(std::sin(w * u));
    f.push_back(std::cos(w * u));
    w *= 2.0;
  }
  return f;
}

inline Vec condition_token(const DenoiserModel& m, const std::optional<int>& y) {
  if (!y.has_value()) return m.null_token;
  require(m.cond_dim > 0, "condition given to an unconditional model");
  require(*y >= 0 && *y < m.cond_dim, "condition id out of range for cond_dim");
  Vec e(m.cond_dim, 0.0);
  e[*y] = 1.0;
  return e;
}

inline Vec denoiser_features(const DenoiserModel& m, const Vec& x_t, int t,
                             const std::optional<int>& y) {
  require(static_cast<int>(x_t.size()) == m.data_dim, "denoiser: data dimension mismatch");
  Vec f = x_t;
  Vec tf = time_features(t, m.T, m.time_freqs);
  f.insert(f.end(), tf.begin(), tf.end());
  Vec c = condition_token(m, y);
  require(static_cast<int>(c.size()) == m.cond_dim, "denoiser: condition width mismatch");
  f.insert(f.end(), c.begin(), c.end());
  return f;
}

// Raw network output under the model's parameterization.
inline Vec predict(const DenoiserModel& m, const Vec& x_t, int t,
                   const std::optional<int>& y = std::nullopt) {
  return mlp_apply_vec(m.mlp, denoiser_features(m, x_t, t, y));
}

// ---------------------------------------------------------------------------
// Conversions between the three parameterizations. Each is affine in the
// raw output: out' = on_xt * x_t + on_pred * out, with coefficients from
// the signal fraction at t. One table serves the pure and tape paths.

struct ConvCoef {
  double on_xt = 0.0;
  double on_pred = 1.0;
};

inline ConvCoef convert_coef(Parameterization from, Parameterization to, double abar,
                             double abar_c) {
  using P = Parameterization;
  const double s_ab = std::sqrt(abar);
  const double s_abc = std::sqrt(abar_c);
  if (from == to) return {0.0, 1.0};
  if (from == P::kPredictEps && to == P::kPredictX0) return {1.0 / s_ab, -s_abc / s_ab};
  if (from == P::kPredictScore && to == P::kPredictX0) return {1.0 / s_ab, abar_c / s_ab};
  if (from == P::kPredictX0 && to == P::kPredictEps) return {1.0 / s_abc, -s_ab / s_abc};
  if (from == P::kPredictScore && to == P::kPredictEps) return {0.0, -s_abc};
  if (from == P::kPredictEps && to == P::kPredictScore) return {0.0, -1.0 / s_abc};
  if (from == P::kPredictX0 && to == P::kPredictScore) return {-1.0 / abar_c, s_ab / abar_c};
  throw ContractViolation("convert_coef: unhandled pair");
}

inline Vec convert(const Vec& output, Parameterization from, Parameterization to, const Vec& x_t,
                   int t, const NoiseSchedule& s) {
  require(output.size() == x_t.size(), "convert: dimension mismatch");
  const ConvCoef c = convert_coef(from, to, s.abar(t), s.abar_c(t));
  Vec out(output.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.on_xt * x_t[i] + c.on_pred * output[i];
  return out;
}

// ---------------------------------------------------------------------------
// Reverse-transition mean mu_theta(x_t, t), one formula per parameterization.

struct MeanCoef {
  double on_xt = 0.0;
  double on_pred = 0.0;
};

inline MeanCoef posterior_mean_coef(Parameterization p, const NoiseSchedule& s, int t) {
  require(t >= 2 && t <= s.T, "posterior_mean: t out of range [2,T]");
  const double a = s.a(t);
  const double sa = std::sqrt(a);
  using P = Parameterization;
  switch (p) {
    case P::kPredictX0:
      return {sa * s.abar_c(t - 1) / s.abar_c(t),
              std::sqrt(s.abar(t - 1)) * (1.0 - a) / s.abar_c(t)};
    case P::kPredictEps:
      return {1.0 / sa, -(1.0 - a) / (std::sqrt(s.abar_c(t)) * sa)};
    case P::kPredictScore:
      return {1.0 / sa, (1.0 - a) / sa};
  }
  throw ContractViolation("posterior_mean_coef: unknown parameterization");
}

inline Vec posterior_mean_from(const Vec& raw_output, Parameterization p, const Vec& x_t, int t,
                               const NoiseSchedule& s) {
  const MeanCoef c = posterior_mean_coef(p, s, t);
  Vec out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = c.on_xt * x_t[i] + c.on_pred * raw_output[i];
  return out;
}

inline Vec posterior_mean(const DenoiserModel& m, const Vec& x_t, int t, const NoiseSchedule& s,
                          const std::optional<int>& y = std::nullopt) {
  return posterior_mean_from(predict(m, x_t, t, y), m.parameterization, x_t, t, s);
}

// ---------------------------------------------------------------------------
// Per-timestep losses.

enum class Weighting { kElboExact, kSnrDelta, kUnit };

inline Weighting weighting_from_string(const std::string& s) {
  if (s == "elbo-exact") return Weighting::kElboExact;
  if (s == "snr-delta") return Weighting::kSnrDelta;
  if (s == "unit") return Weighting::kUnit;
  throw ConfigError("unknown weighting: " + s);
}

inline std::string to_string(Weighting w) {
  switch (w) {
    case Weighting::kElboExact: return "elbo-exact";
    case Weighting::kSnrDelta: return "snr-delta";
    case Weighting::kUnit: return "unit";
  }
  return "?";
}

// The exact ELBO coefficient in front of the squared prediction error, per
// parameterization; all three reduce to the same KL.
inline double elbo_exact_weight(Parameterization p, const NoiseSchedule& s, int t) {
  const double inv2sq = 1.0 / (2.0 * sigma_q_sq(s, t));
  const double a = s.a(t);
  const double one_m_a = 1.0 - a;
  using P = Parameterization;
  switch (p) {
    case P::kPredictX0:
      return inv2sq * s.abar(t - 1) * one_m_a * one_m_a / (s.abar_c(t) * s.abar_c(t));
    case P::kPredictEps:
      return inv2sq * one_m_a * one_m_a / (s.abar_c(t) * a);
    case P::kPredictScore:
      return inv2sq * one_m_a * one_m_a / a;
  }
  throw ContractViolation("elbo_exact_weight: unknown parameterization");
}

inline double loss_weight(Weighting w, Parameterization p, const NoiseSchedule& s, int t) {
  switch (w) {
    case Weighting::kUnit: return 1.0;
    case Weighting::kSnrDelta: return snr_weight(s, t);
    case Weighting::kElboExact: return elbo_exact_weight(p, s, t);
  }
  throw ContractViolation("loss_weight: unknown weighting");
}

// Regression target in the model's own output space, given the noise draw.
inline Vec loss_target(Parameterization p, const Vec& x0, const Vec& eps, const NoiseSchedule& s,
                       int t) {
  using P = Parameterization;
  switch (p) {
    case P::kPredictX0: return x0;
    case P::kPredictEps: return eps;
    case P::kPredictScore: {
      const double c = -1.0 / std::sqrt(s.abar_c(t));
      Vec out(eps.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * eps[i];
      return out;
    }
  }
  throw ContractViolation("loss_target: unknown parameterization");
}

struct DenoiserOnTape {
  MlpOnTape mlp;
  const DenoiserModel* model = nullptr;
};

inline DenoiserOnTape denoiser_on_tape(Tape& tape, const DenoiserModel& m) {
  return {mlp_on_tape(tape, m.mlp), &m};
}

// Whether the squared error is taken in the model's own output space or
// mapped to noise space at the loss boundary first.
enum class LossSpace { kNative, kEps };

// Batched denoising loss: one tape forward over the whole minibatch. Each
// row carries its own timestep, noise draw and (optional) condition. The
// model input x_t is built numerically from the schedule; the returned node
// is mean_i w(t_i) * ||pred_i - target_i||^2.
inline NodeId diffusion_batch_loss(Tape& tape, const DenoiserOnTape& h,
                                   const std::vector<Vec>& x0s, const std::vector<int>& ts,
                                   const std::vector<Vec>& epss, const NoiseSchedule& s,
                                   Weighting weighting,
                                   const std::vector<std::optional<int>>& ys,
                                   LossSpace space = LossSpace::kNative) {
  const DenoiserModel& m = *h.model;
  const int B = static_cast<int>(x0s.size());
  require(B >= 1, "diffusion_batch_loss: empty batch");
  require(ts.size() == x0s.size() && epss.size() == x0s.size() && ys.size() == x0s.size(),
          "diffusion_batch_loss: ragged batch");
  require(s.T == m.T, "diffusion_batch_loss: schedule/model T mismatch");
  const int d = m.data_dim;

  ForwardProcess fp(s, d);
  Tensor feats({B, m.feature_dim()});
  Tensor targets({B, d});
  Tensor weights({B, d});
  Tensor conv_xt({B, d});
  Tensor conv_pred({B, d});
  bool need_conv = false;
  for (int i = 0; i < B; ++i) {
    const int t = ts[i];
    require(t >= 2 && t <= s.T, "diffusion_batch_loss: t out of range [2,T]");
    Vec x_t = noisify(fp, x0s[i], t, epss[i]);
    Vec row = denoiser_features(m, x_t, t, ys[i]);
    for (std::size_t k = 0; k < row.size(); ++k) feats.at(i, static_cast<int>(k)) = row[k];

    Parameterization target_space = m.parameterization;
    ConvCoef cc{0.0, 1.0};
    if (space == LossSpace::kEps) {
      target_space = Parameterization::kPredictEps;
      cc = convert_coef(m.parameterization, Parameterization::kPredictEps, s.abar(t), s.abar_c(t));
      if (m.parameterization != Parameterization::kPredictEps) need_conv = true;
    }
    Vec target = loss_target(target_space, x0s[i], epss[i], s, t);
    const double w = loss_weight(weighting, target_space, s, t);
    for (int k = 0; k < d; ++k) {
      targets.at(i, k) = target[k];
      weights.at(i, k) = w;
      conv_xt.at(i, k) = cc.on_xt * x_t[k];
      conv_pred.at(i, k) = cc.on_pred;
    }
  }

  NodeId pred = mlp_apply(tape, h.mlp, tape.constant(feats));
  if (need_conv)
    pred = tape.add(tape.mul(pred, tape.constant(conv_pred)), tape.constant(conv_xt));
  NodeId diff = tape.sub(pred, tape.constant(targets));
  NodeId weighted = tape.mul(tape.mul(diff, diff), tape.constant(weights));
  return tape.scale(tape.sum(weighted), 1.0 / B);
}

// Spec-level single-example loss node.
inline NodeId per_timestep_loss(Tape& tape, const DenoiserOnTape& h, const Vec& x0, int t,
                                const Vec& eps, const NoiseSchedule& s, Weighting weighting,
                                const std::optional<int>& y = std::nullopt) {
  return diffusion_batch_loss(tape, h, {x0}, {t}, {eps}, s, weighting, {y});
}

// Negative decoder log-density for t = 1 reconstruction batches:
// p(x_0|x_1) = N(x_0; to_x0(pred(x_1, 1)), (1 - alpha_1) I).
inline NodeId reconstruction_batch_loss(Tape& tape, const DenoiserOnTape& h,
                                        const std::vector<Vec>& x0s,
                                        const std::vector<Vec>& epss, const NoiseSchedule& s,
                                        const std::vector<std::optional<int>>& ys) {
  const DenoiserModel& m = *h.model;
  const int B = static_cast<int>(x0s.size());
  require(B >= 1, "reconstruction_batch_loss: empty batch");
  const int d = m.data_dim;
  ForwardProcess fp(s, d);
  const double dec_var = 1.0 - s.a(1);

  Tensor feats({B, m.feature_dim()});
  Tensor x0_mat({B, d});
  Tensor conv_xt({B, d});
  const ConvCoef cc =
      convert_coef(m.parameterization, Parameterization::kPredictX0, s.abar(1), s.abar_c(1));
  for (int i = 0; i < B; ++i) {
    Vec x1 = noisify(fp, x0s[i], 1, epss[i]);
    Vec row = denoiser_features(m, x1, 1, ys[i]);
    for (std::size_t k = 0; k < row.size(); ++k) feats.at(i, static_cast<int>(k)) = row[k];
    for (int k = 0; k < d; ++k) {
      x0_mat.at(i, k) = x0s[i][k];
      conv_xt.at(i, k) = cc.on_xt * x1[k];
    }
  }
  NodeId pred = mlp_apply(tape, h.mlp, tape.constant(feats));
  NodeId x0_hat = tape.add(tape.scale(pred, cc.on_pred), tape.constant(conv_xt));
  NodeId diff = tape.sub(x0_hat, tape.constant(x0_mat));
  // -log N per example, averaged; the constant keeps the loss interpretable.
  const double log_norm = 0.5 * d * std::log(2.0 * M_PI * dec_var);
  NodeId quad = tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / (2.0 * dec_var * B));
  return tape.shift(quad, log_norm);
}

// ---------------------------------------------------------------------------
// A reverse model the samplers and ELBO estimators can drive: either a
// trained DenoiserModel or a closed-form oracle built from the data mixture.

struct ReverseModel {
  Parameterization parameterization = Parameterization::kPredictEps;
  std::function<Vec(const Vec& x_t, int t, const std::optional<int>& y)> predict;
};

inline ReverseModel as_reverse(const DenoiserModel& m) {
  ReverseModel r;
  r.parameterization = m.parameterization;
  r.predict = [&m](const Vec& x_t, int t, const std::optional<int>& y) {
    return predict(m, x_t, t, y);
  };
  return r;
}

// Exact reverse model for GMM data: Tweedie posterior mean converted into
// the requested parameterization. Conditioning restricts to the class
// sub-mixture; a missing condition falls back to the full mixture.
inline ReverseModel oracle_reverse(const Gmm& data, const NoiseSchedule& s, Parameterization p) {
  ReverseModel r;
  r.parameterization = p;
  r.predict = [data, s, p](const Vec& x_t, int t, const std::optional<int>&) {
    const double ab = s.abar(t);
    Gmm pert = perturb_vp(data, ab);
    Vec x0_hat = tweedie_mean(pert, ab, x_t);
    const double inv = 1.0 / std::sqrt(ab);
    for (double& v : x0_hat) v *= inv;
    return convert(x0_hat, Parameterization::kPredictX0, p, x_t, t, s);
  };
  return r;
}

inline ReverseModel oracle_conditional_reverse(const LabeledGmm& data, const NoiseSchedule& s,
                                               Parameterization p) {
  ReverseModel r;
  r.parameterization = p;
  r.predict = [data, s, p](const Vec& x_t, int t, const std::optional<int>& y) {
    const double ab = s.abar(t);
    const Gmm base = y.has_value() ? class_submixture(data, *y) : data.gmm;
    Gmm pert = perturb_vp(base, ab);
    Vec x0_hat = tweedie_mean(pert, ab, x_t);
    const double inv = 1.0 / std::sqrt(ab);
    for (double& v : x0_hat) v *= inv;
    return convert(x0_hat, Parameterization::kPredictX0, p, x_t, t, s);
  };
  return r;
}

// ---------------------------------------------------------------------------
// Full-ELBO estimators.

struct ElboReport {
  double elbo = 0.0;
  double reconstruction = 0.0;
  double prior_kl = 0.0;
  double matching_kl = 0.0;           // denoising or consistency sum
  std::vector<double> per_t;          // per-timestep averages (empty for consistency form)
};

inline Vec to_x0(const ReverseModel& r, const Vec& x_t, int t, const NoiseSchedule& s,
                 const std::optional<int>& y = std::nullopt) {
  return convert(r.predict(x_t, t, y), r.parameterization, Parameterization::kPredictX0, x_t, t,
                 s);
}

// Lower-variance decomposition: reconstruction + closed-form prior KL +
// per-timestep KLs between the ground-truth posterior and the model
// transition, each averaged over n_mc draws of x_t ~ q(x_t|x_0).
inline ElboReport elbo_denoising_form(const ReverseModel& r, const Vec& x0, int n_mc, Rng& rng,
                                      const NoiseSchedule& s) {
  require(n_mc >= 1, "elbo_denoising_form: n_mc must be >= 1");
  const int d = static_cast<int>(x0.size());
  ForwardProcess fp(s, d);
  ElboReport rep;

  const double dec_var = 1.0 - s.a(1);
  for (int i = 0; i < n_mc; ++i) {
    Vec x1 = noisify(fp, x0, 1, rng.normal_vec(d));
    Vec mean = to_x0(r, x1, 1, s);
    rep.reconstruction += log_pdf(DiagGaussian::isotropic(std::move(mean), dec_var), x0);
  }
  rep.reconstruction /= n_mc;

  rep.prior_kl = kl_diag(q_marginal(fp, x0, s.T), DiagGaussian::standard(d));

  rep.per_t.assign(std::max(0, s.T - 1), 0.0);
  for (int t = 2; t <= s.T; ++t) {
    double acc = 0.0;
    const double sq = sigma_q_sq(s, t);
    for (int i = 0; i < n_mc; ++i) {
      Vec x_t = noisify(fp, x0, t, rng.normal_vec(d));
      Vec mu_theta = posterior_mean_from(r.predict(x_t, t, std::nullopt), r.parameterization,
                                         x_t, t, s);
      acc += kl_diag(q_posterior(fp, x_t, x0, t),
                     DiagGaussian::isotropic(std::move(mu_theta), sq));
    }
    rep.per_t[t - 2] = acc / n_mc;
    rep.matching_kl += rep.per_t[t - 2];
  }
  rep.elbo = rep.reconstruction - rep.prior_kl - rep.matching_kl;
  return rep;
}

// Consistency-form decomposition: the interior terms compare the forward
// step into x_t with the reverse transition out of x_{t+1}, so every term
// rides on a jointly drawn (x_{t-1}, x_t, x_{t+1}) window of a simulated
// chain and is Monte-Carlo estimated as the log ratio
// log q(x_t|x_{t-1}) - log p_theta(x_t|x_{t+1}). Two random variables per
// term where the denoising form needs one: deliberately the higher-variance
// estimator of the same bound.
inline ElboReport elbo_consistency_form(const ReverseModel& r, const Vec& x0, int n_mc, Rng& rng,
                                        const NoiseSchedule& s) {
  require(n_mc >= 1, "elbo_consistency_form: n_mc must be >= 1");
  const int d = static_cast<int>(x0.size());
  ForwardProcess fp(s, d);
  ElboReport rep;

  const double dec_var = 1.0 - s.a(1);
  for (int i = 0; i < n_mc; ++i) {
    // One full chain x_1..x_T per repetition.
    std::vector<Vec> chain(s.T + 1);
    chain[0] = x0;
    for (int t = 1; t <= s.T; ++t) chain[t] = q_step(fp, chain[t - 1], t, rng.normal_vec(d));

    Vec mean = to_x0(r, chain[1], 1, s);
    rep.reconstruction += log_pdf(DiagGaussian::isotropic(std::move(mean), dec_var), x0);

    // The terminal group has nothing downstream of x_T, so the KL given
    // x_{T-1} is exact.
    rep.prior_kl += kl_diag(q_step_dist(fp, chain[s.T - 1], s.T), DiagGaussian::standard(d));

    for (int t = 1; t + 1 <= s.T; ++t) {
      Vec mu_theta = posterior_mean_from(r.predict(chain[t + 1], t + 1, std::nullopt),
                                         r.parameterization, chain[t + 1], t + 1, s);
      rep.matching_kl +=
          log_pdf(q_step_dist(fp, chain[t - 1], t), chain[t]) -
          log_pdf(DiagGaussian::isotropic(std::move(mu_theta), sigma_q_sq(s, t + 1)), chain[t]);
    }
  }
  rep.reconstruction /= n_mc;
  rep.prior_kl /= n_mc;
  rep.matching_kl /= n_mc;
  rep.elbo = rep.reconstruction - rep.prior_kl - rep.matching_kl;
  return rep;
}

inline ElboReport elbo_denoising_form(const DenoiserModel& m, const Vec& x0, int n_mc, Rng& rng,
                                      const NoiseSchedule& s) {
  ReverseModel r = as_reverse(m);
  return elbo_denoising_form(r, x0, n_mc, rng, s);
}

inline ElboReport elbo_consistency_form(const DenoiserModel& m, const Vec& x0, int n_mc, Rng& rng,
                                        const NoiseSchedule& s) {
  ReverseModel r = as_reverse(m);
  return elbo_consistency_form(r, x0, n_mc, rng, s);
}

}  // namespace difflab
