#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "difflab/errors.hpp"
#include "difflab/mlp.hpp"

namespace difflab {

enum class ScheduleKind { kFixedLinear, kFixedCosine, kLearned };

// Discrete noise schedule: alpha_t, the running product alpha_bar_t and its
// complement, for t = 1..T. For the fixed kinds alpha_bar is the exact
// running product of alpha; for snapshots of a learned net alpha_bar comes
// from the sigmoid pair and alpha is the ratio of consecutive alpha_bars.
// The complement is always carried explicitly so nothing downstream ever
// computes 1 - alpha_bar and loses precision near the endpoints.
struct NoiseSchedule {
  int T = 0;
  ScheduleKind kind = ScheduleKind::kFixedLinear;
  std::vector<double> alpha;        // alpha[t-1] = alpha_t
  std::vector<double> alpha_bar;    // alpha_bar[t-1]
  std::vector<double> alpha_bar_c;  // 1 - alpha_bar[t-1]

  double a(int t) const {
    require(t >= 1 && t <= T, "NoiseSchedule: t out of range");
    return alpha[t - 1];
  }
  double abar(int t) const {
    require(t >= 1 && t <= T, "NoiseSchedule: t out of range");
    return alpha_bar[t - 1];
  }
  double abar_c(int t) const {
    require(t >= 1 && t <= T, "NoiseSchedule: t out of range");
    return alpha_bar_c[t - 1];
  }

  void validate() const {
    require(T >= 1 && static_cast<int>(alpha.size()) == T &&
                static_cast<int>(alpha_bar.size()) == T &&
                static_cast<int>(alpha_bar_c.size()) == T,
            "NoiseSchedule: inconsistent lengths");
    for (int t = 1; t <= T; ++t) {
      require(a(t) > 0.0 && a(t) < 1.0, "NoiseSchedule: alpha_t outside (0,1)");
      require(abar(t) > 0.0 && abar(t) < 1.0, "NoiseSchedule: alpha_bar_t outside (0,1)");
      if (t >= 2) require(abar(t) < abar(t - 1), "NoiseSchedule: alpha_bar not strictly decreasing");
    }
  }
};

inline NoiseSchedule linear_beta_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw ConfigError("linear_beta_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("linear_beta_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.kind = ScheduleKind::kFixedLinear;
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    const double alpha = 1.0 - beta;
    prod *= alpha;
    s.alpha.push_back(alpha);
    s.alpha_bar.push_back(prod);
    s.alpha_bar_c.push_back(1.0 - prod);
  }
  s.validate();
  return s;
}

// Squared-cosine alpha_bar profile with the usual 0.999 cap on beta. The
// cap breaks the pure ratio form, so alpha_bar is rebuilt as the running
// product of the capped alphas.
inline NoiseSchedule cosine_schedule(int T, double offset = 0.008) {
  if (T < 1) throw ConfigError("cosine_schedule: T must be >= 1");
  NoiseSchedule s;
  s.T = T;
  s.kind = ScheduleKind::kFixedCosine;
  auto f = [&](double t) {
    const double v = std::cos((t / T + offset) / (1.0 + offset) * M_PI / 2.0);
    return v * v;
  };
  double prev = 1.0;
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double target = f(static_cast<double>(t)) / f(0.0);
    double alpha = target / prev;
    alpha = std::fmin(std::fmax(alpha, 0.001), 0.999999);
    prev = target;
    prod *= alpha;
    s.alpha.push_back(alpha);
    s.alpha_bar.push_back(prod);
    s.alpha_bar_c.push_back(1.0 - prod);
  }
  s.validate();
  return s;
}

// Project default: integrated noise matches the classic 1000-step linear
// schedule, compressed to T = 100, so q(x_T|x_0) is indistinguishable from
// the standard normal prior on desk-scale data.
inline NoiseSchedule default_schedule() { return linear_beta_schedule(100, 1e-4, 0.2); }

// Posterior variance of q(x_{t-1}|x_t, x_0).
inline double sigma_q_sq(const NoiseSchedule& s, int t) {
  require(t >= 2 && t <= s.T, "sigma_q_sq: t out of range [2,T]");
  return (1.0 - s.a(t)) * s.abar_c(t - 1) / s.abar_c(t);
}

inline double snr(const NoiseSchedule& s, int t) { return s.abar(t) / s.abar_c(t); }

// Per-timestep ELBO weight, half the SNR decrement.
inline double snr_weight(const NoiseSchedule& s, int t) {
  require(t >= 2 && t <= s.T, "snr_weight: t out of range [2,T]");
  return 0.5 * (snr(s, t - 1) - snr(s, t));
}

// ---------------------------------------------------------------------------
// Learnable monotone log-SNR network: omega(t/T) is a 2-layer MLP whose
// weight matrices pass through softplus, so omega is strictly increasing in
// t and SNR(t) = exp(-omega(t)) strictly decreasing.

struct LearnedSnrNet {
  MlpParams raw;  // (1 -> hidden) tanh, (hidden -> 1) linear; softplus applied to weights at use
};

inline LearnedSnrNet learned_snr_net_init(int hidden, Rng& rng, double omega_span = 20.0) {
  require(hidden >= 1, "learned_snr_net_init: hidden must be >= 1");
  LearnedSnrNet net;
  MlpLayer l1;
  l1.w = Tensor({1, hidden});
  l1.b = Tensor({hidden});
  l1.act = Activation::kTanh;
  MlpLayer l2;
  l2.w = Tensor({hidden, 1});
  l2.b = Tensor({1});
  l2.act = Activation::kIdentity;
  // Stagger the hidden units across u in [0,1] and size the output weights
  // so the initial omega roughly spans [-span/2, span/2].
  const double gain = 4.0;
  for (int j = 0; j < hidden; ++j) {
    l1.w[j] = gain + 0.1 * rng.normal();          // raw; softplus keeps it near gain
    const double center = (j + 0.5) / hidden;
    l1.b[j] = -gain * center + 0.05 * rng.normal();
    l2.w[j] = std::log(std::expm1(omega_span / (2.0 * hidden))) + 0.05 * rng.normal();
  }
  l2.b[0] = 0.0;
  net.raw.layers = {std::move(l1), std::move(l2)};
  return net;
}

struct SnrNetOnTape {
  NodeId w1_raw, b1, w2_raw, b2;
};

inline SnrNetOnTape snr_net_on_tape(Tape& tape, const LearnedSnrNet& net) {
  SnrNetOnTape h;
  h.w1_raw = tape.leaf(net.raw.layers[0].w, true);
  h.b1 = tape.leaf(net.raw.layers[0].b, true);
  h.w2_raw = tape.leaf(net.raw.layers[1].w, true);
  h.b2 = tape.leaf(net.raw.layers[1].b, true);
  return h;
}

inline std::vector<NodeId> snr_net_param_ids(const SnrNetOnTape& h) {
  return {h.w1_raw, h.b1, h.w2_raw, h.b2};
}

// u is a (K,1) column of t/T values; returns the (K,1) column of omega.
inline NodeId snr_omega_on_tape(Tape& tape, const SnrNetOnTape& h, NodeId u) {
  NodeId hdn = tape.tanh(tape.add(tape.matmul(u, tape.softplus(h.w1_raw)), h.b1));
  return tape.add(tape.matmul(hdn, tape.softplus(h.w2_raw)), h.b2);
}

inline double snr_omega(const LearnedSnrNet& net, int t, int T) {
  require(t >= 1 && t <= T, "snr_omega: t out of range");
  Tape tape;
  SnrNetOnTape h;
  h.w1_raw = tape.constant(net.raw.layers[0].w);
  h.b1 = tape.constant(net.raw.layers[0].b);
  h.w2_raw = tape.constant(net.raw.layers[1].w);
  h.b2 = tape.constant(net.raw.layers[1].b);
  NodeId u = tape.constant(Tensor({1, 1}, {static_cast<double>(t) / T}));
  return tape.val(snr_omega_on_tape(tape, h, u))[0];
}

// (alpha_bar_t, 1 - alpha_bar_t) as the complementary sigmoid pair. The
// element below 1/2 is evaluated directly (full relative precision at the
// endpoints) and the other as its complement, so the pair sums to 1 in
// floating point.
inline std::pair<double, double> learned_alpha_bar(const LearnedSnrNet& net, int t, int T) {
  const double w = snr_omega(net, t, T);
  if (w >= 0.0) {
    const double ab = detail::stable_sigmoid(-w);  // <= 1/2
    return {ab, 1.0 - ab};
  }
  const double abc = detail::stable_sigmoid(w);  // < 1/2
  return {1.0 - abc, abc};
}

// Frozen snapshot of the learned schedule for sampling and evaluation.
inline NoiseSchedule schedule_from_learned(const LearnedSnrNet& net, int T) {
  NoiseSchedule s;
  s.T = T;
  s.kind = ScheduleKind::kLearned;
  double prev = 1.0;
  for (int t = 1; t <= T; ++t) {
    auto [ab, abc] = learned_alpha_bar(net, t, T);
    s.alpha.push_back(ab / prev);
    s.alpha_bar.push_back(ab);
    s.alpha_bar_c.push_back(abc);
    prev = ab;
  }
  s.validate();
  return s;
}

}  // namespace difflab
