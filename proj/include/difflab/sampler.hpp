#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "difflab/denoiser.hpp"
#include "difflab/gmm.hpp"

namespace difflab {

struct TrajState {
  int step = 0;
  double level = 0.0;  // timestep or sigma, whichever convention the field uses
  Vec x;
};

struct Trajectory {
  std::vector<TrajState> states;
  std::uint64_t seed = 0;
  std::string config;  // caller-supplied snapshot for run artifacts

  const Vec& final_state() const {
    require(!states.empty(), "Trajectory: empty");
    return states.back().x;
  }
};

// A score evaluator over (x, level[, y]); wraps either the analytic mixture
// oracle or a learned denoiser read through the score parameterization.
struct ScoreField {
  enum class Source { kOracle, kLearned };
  Source source = Source::kOracle;
  std::function<Vec(const Vec& x, double level, const std::optional<int>& y)> value;
};

class LangevinDiverged : public DivergedError {
 public:
  LangevinDiverged(const std::string& what, Trajectory partial)
      : DivergedError(what), partial_trajectory(std::move(partial)) {}
  Trajectory partial_trajectory;
};

namespace detail {
inline bool finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}
}  // namespace detail

// Unadjusted Langevin chain x <- x + c * score + sqrt(2c) * eps. With
// noise_on = false this is plain gradient ascent on log density.
inline Trajectory langevin(const ScoreField& field, double level, const Vec& init, double c,
                           int K, Rng& rng, bool noise_on,
                           const std::optional<int>& y = std::nullopt) {
  require(c > 0.0, "langevin: step size must be positive");
  require(K >= 1, "langevin: K must be >= 1");
  Trajectory traj;
  traj.seed = rng.seed();
  traj.states.push_back({0, level, init});
  Vec x = init;
  const double noise_scale = std::sqrt(2.0 * c);
  for (int i = 1; i <= K; ++i) {
    Vec s = field.value(x, level, y);
    require(s.size() == x.size(), "langevin: score dimension mismatch");
    for (std::size_t d = 0; d < x.size(); ++d) {
      x[d] += c * s[d];
      if (noise_on) x[d] += noise_scale * rng.normal();
    }
    if (!detail::finite(x))
      throw LangevinDiverged("langevin: non-finite state at step " + std::to_string(i),
                             std::move(traj));
    traj.states.push_back({i, level, x});
  }
  return traj;
}

struct StepRule {
  enum class Kind { kProportionalVariance, kConstant };
  Kind kind = Kind::kProportionalVariance;
  double c_base = 0.1;

  double step_size(double level, double final_level) const {
    switch (kind) {
      case Kind::kConstant: return c_base;
      case Kind::kProportionalVariance:
        return c_base * (level * level) / (final_level * final_level);
    }
    throw ContractViolation("StepRule: unknown kind");
  }
};

// Chained Langevin over a strictly decreasing ladder of noise levels; each
// level starts from the previous level's final sample.
inline Trajectory annealed_langevin(const ScoreField& field, const std::vector<double>& levels,
                                    int steps_per_level, const StepRule& rule, const Vec& init,
                                    Rng& rng, const std::optional<int>& y = std::nullopt) {
  require(!levels.empty(), "annealed_langevin: no levels");
  for (std::size_t i = 1; i < levels.size(); ++i)
    require(levels[i] < levels[i - 1], "annealed_langevin: levels must strictly decrease");
  Trajectory traj;
  traj.seed = rng.seed();
  Vec x = init;
  traj.states.push_back({0, levels.front(), x});
  int step = 0;
  for (double level : levels) {
    const double c = rule.step_size(level, levels.back());
    Trajectory leg = langevin(field, level, x, c, steps_per_level, rng, /*noise_on=*/true, y);
    for (std::size_t i = 1; i < leg.states.size(); ++i) {
      ++step;
      traj.states.push_back({step, level, leg.states[i].x});
    }
    x = traj.states.back().x;
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Guidance combinators (Eq.-level algebra on score fields).

using ClassifierGrad = std::function<Vec(const Vec& x, double level, const std::optional<int>& y)>;

// Unconditional score plus gamma times the noisy-classifier gradient.
inline ScoreField classifier_guided_score(const ScoreField& uncond,
                                          const ClassifierGrad& classifier_grad, double gamma) {
  require(gamma >= 0.0, "classifier_guided_score: gamma must be >= 0");
  ScoreField out;
  out.source = uncond.source;
  out.value = [uncond, classifier_grad, gamma](const Vec& x, double level,
                                               const std::optional<int>& y) {
    Vec s = uncond.value(x, level, std::nullopt);
    if (gamma != 0.0) {
      Vec g = classifier_grad(x, level, y);
      for (std::size_t d = 0; d < s.size(); ++d) s[d] += gamma * g[d];
    }
    return s;
  };
  return out;
}

// gamma * conditional + (1 - gamma) * unconditional.
inline ScoreField cfg_score(const ScoreField& cond, const ScoreField& uncond, double gamma) {
  ScoreField out;
  out.source = cond.source;
  out.value = [cond, uncond, gamma](const Vec& x, double level, const std::optional<int>& y) {
    if (gamma == 1.0) return cond.value(x, level, y);
    if (gamma == 0.0) return uncond.value(x, level, std::nullopt);
    Vec sc = cond.value(x, level, y);
    Vec su = uncond.value(x, level, std::nullopt);
    for (std::size_t d = 0; d < sc.size(); ++d)
      sc[d] = gamma * sc[d] + (1.0 - gamma) * su[d];
    return sc;
  };
  return out;
}

// ---------------------------------------------------------------------------
// Ready-made score fields.

// Analytic score of the VE-perturbed mixture; level is sigma.
inline ScoreField oracle_score_field_ve(const Gmm& data) {
  ScoreField f;
  f.source = ScoreField::Source::kOracle;
  f.value = [data](const Vec& x, double level, const std::optional<int>&) {
    return gmm_score(perturb_ve(data, level), x);
  };
  return f;
}

// Class-conditional VE score (renormalized sub-mixture).
inline ScoreField oracle_conditional_field_ve(const LabeledGmm& data) {
  ScoreField f;
  f.source = ScoreField::Source::kOracle;
  f.value = [data](const Vec& x, double level, const std::optional<int>& y) {
    const Gmm base = y.has_value() ? class_submixture(data, *y) : data.gmm;
    return gmm_score(perturb_ve(base, level), x);
  };
  return f;
}

inline ClassifierGrad oracle_classifier_grad_ve(const LabeledGmm& data) {
  return [data](const Vec& x, double level, const std::optional<int>& y) {
    require(y.has_value(), "classifier grad needs a target class");
    return detail::classifier_grad_at(perturb_ve(data, level), x, *y);
  };
}

// Analytic VP score; level is the timestep on the given schedule.
inline ScoreField oracle_score_field_vp(const Gmm& data, const NoiseSchedule& s) {
  ScoreField f;
  f.source = ScoreField::Source::kOracle;
  f.value = [data, s](const Vec& x, double level, const std::optional<int>&) {
    const int t = static_cast<int>(level);
    return gmm_score(perturb_vp(data, s.abar(t)), x);
  };
  return f;
}

// Learned model read through the score parameterization; level is the timestep.
inline ScoreField learned_score_field(const DenoiserModel& m, const NoiseSchedule& s) {
  ScoreField f;
  f.source = ScoreField::Source::kLearned;
  f.value = [&m, s](const Vec& x, double level, const std::optional<int>& y) {
    const int t = static_cast<int>(level);
    return convert(predict(m, x, t, y), m.parameterization, Parameterization::kPredictScore, x, t,
                   s);
  };
  return f;
}

// ---------------------------------------------------------------------------
// Ancestral sampling through the learned (or oracle) reverse transitions.

struct GuidanceSpec {
  enum class Kind { kClassifier, kCfg };
  Kind kind = Kind::kCfg;
  double gamma = 1.0;
  int target_class = 0;
  // Classifier mode: gradient of log p(y|x_t) at timestep t.
  std::function<Vec(const Vec& x, int t)> classifier_grad;
};

struct AncestralResult {
  std::vector<Vec> samples;
  std::vector<Trajectory> trajectories;  // filled when requested
};

namespace detail {
// Raw model output with guidance folded in: convert to score form, combine,
// convert back. One combinator serves all parameterizations.
inline Vec guided_output(const ReverseModel& r, const Vec& x, int t, const NoiseSchedule& s,
                         const GuidanceSpec* g) {
  if (g == nullptr) return r.predict(x, t, std::nullopt);
  const Parameterization score = Parameterization::kPredictScore;
  if (g->kind == GuidanceSpec::Kind::kClassifier) {
    Vec su = convert(r.predict(x, t, std::nullopt), r.parameterization, score, x, t, s);
    Vec cg = g->classifier_grad(x, t);
    for (std::size_t d = 0; d < su.size(); ++d) su[d] += g->gamma * cg[d];
    return convert(su, score, r.parameterization, x, t, s);
  }
  Vec sc = convert(r.predict(x, t, g->target_class), r.parameterization, score, x, t, s);
  Vec su = convert(r.predict(x, t, std::nullopt), r.parameterization, score, x, t, s);
  for (std::size_t d = 0; d < sc.size(); ++d)
    sc[d] = g->gamma * sc[d] + (1.0 - g->gamma) * su[d];
  return convert(sc, score, r.parameterization, x, t, s);
}
}  // namespace detail

// x_T ~ N(0,I); for t = T..2, x_{t-1} = mu_theta(x_t, t) + sigma_q(t) z;
// the final step applies the decoder mean with no added noise. Each chain
// draws from its own split RNG stream, so chain i is reproducible no matter
// how many chains run.
inline AncestralResult ancestral_sample(const ReverseModel& r, const NoiseSchedule& s, int dim,
                                        int n, Rng& rng,
                                        const GuidanceSpec* guidance = nullptr,
                                        bool record_trajectories = false) {
  require(n >= 1, "ancestral_sample: n must be >= 1");
  AncestralResult out;
  out.samples.reserve(n);
  for (int chain = 0; chain < n; ++chain) {
    Rng crng = rng.split(chain);
    Trajectory traj;
    traj.seed = crng.seed();
    Vec x = crng.normal_vec(dim);
    if (record_trajectories) traj.states.push_back({0, static_cast<double>(s.T), x});
    for (int t = s.T; t >= 2; --t) {
      Vec raw = detail::guided_output(r, x, t, s, guidance);
      Vec mu = posterior_mean_from(raw, r.parameterization, x, t, s);
      const double sq = std::sqrt(sigma_q_sq(s, t));
      for (std::size_t d = 0; d < x.size(); ++d) x[d] = mu[d] + sq * crng.normal();
      if (!detail::finite(x))
        throw DivergedError("ancestral_sample: non-finite state at t=" + std::to_string(t));
      if (record_trajectories)
        traj.states.push_back({s.T - t + 1, static_cast<double>(t - 1), x});
    }
    Vec raw = detail::guided_output(r, x, 1, s, guidance);
    x = convert(raw, r.parameterization, Parameterization::kPredictX0, x, 1, s);
    if (record_trajectories) {
      traj.states.push_back({s.T, 0.0, x});
      out.trajectories.push_back(std::move(traj));
    }
    out.samples.push_back(std::move(x));
  }
  return out;
}

inline AncestralResult ancestral_sample(const DenoiserModel& m, const NoiseSchedule& s, int n,
                                        Rng& rng, const GuidanceSpec* guidance = nullptr,
                                        bool record_trajectories = false) {
  ReverseModel r = as_reverse(m);
  return ancestral_sample(r, s, m.data_dim, n, rng, guidance, record_trajectories);
}

}  // namespace difflab
