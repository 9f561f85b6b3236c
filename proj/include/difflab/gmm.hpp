#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "difflab/gaussian.hpp"
#include "difflab/rng.hpp"

namespace difflab {

// Mixture of diagonal Gaussians with exact densities and score fields.
// Never fitted to data; this is the ground truth everything learned is
// checked against.
struct Gmm {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Vec> vars;

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.empty() ? 0 : means[0].size(); }

  void validate() const {
    require(!weights.empty(), "Gmm: no components");
    require(means.size() == weights.size() && vars.size() == weights.size(),
            "Gmm: component count mismatch");
    double total = 0.0;
    for (double w : weights) {
      require(w > 0.0, "Gmm: nonpositive weight");
      total += w;
    }
    require(std::fabs(total - 1.0) <= 1e-12, "Gmm: weights must sum to 1");
    for (std::size_t i = 0; i < components(); ++i) {
      require(means[i].size() == dim() && vars[i].size() == dim(), "Gmm: dimension mismatch");
      for (double v : vars[i]) require(v > 0.0, "Gmm: nonpositive component variance");
    }
  }

  DiagGaussian component(std::size_t i) const { return DiagGaussian(means[i], vars[i]); }
};

struct LabeledGmm {
  Gmm gmm;
  std::vector<int> labels;  // class id per component

  void validate() const {
    gmm.validate();
    require(labels.size() == gmm.components(), "LabeledGmm: one label per component required");
  }

  int num_classes() const {
    int hi = -1;
    for (int y : labels) hi = std::max(hi, y);
    return hi + 1;
  }

  bool has_class(int y) const {
    return std::find(labels.begin(), labels.end(), y) != labels.end();
  }
};

namespace detail {
inline double log_sum_exp(const std::vector<double>& v) {
  double hi = -HUGE_VAL;
  for (double x : v) hi = std::fmax(hi, x);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

inline std::vector<double> component_log_joint(const Gmm& g, const Vec& x) {
  require(x.size() == g.dim(), "gmm: dimension mismatch");
  std::vector<double> lj(g.components());
  for (std::size_t i = 0; i < g.components(); ++i)
    lj[i] = std::log(g.weights[i]) + log_pdf(g.component(i), x);
  return lj;
}
}  // namespace detail

inline double gmm_log_density(const Gmm& g, const Vec& x) {
  return detail::log_sum_exp(detail::component_log_joint(g, x));
}

// Posterior responsibilities p(i|x), computed in log space.
inline std::vector<double> gmm_responsibilities(const Gmm& g, const Vec& x) {
  std::vector<double> lj = detail::component_log_joint(g, x);
  const double lz = detail::log_sum_exp(lj);
  std::vector<double> r(lj.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::exp(lj[i] - lz);
  return r;
}

// grad_x log p(x) = sum_i r_i(x) * Sigma_i^-1 (mu_i - x).
inline Vec gmm_score(const Gmm& g, const Vec& x) {
  const std::vector<double> r = gmm_responsibilities(g, x);
  Vec s(x.size(), 0.0);
  for (std::size_t i = 0; i < g.components(); ++i)
    for (std::size_t d = 0; d < x.size(); ++d)
      s[d] += r[i] * (g.means[i][d] - x[d]) / g.vars[i][d];
  return s;
}

// Variance-preserving perturbation: the marginal of sqrt(abar) x0 + sqrt(1-abar) eps.
inline Gmm perturb_vp(const Gmm& g, double abar) {
  require(abar > 0.0 && abar <= 1.0, "perturb_vp: abar outside (0,1]");
  Gmm out = g;
  const double sa = std::sqrt(abar);
  for (std::size_t i = 0; i < out.components(); ++i)
    for (std::size_t d = 0; d < out.dim(); ++d) {
      out.means[i][d] *= sa;
      out.vars[i][d] = abar * g.vars[i][d] + (1.0 - abar);
    }
  return out;
}

// Variance-exploding perturbation: additive noise of std sigma.
inline Gmm perturb_ve(const Gmm& g, double sigma) {
  require(sigma >= 0.0, "perturb_ve: negative sigma");
  Gmm out = g;
  for (std::size_t i = 0; i < out.components(); ++i)
    for (std::size_t d = 0; d < out.dim(); ++d) out.vars[i][d] += sigma * sigma;
  return out;
}

inline LabeledGmm perturb_vp(const LabeledGmm& lg, double abar) {
  return LabeledGmm{perturb_vp(lg.gmm, abar), lg.labels};
}
inline LabeledGmm perturb_ve(const LabeledGmm& lg, double sigma) {
  return LabeledGmm{perturb_ve(lg.gmm, sigma), lg.labels};
}

// Posterior-mean estimate of sqrt(abar) x0 given x_t, from the score of the
// perturbed marginal: x_t + (1-abar) grad log p_t(x_t).
inline Vec tweedie_mean(const Gmm& g_t, double abar, const Vec& x_t) {
  Vec s = gmm_score(g_t, x_t);
  Vec out(x_t.size());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = x_t[d] + (1.0 - abar) * s[d];
  return out;
}

// Renormalized class-y sub-mixture.
inline Gmm class_submixture(const LabeledGmm& lg, int y) {
  require(lg.has_class(y), "class_submixture: unknown class");
  Gmm out;
  double total = 0.0;
  for (std::size_t i = 0; i < lg.gmm.components(); ++i)
    if (lg.labels[i] == y) total += lg.gmm.weights[i];
  for (std::size_t i = 0; i < lg.gmm.components(); ++i) {
    if (lg.labels[i] != y) continue;
    out.weights.push_back(lg.gmm.weights[i] / total);
    out.means.push_back(lg.gmm.means[i]);
    out.vars.push_back(lg.gmm.vars[i]);
  }
  return out;
}

inline double class_prior(const LabeledGmm& lg, int y) {
  double total = 0.0;
  for (std::size_t i = 0; i < lg.gmm.components(); ++i)
    if (lg.labels[i] == y) total += lg.gmm.weights[i];
  return total;
}

namespace detail {
// log p(y|x) on an already-perturbed labeled mixture.
inline double classifier_log_prob_at(const LabeledGmm& lg_t, const Vec& x, int y) {
  require(lg_t.has_class(y), "classifier_log_prob: unknown class");
  std::vector<double> lj = component_log_joint(lg_t.gmm, x);
  std::vector<double> cls;
  for (std::size_t i = 0; i < lj.size(); ++i)
    if (lg_t.labels[i] == y) cls.push_back(lj[i]);
  return log_sum_exp(cls) - log_sum_exp(lj);
}

// grad_x log p(y|x): class sub-mixture score minus unconditional score.
inline Vec classifier_grad_at(const LabeledGmm& lg_t, const Vec& x, int y) {
  Vec sy = gmm_score(class_submixture(lg_t, y), x);
  Vec s = gmm_score(lg_t.gmm, x);
  for (std::size_t d = 0; d < s.size(); ++d) sy[d] -= s[d];
  return sy;
}
}  // namespace detail

// Closed-form noisy classifier log p(y|x_t) under the VP perturbation at abar.
inline double classifier_log_prob(const LabeledGmm& lg, double abar, const Vec& x_t, int y) {
  return detail::classifier_log_prob_at(perturb_vp(lg, abar), x_t, y);
}

inline Vec classifier_score_grad(const LabeledGmm& lg, double abar, const Vec& x_t, int y) {
  return detail::classifier_grad_at(perturb_vp(lg, abar), x_t, y);
}

// Score of the class-conditional perturbed marginal; equals the
// unconditional score plus the classifier gradient by construction.
inline Vec conditional_score(const LabeledGmm& lg, double abar, const Vec& x_t, int y) {
  require(lg.has_class(y), "conditional_score: unknown class");
  return gmm_score(perturb_vp(class_submixture(lg, y), abar), x_t);
}

inline std::size_t nearest_component(const Gmm& g, const Vec& x) {
  require(x.size() == g.dim(), "nearest_component: dimension mismatch");
  std::size_t best = 0;
  double best_d = HUGE_VAL;
  for (std::size_t i = 0; i < g.components(); ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double diff = x[k] - g.means[i][k];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// Draw x ~ p and report which component produced it.
inline std::pair<Vec, std::size_t> gmm_sample(const Gmm& g, Rng& rng) {
  const std::size_t i = rng.categorical(g.weights);
  Vec x(g.dim());
  for (std::size_t d = 0; d < x.size(); ++d)
    x[d] = g.means[i][d] + std::sqrt(g.vars[i][d]) * rng.normal();
  return {std::move(x), i};
}

}  // namespace difflab
