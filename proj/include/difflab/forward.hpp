#pragma once

#include <cmath>

#include "difflab/gaussian.hpp"
#include "difflab/schedule.hpp"

namespace difflab {

// The fixed noising chain q(x_t|x_{t-1}) = N(sqrt(a_t) x_{t-1}, (1-a_t) I)
// and its tractable conditionals. All randomness enters through an explicit
// standard-normal eps so callers own reproducibility.
struct ForwardProcess {
  NoiseSchedule schedule;
  int data_dim = 0;

  ForwardProcess(NoiseSchedule s, int dim) : schedule(std::move(s)), data_dim(dim) {
    require(data_dim >= 1, "ForwardProcess: data_dim must be >= 1");
  }

  void check_dim(const Vec& x, const char* who) const {
    require(static_cast<int>(x.size()) == data_dim, std::string(who) + ": dimension mismatch");
  }
};

// One transition x_t = sqrt(a_t) x_{t-1} + sqrt(1-a_t) eps.
inline Vec q_step(const ForwardProcess& fp, const Vec& x_prev, int t, const Vec& eps) {
  fp.check_dim(x_prev, "q_step");
  fp.check_dim(eps, "q_step");
  const double sa = std::sqrt(fp.schedule.a(t));
  const double sn = std::sqrt(1.0 - fp.schedule.a(t));
  Vec out(x_prev.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sa * x_prev[i] + sn * eps[i];
  return out;
}

// Density parameters of the transition, for Bayes-identity checks.
inline DiagGaussian q_step_dist(const ForwardProcess& fp, const Vec& x_prev, int t) {
  fp.check_dim(x_prev, "q_step_dist");
  const double sa = std::sqrt(fp.schedule.a(t));
  Vec m(x_prev.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = sa * x_prev[i];
  return DiagGaussian::isotropic(std::move(m), 1.0 - fp.schedule.a(t));
}

// Closed-form marginal q(x_t|x_0) = N(sqrt(abar_t) x_0, (1-abar_t) I).
inline DiagGaussian q_marginal(const ForwardProcess& fp, const Vec& x0, int t) {
  fp.check_dim(x0, "q_marginal");
  const double sa = std::sqrt(fp.schedule.abar(t));
  Vec m(x0.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = sa * x0[i];
  return DiagGaussian::isotropic(std::move(m), fp.schedule.abar_c(t));
}

// One-shot reparameterized draw from q(x_t|x_0).
inline Vec noisify(const ForwardProcess& fp, const Vec& x0, int t, const Vec& eps) {
  fp.check_dim(x0, "noisify");
  fp.check_dim(eps, "noisify");
  const double sa = std::sqrt(fp.schedule.abar(t));
  const double sn = std::sqrt(fp.schedule.abar_c(t));
  Vec out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sa * x0[i] + sn * eps[i];
  return out;
}

// Inverse of noisify given the same eps: x_0 = (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t).
inline Vec recover_x0(const ForwardProcess& fp, const Vec& x_t, int t, const Vec& eps) {
  fp.check_dim(x_t, "recover_x0");
  fp.check_dim(eps, "recover_x0");
  const double sa = std::sqrt(fp.schedule.abar(t));
  const double sn = std::sqrt(fp.schedule.abar_c(t));
  Vec out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - sn * eps[i]) / sa;
  return out;
}

// Ground-truth denoising posterior q(x_{t-1}|x_t, x_0) for t >= 2; the
// t = 1 step belongs to the reconstruction term, not this posterior.
inline DiagGaussian q_posterior(const ForwardProcess& fp, const Vec& x_t, const Vec& x0, int t) {
  fp.check_dim(x_t, "q_posterior");
  fp.check_dim(x0, "q_posterior");
  require(t >= 2 && t <= fp.schedule.T, "q_posterior: t out of range [2,T]");
  const NoiseSchedule& s = fp.schedule;
  const double ca = std::sqrt(s.a(t)) * s.abar_c(t - 1) / s.abar_c(t);
  const double cb = std::sqrt(s.abar(t - 1)) * (1.0 - s.a(t)) / s.abar_c(t);
  Vec m(x_t.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = ca * x_t[i] + cb * x0[i];
  return DiagGaussian::isotropic(std::move(m), sigma_q_sq(s, t));
}

}  // namespace difflab
