#pragma once

#include <cmath>

#include "difflab/errors.hpp"
#include "difflab/tensor.hpp"

namespace difflab {

// Diagonal Gaussian: the universal currency of the forward process, the
// denoising posterior and every KL in the ELBOs. Zero variance (a point
// mass) is allowed so the forward chain can be folded up from x_0; the
// density operations below insist on strictly positive variance.
struct DiagGaussian {
  Vec mean;
  Vec var;

  DiagGaussian() = default;
  DiagGaussian(Vec m, Vec v) : mean(std::move(m)), var(std::move(v)) {
    require(mean.size() == var.size(), "DiagGaussian: mean/var length mismatch");
    for (double x : var) require(x >= 0.0, "DiagGaussian: negative variance");
  }

  static DiagGaussian isotropic(Vec m, double v) {
    Vec vv(m.size(), v);
    return DiagGaussian(std::move(m), std::move(vv));
  }

  static DiagGaussian standard(std::size_t dim) { return isotropic(Vec(dim, 0.0), 1.0); }

  std::size_t dim() const { return mean.size(); }
};

inline double log_pdf(const DiagGaussian& g, const Vec& x) {
  require(x.size() == g.dim(), "log_pdf: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(g.var[i] > 0.0, "log_pdf: zero variance");
    const double d = x[i] - g.mean[i];
    acc += -0.5 * (std::log(2.0 * M_PI * g.var[i]) + d * d / g.var[i]);
  }
  return acc;
}

// KL(p || q) for diagonal Gaussians, the closed form
//   1/2 [ log|Sq|/|Sp| - d + tr(Sq^-1 Sp) + (mq-mp)^T Sq^-1 (mq-mp) ].
inline double kl_diag(const DiagGaussian& p, const DiagGaussian& q) {
  require(p.dim() == q.dim(), "kl_diag: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    require(p.var[i] > 0.0 && q.var[i] > 0.0, "kl_diag: zero variance");
    const double d = q.mean[i] - p.mean[i];
    acc += std::log(q.var[i] / p.var[i]) - 1.0 + p.var[i] / q.var[i] + d * d / q.var[i];
  }
  return 0.5 * acc;
}

// mean + sqrt(var) .* eps
inline Vec reparam_sample(const DiagGaussian& g, const Vec& eps) {
  require(eps.size() == g.dim(), "reparam_sample: dimension mismatch");
  Vec out(g.dim());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = g.mean[i] + std::sqrt(g.var[i]) * eps[i];
  return out;
}

// Distribution of a*X + noise for X ~ inner and independent isotropic noise
// of variance added_var: the one-step building block of the forward chain.
inline DiagGaussian compose_linear(double a, const DiagGaussian& inner, double added_var) {
  require(added_var >= 0.0, "compose_linear: negative added variance");
  Vec m(inner.dim()), v(inner.dim());
  for (std::size_t i = 0; i < inner.dim(); ++i) {
    m[i] = a * inner.mean[i];
    v[i] = a * a * inner.var[i] + added_var;
  }
  DiagGaussian out;
  out.mean = std::move(m);
  out.var = std::move(v);
  return out;
}

}  // namespace difflab
