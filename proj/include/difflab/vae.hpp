#pragma once

#include <cmath>
#include <vector>

#include "difflab/gaussian.hpp"
#include "difflab/mlp.hpp"

namespace difflab {

// Minimal Gaussian VAE: the T = 1 anchor of the diffusion ELBO. The encoder
// emits (mean | log-variance); the decoder emits a mean with fixed variance,
// so the reconstruction term is a scaled squared error.
struct VaeModel {
  MlpParams encoder;  // data_dim -> ... -> 2 * latent_dim
  MlpParams decoder;  // latent_dim -> ... -> data_dim
  int data_dim = 2;
  int latent_dim = 1;
  double decoder_var = 0.1;
};

inline VaeModel vae_init(int data_dim, int latent_dim, const std::vector<int>& hidden, Rng& rng) {
  require(latent_dim >= 1 && latent_dim <= data_dim,
          "vae_init: need 1 <= latent_dim <= data_dim");
  VaeModel m;
  m.data_dim = data_dim;
  m.latent_dim = latent_dim;
  std::vector<int> enc{data_dim};
  for (int h : hidden) enc.push_back(h);
  enc.push_back(2 * latent_dim);
  std::vector<int> dec{latent_dim};
  for (int h : hidden) dec.push_back(h);
  dec.push_back(data_dim);
  m.encoder = mlp_init(enc, Activation::kTanh, rng);
  m.decoder = mlp_init(dec, Activation::kTanh, rng);
  return m;
}

struct VaeOnTape {
  MlpOnTape encoder;
  MlpOnTape decoder;
};

inline VaeOnTape vae_on_tape(Tape& tape, const VaeModel& m) {
  return {mlp_on_tape(tape, m.encoder), mlp_on_tape(tape, m.decoder)};
}

namespace detail {
// Constant selection matrices splitting the encoder output into its mean
// and log-variance halves.
inline Tensor select_columns(int total, int from, int width) {
  Tensor s({total, width});
  for (int i = 0; i < width; ++i) s.at(from + i, i) = 1.0;
  return s;
}
}  // namespace detail

// Negative ELBO over a batch of inputs (B, data_dim): mean over L
// reparameterized draws of the decoder NLL, plus the closed-form KL of the
// encoder posterior against the standard-normal prior.
inline NodeId vae_batch_loss(Tape& tape, const VaeOnTape& h, const VaeModel& m,
                             const Tensor& batch, int L, Rng& rng) {
  require(L >= 1, "vae_batch_loss: L must be >= 1");
  require(batch.rank() == 2 && batch.cols() == m.data_dim, "vae_batch_loss: bad batch shape");
  const int B = batch.rows();
  const int dz = m.latent_dim;

  NodeId x = tape.constant(batch);
  NodeId enc = mlp_apply(tape, h.encoder, x);
  NodeId mu = tape.matmul(enc, tape.constant(detail::select_columns(2 * dz, 0, dz)));
  NodeId logvar = tape.matmul(enc, tape.constant(detail::select_columns(2 * dz, dz, dz)));

  // KL(q(z|x) || N(0,I)) = 1/2 sum(exp(logvar) + mu^2 - 1 - logvar), averaged over the batch.
  NodeId kl_terms = tape.sub(tape.add(tape.exp(logvar), tape.mul(mu, mu)),
                             tape.shift(logvar, 1.0));
  NodeId kl = tape.scale(tape.sum(kl_terms), 0.5 / B);

  // Monte Carlo reconstruction NLL over L draws.
  NodeId sigma = tape.exp(tape.scale(logvar, 0.5));
  NodeId recon_sum = tape.constant_scalar(0.0);
  for (int l = 0; l < L; ++l) {
    Tensor eps({B, dz});
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
    NodeId z = tape.add(mu, tape.mul(sigma, tape.constant(eps)));
    NodeId dec = mlp_apply(tape, h.decoder, z);
    NodeId diff = tape.sub(dec, x);
    recon_sum = tape.add(recon_sum,
                         tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / (2.0 * m.decoder_var)));
  }
  const double log_norm = 0.5 * m.data_dim * std::log(2.0 * M_PI * m.decoder_var);
  NodeId recon = tape.shift(tape.scale(recon_sum, 1.0 / (L * B)), log_norm);
  return tape.add(recon, kl);
}

// Spec-level single-example loss node.
inline NodeId vae_elbo_loss(Tape& tape, const VaeOnTape& h, const VaeModel& m, const Vec& x,
                            int L, Rng& rng) {
  return vae_batch_loss(tape, h, m, Tensor::row(x), L, rng);
}

// Closed-form pieces for evaluation (no tape).
struct VaeEval {
  double neg_elbo = 0.0;
  double recon_nll = 0.0;
  double kl = 0.0;
  double recon_mse = 0.0;
};

inline VaeEval vae_eval(const VaeModel& m, const Vec& x, int L, Rng& rng) {
  Vec enc = mlp_apply_vec(m.encoder, x);
  const int dz = m.latent_dim;
  Vec mu(enc.begin(), enc.begin() + dz);
  Vec logvar(enc.begin() + dz, enc.end());
  VaeEval ev;
  for (int i = 0; i < dz; ++i)
    ev.kl += 0.5 * (std::exp(logvar[i]) + mu[i] * mu[i] - 1.0 - logvar[i]);
  for (int l = 0; l < L; ++l) {
    Vec z(dz);
    for (int i = 0; i < dz; ++i) z[i] = mu[i] + std::exp(0.5 * logvar[i]) * rng.normal();
    Vec dec = mlp_apply_vec(m.decoder, z);
    double q = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - dec[i]) * (x[i] - dec[i]);
    ev.recon_mse += q / x.size();
    ev.recon_nll += q / (2.0 * m.decoder_var);
  }
  ev.recon_mse /= L;
  ev.recon_nll = ev.recon_nll / L + 0.5 * m.data_dim * std::log(2.0 * M_PI * m.decoder_var);
  ev.neg_elbo = ev.recon_nll + ev.kl;
  return ev;
}

// Draw z ~ N(0,I), decode to means; no decoder noise.
inline std::vector<Vec> vae_sample(const VaeModel& m, int n, Rng& rng) {
  require(n >= 1, "vae_sample: n must be >= 1");
  std::vector<Vec> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(mlp_apply_vec(m.decoder, rng.normal_vec(m.latent_dim)));
  return out;
}

}  // namespace difflab
