#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "difflab/dataset.hpp"
#include "difflab/denoiser.hpp"
#include "difflab/vae.hpp"

namespace difflab {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 64;
  double lr = 1e-3;
  Parameterization parameterization = Parameterization::kPredictEps;
  Weighting weighting = Weighting::kUnit;
  LossSpace loss_space = LossSpace::kNative;
  int T = 100;
  ScheduleKind schedule_kind = ScheduleKind::kFixedLinear;
  double beta_start = 1e-4;
  double beta_end = 0.2;
  bool conditional = false;
  double cond_dropout_prob = 0.1;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {128, 128, 128};
  int latent_dim = 1;   // VAE
  int elbo_mc = 1;      // VAE reconstruction draws during training
  int snr_hidden = 16;  // learned-schedule network width
};

struct LossRecord {
  int step = 0;
  double loss = 0.0;
  double t_mean = 0.0;
};

struct DiffusionTrainResult {
  DenoiserModel model;
  NoiseSchedule schedule;  // final (snapshot when learned)
  std::optional<LearnedSnrNet> snr_net;
  std::vector<LossRecord> history;
  std::vector<long> t_histogram;  // index t; draws of each timestep seen in training
  long cond_seen = 0;             // conditional examples processed
  long cond_dropped = 0;          // of those, how many had y replaced by the null token
};

namespace detail {

struct Batch {
  std::vector<Vec> x0s;
  std::vector<int> ts;
  std::vector<Vec> epss;
  std::vector<std::optional<int>> ys;
  bool reconstruction = false;
  double t_mean = 0.0;
};

inline Batch draw_batch(const Dataset& data, const TrainConfig& cfg, Rng& rng,
                        DiffusionTrainResult& stats) {
  Batch b;
  const int d = data.dim();
  // The reconstruction (t = 1) term enters with probability 1/T; the
  // denoising terms use per-example t ~ U{2..T}.
  b.reconstruction = rng.uniform() < 1.0 / cfg.T;
  double t_sum = 0.0;
  for (int i = 0; i < cfg.batch_size; ++i) {
    const std::size_t idx = rng.uniform_index(data.size());
    b.x0s.push_back(data.points[idx]);
    const int t = b.reconstruction ? 1 : 2 + static_cast<int>(rng.uniform_index(cfg.T - 1));
    b.ts.push_back(t);
    t_sum += t;
    if (static_cast<std::size_t>(t) < stats.t_histogram.size()) stats.t_histogram[t] += 1;
    b.epss.push_back(rng.normal_vec(d));
    if (cfg.conditional) {
      stats.cond_seen += 1;
      const bool drop = rng.uniform() < cfg.cond_dropout_prob;
      if (drop) {
        stats.cond_dropped += 1;
        b.ys.emplace_back(std::nullopt);
      } else {
        b.ys.emplace_back(data.labels[idx]);
      }
    } else {
      b.ys.emplace_back(std::nullopt);
    }
  }
  b.t_mean = t_sum / cfg.batch_size;
  return b;
}

inline void check_finite_loss(double loss, int step, double t_mean) {
  if (!std::isfinite(loss))
    throw DivergedError("training aborted: non-finite loss at step " + std::to_string(step) +
                        " (mean t " + std::to_string(t_mean) + ", loss " +
                        std::to_string(loss) + ")");
}

}  // namespace detail

// Diffusion training on a fixed schedule: stochastic timesteps, optional
// conditioning dropout, Adam on the denoiser MLP.
inline DiffusionTrainResult train_diffusion(const TrainConfig& cfg, const Dataset& data,
                                            const NoiseSchedule& schedule) {
  data.validate();
  require(schedule.T == cfg.T, "train_diffusion: schedule/config T mismatch");
  if (cfg.conditional) require(data.labeled(), "train_diffusion: conditional needs labels");

  Rng rng(cfg.seed);
  DiffusionTrainResult res;
  res.schedule = schedule;
  res.t_histogram.assign(cfg.T + 1, 0);
  const int cond_dim = cfg.conditional ? data.num_classes() : 0;
  res.model = denoiser_init(data.dim(), cfg.hidden, cfg.T, cfg.parameterization, cond_dim, rng);

  AdamState adam;
  for (int step = 0; step < cfg.steps; ++step) {
    detail::Batch b = detail::draw_batch(data, cfg, rng, res);
    Tape tape;
    DenoiserOnTape h = denoiser_on_tape(tape, res.model);
    const NodeId loss =
        b.reconstruction
            ? reconstruction_batch_loss(tape, h, b.x0s, b.epss, schedule, b.ys)
            : diffusion_batch_loss(tape, h, b.x0s, b.ts, b.epss, schedule, cfg.weighting, b.ys,
                                   cfg.loss_space);
    const double lval = tape.val(loss).item();
    detail::check_finite_loss(lval, step, b.t_mean);
    adam_step(res.model.mlp, collect_grads(h.mlp, tape.grad(loss)), adam, cfg.lr);
    res.history.push_back({step, lval, b.t_mean});
  }
  return res;
}

// Joint training with a learnable monotone SNR schedule. The denoiser
// trains on the current schedule snapshot; the schedule parameters train
// only through the half-SNR-decrement weight in front of the x0-space
// error, with the error magnitude treated as a constant.
inline DiffusionTrainResult train_diffusion(const TrainConfig& cfg, const Dataset& data,
                                            const LearnedSnrNet& initial_net) {
  data.validate();
  if (cfg.conditional) require(data.labeled(), "train_diffusion: conditional needs labels");

  Rng rng(cfg.seed);
  DiffusionTrainResult res;
  res.snr_net = initial_net;
  res.t_histogram.assign(cfg.T + 1, 0);
  const int cond_dim = cfg.conditional ? data.num_classes() : 0;
  res.model = denoiser_init(data.dim(), cfg.hidden, cfg.T, cfg.parameterization, cond_dim, rng);

  AdamState adam_theta;
  AdamState adam_eta;
  const int d = data.dim();
  for (int step = 0; step < cfg.steps; ++step) {
    NoiseSchedule snapshot = schedule_from_learned(*res.snr_net, cfg.T);
    detail::Batch b = detail::draw_batch(data, cfg, rng, res);

    Tape tape;
    DenoiserOnTape h = denoiser_on_tape(tape, res.model);
    const NodeId loss =
        b.reconstruction
            ? reconstruction_batch_loss(tape, h, b.x0s, b.epss, snapshot, b.ys)
            : diffusion_batch_loss(tape, h, b.x0s, b.ts, b.epss, snapshot, cfg.weighting, b.ys,
                                   cfg.loss_space);
    const double lval = tape.val(loss).item();
    detail::check_finite_loss(lval, step, b.t_mean);
    adam_step(res.model.mlp, collect_grads(h.mlp, tape.grad(loss)), adam_theta, cfg.lr);
    res.history.push_back({step, lval, b.t_mean});

    if (!b.reconstruction) {
      // eta step: loss_eta = mean_i c_i * 1/2 (SNR(t_i - 1) - SNR(t_i)),
      // c_i = ||x0_hat_i - x0_i||^2 held constant.
      ForwardProcess fp(snapshot, d);
      const int B = cfg.batch_size;
      Tensor c_col({B, 1});
      Tensor sel_prev({B, cfg.T});
      Tensor sel_cur({B, cfg.T});
      for (int i = 0; i < B; ++i) {
        const int t = b.ts[i];
        Vec x_t = noisify(fp, b.x0s[i], t, b.epss[i]);
        Vec x0_hat = convert(predict(res.model, x_t, t, b.ys[i]), cfg.parameterization,
                             Parameterization::kPredictX0, x_t, t, snapshot);
        double c = 0.0;
        for (int k = 0; k < d; ++k) {
          const double diff = x0_hat[k] - b.x0s[i][k];
          c += diff * diff;
        }
        c_col.at(i, 0) = c;
        sel_prev.at(i, t - 2) = 1.0;  // omega index of t-1
        sel_cur.at(i, t - 1) = 1.0;   // omega index of t
      }
      Tape eta_tape;
      SnrNetOnTape sh = snr_net_on_tape(eta_tape, *res.snr_net);
      Tensor u_col({cfg.T, 1});
      for (int t = 1; t <= cfg.T; ++t)
        u_col.at(t - 1, 0) = static_cast<double>(t) / cfg.T;
      NodeId omega = snr_omega_on_tape(eta_tape, sh, eta_tape.constant(u_col));
      NodeId snr_prev = eta_tape.exp(eta_tape.neg(eta_tape.matmul(eta_tape.constant(sel_prev), omega)));
      NodeId snr_cur = eta_tape.exp(eta_tape.neg(eta_tape.matmul(eta_tape.constant(sel_cur), omega)));
      NodeId w = eta_tape.scale(eta_tape.sub(snr_prev, snr_cur), 0.5);
      NodeId eta_loss =
          eta_tape.scale(eta_tape.sum(eta_tape.mul(eta_tape.constant(c_col), w)), 1.0 / B);

      auto gm = eta_tape.grad(eta_loss);
      std::vector<Tensor> grads;
      for (NodeId id : snr_net_param_ids(sh)) {
        auto it = gm.find(id);
        require(it != gm.end(), "train_diffusion: missing eta gradient");
        grads.push_back(it->second);
      }
      adam_step(mlp_tensors(res.snr_net->raw), grads, adam_eta, cfg.lr);

      // SNR monotonicity must survive every update; the snapshot
      // constructor validates strict decrease of alpha_bar.
      schedule_from_learned(*res.snr_net, cfg.T);
    }
  }
  res.schedule = schedule_from_learned(*res.snr_net, cfg.T);
  return res;
}

inline DiffusionTrainResult train_diffusion(const TrainConfig& cfg, const Dataset& data) {
  switch (cfg.schedule_kind) {
    case ScheduleKind::kFixedLinear:
      return train_diffusion(cfg, data, linear_beta_schedule(cfg.T, cfg.beta_start, cfg.beta_end));
    case ScheduleKind::kFixedCosine:
      return train_diffusion(cfg, data, cosine_schedule(cfg.T));
    case ScheduleKind::kLearned: {
      Rng init_rng(cfg.seed ^ 0x5eedULL);
      return train_diffusion(cfg, data, learned_snr_net_init(cfg.snr_hidden, init_rng));
    }
  }
  throw ConfigError("train_diffusion: unknown schedule kind");
}

struct VaeTrainResult {
  VaeModel model;
  std::vector<LossRecord> history;  // loss = negative ELBO per step
};

inline VaeTrainResult train_vae(const TrainConfig& cfg, const Dataset& data) {
  data.validate();
  Rng rng(cfg.seed);
  VaeTrainResult res;
  std::vector<int> hidden = cfg.hidden;
  res.model = vae_init(data.dim(), cfg.latent_dim, hidden, rng);

  AdamState adam;
  const int d = data.dim();
  for (int step = 0; step < cfg.steps; ++step) {
    Tensor batch({cfg.batch_size, d});
    for (int i = 0; i < cfg.batch_size; ++i) {
      const std::size_t idx = rng.uniform_index(data.size());
      for (int k = 0; k < d; ++k) batch.at(i, k) = data.points[idx][k];
    }
    Tape tape;
    VaeOnTape h = vae_on_tape(tape, res.model);
    NodeId loss = vae_batch_loss(tape, h, res.model, batch, cfg.elbo_mc, rng);
    const double lval = tape.val(loss).item();
    detail::check_finite_loss(lval, step, 0.0);

    auto gm = tape.grad(loss);
    std::vector<Tensor> grads = collect_grads(h.encoder, gm);
    std::vector<Tensor> dec_grads = collect_grads(h.decoder, gm);
    grads.insert(grads.end(), dec_grads.begin(), dec_grads.end());
    std::vector<Tensor*> params = mlp_tensors(res.model.encoder);
    std::vector<Tensor*> dec_params = mlp_tensors(res.model.decoder);
    params.insert(params.end(), dec_params.begin(), dec_params.end());
    adam_step(params, grads, adam, cfg.lr);
    res.history.push_back({step, lval, 0.0});
  }
  return res;
}

}  // namespace difflab
