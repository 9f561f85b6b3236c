// difflab: command-line laboratory for 2-D diffusion experiments.
//
// Subcommands: gen-data, train, sample, elbo, score-field, guide-demo, fig4.
// Every run takes a JSON config (flags override config keys), requires an
// explicit seed, and writes a manifest with the merged config, seed,
// version string and output hashes next to its outputs.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
// 4 I/O error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "difflab/difflab.hpp"

using namespace difflab;
using nlohmann::json;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  try {
    json j;
    f >> j;
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what());
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad config value for '" + key + "': " + e.what());
  }
}

std::uint64_t require_seed(const json& cfg) {
  if (!cfg.contains("seed")) throw ConfigError("an explicit seed is required (--seed or config)");
  return cfg.at("seed").get<std::uint64_t>();
}

LabeledGmm default_mixture() {
  LabeledGmm lg;
  lg.gmm.weights = {0.2, 0.3, 0.5};
  lg.gmm.means = {{0.0, 3.2}, {-3.0, -2.2}, {3.0, -2.2}};
  lg.gmm.vars = {{0.8, 0.8}, {0.8, 0.8}, {0.8, 0.8}};
  lg.labels = {0, 1, 1};
  return lg;
}

LabeledGmm mixture_from_config(const json& cfg) {
  if (cfg.contains("mixture")) return labeled_gmm_from_json(cfg.at("mixture"));
  return default_mixture();
}

NoiseSchedule schedule_from_config(const json& cfg) {
  const std::string kind = get_or<std::string>(cfg, "schedule", "fixed-linear");
  const int T = get_or<int>(cfg, "T", 100);
  if (kind == "fixed-linear")
    return linear_beta_schedule(T, get_or<double>(cfg, "beta_start", 1e-4),
                                get_or<double>(cfg, "beta_end", 0.2));
  if (kind == "fixed-cosine") return cosine_schedule(T);
  throw ConfigError("schedule_from_config: cannot build '" + kind + "' without training");
}

std::vector<double> levels_from_config(const json& cfg) {
  if (cfg.contains("levels") && cfg.at("levels").is_array())
    return cfg.at("levels").get<std::vector<double>>();
  const double hi = get_or<double>(cfg, "level_hi", 8.0);
  const double lo = get_or<double>(cfg, "level_lo", 0.3);
  const int n = get_or<int>(cfg, "level_count", 10);
  if (!(hi > lo && lo > 0.0 && n >= 1)) throw ConfigError("bad level ladder");
  std::vector<double> out;
  for (int i = 0; i < n; ++i)
    out.push_back(n == 1 ? hi : hi * std::pow(lo / hi, static_cast<double>(i) / (n - 1)));
  return out;
}

struct OutputTracker {
  json config;
  std::string command;
  std::uint64_t seed = 0;
  RunManifest manifest;

  void note(const std::string& path) { manifest.output_hashes[path] = ""; }

  void finish(const std::string& manifest_path) {
    manifest.command = command;
    manifest.config = config;
    manifest.seed = seed;
    manifest.version = git_describe();
    for (auto& [path, hash] : manifest.output_hashes) hash = fnv1a64_hex(read_file_bytes(path));
    write_manifest(manifest_path, manifest);
    std::printf("manifest: %s\n", manifest_path.c_str());
  }
};

std::string default_manifest_path(const std::string& out) { return out + ".manifest.json"; }

// ---------------------------------------------------------------------------

int cmd_gen_data(const json& cfg) {
  OutputTracker tracker{cfg, "gen-data", require_seed(cfg)};
  const std::string out = get_or<std::string>(cfg, "out", "data.csv");
  const std::string kind = get_or<std::string>(cfg, "kind", "gmm");
  const int n = get_or<int>(cfg, "n", 1000);
  if (n < 1) throw ConfigError("gen-data: n must be >= 1");

  Dataset d;
  if (kind == "gmm") {
    LabeledGmm lg = mixture_from_config(cfg);
    d = get_or<bool>(cfg, "labeled", false)
            ? generate_labeled_gmm_dataset(lg, n, tracker.seed)
            : generate_gmm_dataset(lg.gmm, n, tracker.seed);
  } else if (kind == "ring") {
    d = generate_ring_dataset(get_or<double>(cfg, "radius", 2.0),
                              get_or<double>(cfg, "noise", 0.1), n, tracker.seed);
  } else if (kind == "two-moons") {
    d = generate_two_moons_dataset(get_or<double>(cfg, "noise", 0.1), n, tracker.seed);
  } else {
    throw ConfigError("gen-data: unknown kind '" + kind + "'");
  }
  write_dataset_csv(d, out);
  tracker.note(out);
  std::printf("wrote %zu points to %s\n", d.size(), out.c_str());
  tracker.finish(get_or<std::string>(cfg, "manifest", default_manifest_path(out)));
  return 0;
}

TrainConfig train_config_from_json(const json& cfg) {
  TrainConfig tc;
  tc.steps = get_or<int>(cfg, "steps", 2000);
  tc.batch_size = get_or<int>(cfg, "batch_size", 64);
  tc.lr = get_or<double>(cfg, "lr", 1e-3);
  tc.parameterization =
      parameterization_from_string(get_or<std::string>(cfg, "parameterization", "predict-eps"));
  tc.weighting = weighting_from_string(get_or<std::string>(cfg, "weighting", "unit"));
  const std::string space = get_or<std::string>(cfg, "loss_space", "native");
  if (space == "native")
    tc.loss_space = LossSpace::kNative;
  else if (space == "eps")
    tc.loss_space = LossSpace::kEps;
  else
    throw ConfigError("unknown loss_space: " + space);
  tc.T = get_or<int>(cfg, "T", 100);
  tc.schedule_kind = schedule_kind_from_string(get_or<std::string>(cfg, "schedule", "fixed-linear"));
  tc.beta_start = get_or<double>(cfg, "beta_start", 1e-4);
  tc.beta_end = get_or<double>(cfg, "beta_end", 0.2);
  tc.conditional = get_or<bool>(cfg, "conditional", false);
  tc.cond_dropout_prob = get_or<double>(cfg, "cond_dropout_prob", 0.1);
  if (tc.cond_dropout_prob < 0.0 || tc.cond_dropout_prob > 1.0)
    throw ConfigError("cond_dropout_prob must lie in [0,1]");
  tc.hidden = get_or<std::vector<int>>(cfg, "hidden", {128, 128, 128});
  tc.latent_dim = get_or<int>(cfg, "latent_dim", 1);
  tc.elbo_mc = get_or<int>(cfg, "elbo_mc", 1);
  tc.snr_hidden = get_or<int>(cfg, "snr_hidden", 16);
  return tc;
}

int cmd_train(const json& cfg) {
  OutputTracker tracker{cfg, "train", require_seed(cfg)};
  const std::string model_kind = get_or<std::string>(cfg, "model", "diffusion");
  const std::string data_path = get_or<std::string>(cfg, "data", "");
  if (data_path.empty()) throw ConfigError("train: --data is required");
  const std::string out = get_or<std::string>(cfg, "out", "model.ckpt.json");
  const std::string loss_csv = get_or<std::string>(cfg, "loss_csv", out + ".loss.csv");

  Dataset data = read_dataset_csv(data_path);
  TrainConfig tc = train_config_from_json(cfg);
  tc.seed = tracker.seed;

  Checkpoint ckpt;
  ckpt.seed = tc.seed;
  ckpt.train_config = cfg;
  // Training hyperparameters only; where the artifacts land is the
  // manifest's business.
  for (const char* key : {"out", "manifest", "loss_csv"}) ckpt.train_config.erase(key);
  if (model_kind == "diffusion") {
    DiffusionTrainResult res = train_diffusion(tc, data);
    ckpt.kind = "diffusion";
    ckpt.denoiser = res.model;
    ckpt.schedule = res.schedule;
    ckpt.snr_net = res.snr_net;
    write_loss_csv(res.history, loss_csv);
    std::printf("trained diffusion model: final loss %.6f\n", res.history.back().loss);
  } else if (model_kind == "vae") {
    VaeTrainResult res = train_vae(tc, data);
    ckpt.kind = "vae";
    ckpt.vae = res.model;
    write_loss_csv(res.history, loss_csv);
    std::printf("trained vae: final negative elbo %.6f\n", res.history.back().loss);
  } else {
    throw ConfigError("train: unknown model '" + model_kind + "'");
  }
  save_checkpoint(out, ckpt);
  tracker.note(out);
  tracker.note(loss_csv);
  tracker.finish(get_or<std::string>(cfg, "manifest", default_manifest_path(out)));
  return 0;
}

Checkpoint load_diffusion_checkpoint(const json& cfg) {
  const std::string path = get_or<std::string>(cfg, "ckpt", "");
  if (path.empty()) throw ConfigError("a diffusion checkpoint path is required (--ckpt)");
  Checkpoint c = load_checkpoint(path);
  if (c.kind != "diffusion" || !c.denoiser || !c.schedule)
    throw ConfigError("checkpoint is not a diffusion model: " + path);
  return c;
}

void write_samples_csv(const std::vector<Vec>& samples, const std::string& path) {
  Dataset d;
  d.points = samples;
  write_dataset_csv(d, path);
}

int cmd_sample(const json& cfg) {
  OutputTracker tracker{cfg, "sample", require_seed(cfg)};
  const std::string sampler = get_or<std::string>(cfg, "sampler", "ancestral");
  const std::string out = get_or<std::string>(cfg, "out", "samples.csv");
  const std::string traj_path = get_or<std::string>(cfg, "trajectories", "");
  const int n = get_or<int>(cfg, "n", 1000);
  if (n < 1) throw ConfigError("sample: n must be >= 1");
  Rng rng(tracker.seed);

  std::vector<Vec> samples;
  std::vector<Trajectory> trajectories;

  if (sampler == "ancestral") {
    Checkpoint c = load_diffusion_checkpoint(cfg);
    GuidanceSpec guidance;
    GuidanceSpec* gptr = nullptr;
    LabeledGmm lg;
    if (cfg.contains("guidance")) {
      const json& g = cfg.at("guidance");
      const std::string kind = get_or<std::string>(g, "kind", "cfg");
      guidance.gamma = get_or<double>(g, "gamma", 1.0);
      guidance.target_class = get_or<int>(g, "target_class", 0);
      if (kind == "cfg") {
        guidance.kind = GuidanceSpec::Kind::kCfg;
        if (c.denoiser->cond_dim <= 0)
          throw ConfigError("cfg guidance needs a conditional checkpoint");
      } else if (kind == "classifier") {
        guidance.kind = GuidanceSpec::Kind::kClassifier;
        lg = mixture_from_config(cfg);
        const NoiseSchedule s = *c.schedule;
        const int target = guidance.target_class;
        guidance.classifier_grad = [lg, s, target](const Vec& x, int t) {
          return classifier_score_grad(lg, s.abar(t), x, target);
        };
      } else {
        throw ConfigError("unknown guidance kind: " + kind);
      }
      gptr = &guidance;
    }
    AncestralResult res =
        ancestral_sample(*c.denoiser, *c.schedule, n, rng, gptr, !traj_path.empty());
    samples = std::move(res.samples);
    trajectories = std::move(res.trajectories);
  } else if (sampler == "langevin" || sampler == "annealed") {
    ScoreField field;
    const std::string source = get_or<std::string>(cfg, "field", "oracle");
    std::optional<Checkpoint> c;
    if (source == "oracle") {
      field = oracle_score_field_ve(mixture_from_config(cfg).gmm);
    } else if (source == "checkpoint") {
      c = load_diffusion_checkpoint(cfg);
      field = learned_score_field(*c->denoiser, *c->schedule);
    } else {
      throw ConfigError("sample: unknown field source '" + source + "'");
    }
    const double box = get_or<double>(cfg, "init_box", 8.0);
    if (sampler == "langevin") {
      const double level = get_or<double>(cfg, "level", 0.0);
      const double c_step = get_or<double>(cfg, "c", 0.1);
      const int K = get_or<int>(cfg, "K", 1000);
      const bool noise_on = get_or<bool>(cfg, "noise_on", true);
      for (int i = 0; i < n; ++i) {
        Rng crng = rng.split(i);
        Vec init = {crng.uniform(-box, box), crng.uniform(-box, box)};
        if (cfg.contains("init")) init = cfg.at("init").get<Vec>();
        Trajectory tr = langevin(field, level, init, c_step, K, crng, noise_on);
        samples.push_back(tr.final_state());
        if (!traj_path.empty()) trajectories.push_back(std::move(tr));
      }
    } else {
      const std::vector<double> levels = levels_from_config(cfg);
      StepRule rule;
      rule.c_base = get_or<double>(cfg, "c_base", 0.05);
      const int steps = get_or<int>(cfg, "steps_per_level", 100);
      for (int i = 0; i < n; ++i) {
        Rng crng = rng.split(i);
        Vec init = {crng.uniform(-box, box), crng.uniform(-box, box)};
        Trajectory tr = annealed_langevin(field, levels, steps, rule, init, crng);
        samples.push_back(tr.final_state());
        if (!traj_path.empty()) trajectories.push_back(std::move(tr));
      }
    }
  } else {
    throw ConfigError("sample: unknown sampler '" + sampler + "'");
  }

  write_samples_csv(samples, out);
  tracker.note(out);
  if (!traj_path.empty()) {
    write_trajectories_jsonl(trajectories, traj_path);
    tracker.note(traj_path);
  }
  std::printf("wrote %zu samples to %s\n", samples.size(), out.c_str());
  tracker.finish(get_or<std::string>(cfg, "manifest", default_manifest_path(out)));
  return 0;
}

int cmd_elbo(const json& cfg) {
  OutputTracker tracker{cfg, "elbo", require_seed(cfg)};
  Checkpoint c = load_diffusion_checkpoint(cfg);
  const std::string data_path = get_or<std::string>(cfg, "data", "");
  if (data_path.empty()) throw ConfigError("elbo: --data is required");
  Dataset data = read_dataset_csv(data_path);
  const std::string out = get_or<std::string>(cfg, "out", "elbo.json");
  const std::string form = get_or<std::string>(cfg, "form", "both");
  const int n_mc = get_or<int>(cfg, "n_mc", 1);
  const int reps = get_or<int>(cfg, "reps", 20);
  const int max_points = std::min<int>(get_or<int>(cfg, "points", 10),
                                       static_cast<int>(data.size()));

  Rng rng(tracker.seed);
  auto run_form = [&](bool denoising) {
    std::vector<double> estimates;
    for (int p = 0; p < max_points; ++p)
      for (int r = 0; r < reps; ++r) {
        Rng er = rng.split(static_cast<std::uint64_t>(p) * reps + r + (denoising ? 0 : 1u << 20));
        const Vec& x0 = data.points[p];
        estimates.push_back(denoising
                                ? elbo_denoising_form(*c.denoiser, x0, n_mc, er, *c.schedule).elbo
                                : elbo_consistency_form(*c.denoiser, x0, n_mc, er, *c.schedule).elbo);
      }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= estimates.size();
    double var = 0.0;
    for (double e : estimates) var += (e - mean) * (e - mean);
    var /= (estimates.size() - 1);
    return json{{"mean", mean}, {"variance", var}, {"estimates", estimates.size()}};
  };

  json report{{"n_mc", n_mc}, {"reps", reps}, {"points", max_points}};
  if (form == "both" || form == "denoising") report["denoising"] = run_form(true);
  if (form == "both" || form == "consistency") report["consistency"] = run_form(false);
  if (!report.contains("denoising") && !report.contains("consistency"))
    throw ConfigError("elbo: unknown form '" + form + "'");

  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + out);
  f << report.dump(1) << "\n";
  tracker.note(out);
  if (report.contains("denoising"))
    std::printf("denoising form: mean %.4f variance %.4f\n",
                report["denoising"]["mean"].get<double>(),
                report["denoising"]["variance"].get<double>());
  if (report.contains("consistency"))
    std::printf("consistency form: mean %.4f variance %.4f\n",
                report["consistency"]["mean"].get<double>(),
                report["consistency"]["variance"].get<double>());
  tracker.finish(get_or<std::string>(cfg, "manifest", default_manifest_path(out)));
  return 0;
}

PlotBounds bounds_from_config(const json& cfg, double fallback = 6.0) {
  PlotBounds b;
  const double half = get_or<double>(cfg, "plot_halfwidth", fallback);
  b.xmin = -half;
  b.xmax = half;
  b.ymin = -half;
  b.ymax = half;
  return b;
}

int cmd_score_field(const json& cfg) {
  OutputTracker tracker{cfg, "score-field", require_seed(cfg)};
  const std::string out = get_or<std::string>(cfg, "out", "score_field.svg");
  const std::string source = get_or<std::string>(cfg, "field", "oracle");
  const int grid = get_or<int>(cfg, "grid", 20);
  PlotBounds b = bounds_from_config(cfg);

  std::function<Vec(const Vec&)> field;
  std::optional<Checkpoint> c;
  if (source == "oracle") {
    LabeledGmm lg = mixture_from_config(cfg);
    if (cfg.contains("sigma")) {
      const double sigma = cfg.at("sigma").get<double>();
      Gmm pert = perturb_ve(lg.gmm, sigma);
      field = [pert](const Vec& x) { return gmm_score(pert, x); };
    } else {
      NoiseSchedule s = schedule_from_config(cfg);
      const int t = get_or<int>(cfg, "level", 1);
      Gmm pert = perturb_vp(lg.gmm, s.abar(t));
      field = [pert](const Vec& x) { return gmm_score(pert, x); };
    }
  } else if (source == "checkpoint") {
    c = load_diffusion_checkpoint(cfg);
    const int t = get_or<int>(cfg, "level", 1);
    const DenoiserModel& m = *c->denoiser;
    const NoiseSchedule s = *c->schedule;
    field = [&m, s, t](const Vec& x) {
      return convert(predict(m, x, t), m.parameterization, Parameterization::kPredictScore, x, t,
                     s);
    };
  } else {
    throw ConfigError("score-field: unknown field source '" + source + "'");
  }

  SvgPlot plot(b);
  plot.add_quiver(quiver_geometry(field, b, grid, grid));
  plot.write(out);
  tracker.note(out);
  std::printf("wrote score field quiver to %s\n", out.c_str());
  tracker.finish(get_or<std::string>(cfg, "manifest", default_manifest_path(out)));
  return 0;
}

int cmd_guide_demo(const json& cfg) {
  OutputTracker tracker{cfg, "guide-demo", require_seed(cfg)};
  const std::string mode = get_or<std::string>(cfg, "mode", "classifier");
  const std::string out = get_or<std::string>(cfg, "out", "guide_demo.csv");
  const std::vector<double> gammas = get_or<std::vector<double>>(cfg, "gammas", {0.0, 1.0, 3.0, 5.0});
  const int n = get_or<int>(cfg, "n", 2000);
  const int target = get_or<int>(cfg, "target_class", 0);

  LabeledGmm lg = mixture_from_config(cfg);
  const int n_classes = lg.num_classes();
  std::string csv = "gamma";
  for (int k = 0; k < n_classes; ++k) csv += ",class" + std::to_string(k) + "_frac";
  csv += "\n";

  for (double gamma : gammas) {
    std::vector<long> counts(n_classes, 0);
    if (mode == "classifier") {
      ScoreField uncond = oracle_score_field_ve(lg.gmm);
      ScoreField field = classifier_guided_score(uncond, oracle_classifier_grad_ve(lg), gamma);
      const std::vector<double> levels = levels_from_config(cfg);
      StepRule rule;
      rule.c_base = get_or<double>(cfg, "c_base", 0.05);
      const int steps = get_or<int>(cfg, "steps_per_level", 100);
      const double box = get_or<double>(cfg, "init_box", 8.0);
      Rng master(tracker.seed);
      for (int i = 0; i < n; ++i) {
        Rng rng = master.split(static_cast<std::uint64_t>(gamma * 1000) * 100000 + i);
        Vec init = {rng.uniform(-box, box), rng.uniform(-box, box)};
        Trajectory tr = annealed_langevin(field, levels, steps, rule, init, rng, target);
        counts[lg.labels[nearest_component(lg.gmm, tr.final_state())]]++;
      }
    } else if (mode == "cfg") {
      Checkpoint c = load_diffusion_checkpoint(cfg);
      if (c.denoiser->cond_dim <= 0)
        throw ConfigError("guide-demo cfg mode needs a conditional checkpoint");
      GuidanceSpec guidance;
      guidance.kind = GuidanceSpec::Kind::kCfg;
      guidance.gamma = gamma;
      guidance.target_class = target;
      Rng rng(tracker.seed + static_cast<std::uint64_t>(gamma * 9973));
      AncestralResult res = ancestral_sample(*c.denoiser, *c.schedule, n, rng, &guidance);
      for (const Vec& x : res.samples)
        counts[lg.labels[nearest_component(lg.gmm, x)]]++;
    } else {
      throw ConfigError("guide-demo: unknown mode '" + mode + "'");
    }
    csv += format_double(gamma);
    for (int k = 0; k < n_classes; ++k)
      csv += ',' + format_double(counts[k] / static_cast<double>(n));
    csv += '\n';
    std::printf("gamma %.2f: target-class fraction %.4f\n", gamma,
                counts[target] / static_cast<double>(n));
  }

  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + out);
  f << csv;
  tracker.note(out);
  tracker.finish(get_or<std::string>(cfg, "manifest", default_manifest_path(out)));
  return 0;
}

int cmd_fig4(const json& cfg) {
  OutputTracker tracker{cfg, "fig4", require_seed(cfg)};
  const std::string out = get_or<std::string>(cfg, "out", "fig4.svg");
  const std::string traj_path = get_or<std::string>(cfg, "trajectories", "");
  LabeledGmm lg = mixture_from_config(cfg);
  const int chains = get_or<int>(cfg, "chains", 3);
  const double c = get_or<double>(cfg, "c", 0.1);
  const int K = get_or<int>(cfg, "K", 3000);
  const bool noise_on = get_or<bool>(cfg, "noise_on", true);
  Vec init = get_or<Vec>(cfg, "init", {0.0, 0.0});

  ScoreField field = oracle_score_field_ve(lg.gmm);
  Rng master(tracker.seed);
  std::vector<Trajectory> trajectories;
  for (int i = 0; i < chains; ++i) {
    Rng rng = master.split(i);
    trajectories.push_back(langevin(field, 0.0, init, c, K, rng, noise_on));
  }

  PlotBounds b = bounds_from_config(cfg);
  SvgPlot plot(b);
  plot.add_quiver(quiver_geometry([&](const Vec& x) { return gmm_score(lg.gmm, x); }, b,
                                  get_or<int>(cfg, "grid", 22), get_or<int>(cfg, "grid", 22)));
  const double lmax = gmm_log_density(lg.gmm, lg.gmm.means[0]);
  plot.add_contours(contour_geometry([&](const Vec& x) { return gmm_log_density(lg.gmm, x); }, b,
                                     80, {lmax - 3.0, lmax - 2.0, lmax - 1.0}));
  for (int i = 0; i < chains; ++i)
    plot.add_trajectory(trajectories[i], SvgPlot::palette(i + 1));
  plot.write(out);
  tracker.note(out);
  if (!traj_path.empty()) {
    write_trajectories_jsonl(trajectories, traj_path);
    tracker.note(traj_path);
  }
  std::printf("wrote Langevin figure to %s\n", out.c_str());
  tracker.finish(get_or<std::string>(cfg, "manifest", default_manifest_path(out)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"difflab: desk-scale diffusion model laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out, data, ckpt, manifest;

  struct Sub {
    CLI::App* cmd;
    std::function<int(const json&)> run;
  };
  std::vector<Sub> subs;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed, "RNG seed (required here or in config)");
    cmd->add_option("--out", out, "primary output path");
    cmd->add_option("--data", data, "dataset CSV path");
    cmd->add_option("--ckpt", ckpt, "checkpoint path");
    cmd->add_option("--manifest", manifest, "manifest output path");
  };

  auto make = [&](const std::string& name, const std::string& desc,
                  std::function<int(const json&)> run) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    add_common(cmd);
    subs.push_back({cmd, std::move(run)});
  };

  make("gen-data", "generate a dataset CSV", cmd_gen_data);
  make("train", "train a diffusion model or the VAE baseline", cmd_train);
  make("sample", "draw samples (ancestral | langevin | annealed)", cmd_sample);
  make("elbo", "estimate both ELBO forms on a dataset", cmd_elbo);
  make("score-field", "render a score-field quiver SVG", cmd_score_field);
  make("guide-demo", "guidance sweep over gamma", cmd_guide_demo);
  make("fig4", "Langevin trajectories against the oracle score field", cmd_fig4);

  // Free-form extras: --sampler ancestral etc. arrive via config or the
  // key=value overrides below.
  std::vector<std::string> overrides;
  for (Sub& s : subs)
    s.cmd->add_option("--set", overrides,
                      "config override as key=json (e.g. --set sampler=\"langevin\")");

  CLI11_PARSE(app, argc, argv);

  try {
    for (Sub& s : subs) {
      if (!s.cmd->parsed()) continue;
      json cfg = load_config(config_path);
      if (s.cmd->count("--seed")) cfg["seed"] = seed;
      if (s.cmd->count("--out")) cfg["out"] = out;
      if (s.cmd->count("--data")) cfg["data"] = data;
      if (s.cmd->count("--ckpt")) cfg["ckpt"] = ckpt;
      if (s.cmd->count("--manifest")) cfg["manifest"] = manifest;
      for (const std::string& kv : overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("bad --set override: " + kv);
        try {
          cfg[kv.substr(0, eq)] = json::parse(kv.substr(eq + 1));
        } catch (const json::exception&) {
          cfg[kv.substr(0, eq)] = kv.substr(eq + 1);  // bare string value
        }
      }
      return s.run(cfg);
    }
    throw ConfigError("no subcommand");
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const DivergedError& e) {
    std::fprintf(stderr, "numerical divergence: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
