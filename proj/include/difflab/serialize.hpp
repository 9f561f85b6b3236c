#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"

#include "difflab/dataset.hpp"
#include "difflab/denoiser.hpp"
#include "difflab/sampler.hpp"
#include "difflab/train.hpp"
#include "difflab/vae.hpp"

namespace difflab {

using nlohmann::json;

class CheckpointParseError : public IoError {
 public:
  using IoError::IoError;
};
class CheckpointVersionError : public IoError {
 public:
  using IoError::IoError;
};
class CheckpointShapeError : public IoError {
 public:
  using IoError::IoError;
};

// ---------------------------------------------------------------------------
// JSON <-> core types

inline json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", t.vec()}};
}

inline Tensor tensor_from_json(const json& j) {
  std::vector<int> shape = j.at("shape").get<std::vector<int>>();
  Vec data = j.at("data").get<Vec>();
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  if (n != data.size())
    throw CheckpointShapeError("tensor shape/data inconsistency: product " + std::to_string(n) +
                               " vs " + std::to_string(data.size()));
  return Tensor(std::move(shape), std::move(data));
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kSoftplus: return "softplus";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "tanh") return Activation::kTanh;
  if (s == "softplus") return Activation::kSoftplus;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw CheckpointParseError("unknown activation: " + s);
}

inline json mlp_to_json(const MlpParams& p) {
  json layers = json::array();
  for (const MlpLayer& l : p.layers)
    layers.push_back(json{{"w", tensor_to_json(l.w)},
                          {"b", tensor_to_json(l.b)},
                          {"act", to_string(l.act)}});
  return json{{"layers", layers}};
}

inline MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  for (const json& lj : j.at("layers")) {
    MlpLayer l;
    l.w = tensor_from_json(lj.at("w"));
    l.b = tensor_from_json(lj.at("b"));
    l.act = activation_from_string(lj.at("act").get<std::string>());
    p.layers.push_back(std::move(l));
  }
  try {
    p.check_consistent();
  } catch (const ContractViolation& e) {
    throw CheckpointShapeError(e.what());
  }
  return p;
}

inline std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kFixedLinear: return "fixed-linear";
    case ScheduleKind::kFixedCosine: return "fixed-cosine";
    case ScheduleKind::kLearned: return "learned";
  }
  return "?";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "fixed-linear") return ScheduleKind::kFixedLinear;
  if (s == "fixed-cosine") return ScheduleKind::kFixedCosine;
  if (s == "learned") return ScheduleKind::kLearned;
  throw ConfigError("unknown schedule kind: " + s);
}

inline json schedule_to_json(const NoiseSchedule& s) {
  return json{{"kind", to_string(s.kind)},
              {"T", s.T},
              {"alpha", s.alpha},
              {"alpha_bar", s.alpha_bar},
              {"alpha_bar_c", s.alpha_bar_c}};
}

inline NoiseSchedule schedule_from_json(const json& j) {
  NoiseSchedule s;
  s.kind = schedule_kind_from_string(j.at("kind").get<std::string>());
  s.T = j.at("T").get<int>();
  s.alpha = j.at("alpha").get<Vec>();
  s.alpha_bar = j.at("alpha_bar").get<Vec>();
  s.alpha_bar_c = j.at("alpha_bar_c").get<Vec>();
  try {
    s.validate();
  } catch (const ContractViolation& e) {
    throw CheckpointShapeError(e.what());
  }
  return s;
}

inline json gmm_to_json(const Gmm& g) {
  return json{{"weights", g.weights}, {"means", g.means}, {"vars", g.vars}};
}

inline Gmm gmm_from_json(const json& j) {
  Gmm g;
  g.weights = j.at("weights").get<std::vector<double>>();
  g.means = j.at("means").get<std::vector<Vec>>();
  g.vars = j.at("vars").get<std::vector<Vec>>();
  try {
    g.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("bad mixture spec: ") + e.what());
  }
  return g;
}

inline LabeledGmm labeled_gmm_from_json(const json& j) {
  LabeledGmm lg;
  lg.gmm = gmm_from_json(j);
  if (j.contains("labels"))
    lg.labels = j.at("labels").get<std::vector<int>>();
  else
    for (std::size_t i = 0; i < lg.gmm.components(); ++i) lg.labels.push_back(static_cast<int>(i));
  try {
    lg.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("bad labeled mixture spec: ") + e.what());
  }
  return lg;
}

inline json denoiser_to_json(const DenoiserModel& m) {
  return json{{"parameterization", to_string(m.parameterization)},
              {"data_dim", m.data_dim},
              {"T", m.T},
              {"time_freqs", m.time_freqs},
              {"cond_dim", m.cond_dim},
              {"null_token", m.null_token},
              {"mlp", mlp_to_json(m.mlp)}};
}

inline DenoiserModel denoiser_from_json(const json& j) {
  DenoiserModel m;
  m.parameterization = parameterization_from_string(j.at("parameterization").get<std::string>());
  m.data_dim = j.at("data_dim").get<int>();
  m.T = j.at("T").get<int>();
  m.time_freqs = j.at("time_freqs").get<int>();
  m.cond_dim = j.at("cond_dim").get<int>();
  m.null_token = j.at("null_token").get<Vec>();
  m.mlp = mlp_from_json(j.at("mlp"));
  if (m.mlp.input_dim() != m.feature_dim())
    throw CheckpointShapeError("denoiser feature width does not match MLP input");
  return m;
}

inline json vae_to_json(const VaeModel& m) {
  return json{{"data_dim", m.data_dim},
              {"latent_dim", m.latent_dim},
              {"decoder_var", m.decoder_var},
              {"encoder", mlp_to_json(m.encoder)},
              {"decoder", mlp_to_json(m.decoder)}};
}

inline VaeModel vae_from_json(const json& j) {
  VaeModel m;
  m.data_dim = j.at("data_dim").get<int>();
  m.latent_dim = j.at("latent_dim").get<int>();
  m.decoder_var = j.at("decoder_var").get<double>();
  m.encoder = mlp_from_json(j.at("encoder"));
  m.decoder = mlp_from_json(j.at("decoder"));
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoint document

constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  std::string kind;  // "diffusion" | "vae"
  std::optional<DenoiserModel> denoiser;
  std::optional<NoiseSchedule> schedule;
  std::optional<LearnedSnrNet> snr_net;
  std::optional<VaeModel> vae;
  json train_config = json::object();
  std::uint64_t seed = 0;
};

inline json checkpoint_to_json(const Checkpoint& c) {
  json j{{"format_version", kCheckpointFormatVersion},
         {"kind", c.kind},
         {"seed", c.seed},
         {"train_config", c.train_config}};
  if (c.denoiser) j["denoiser"] = denoiser_to_json(*c.denoiser);
  if (c.schedule) j["schedule"] = schedule_to_json(*c.schedule);
  if (c.snr_net) j["snr_net"] = mlp_to_json(c.snr_net->raw);
  if (c.vae) j["vae"] = vae_to_json(*c.vae);
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  if (!j.contains("format_version") || !j.at("format_version").is_number_integer())
    throw CheckpointParseError("checkpoint missing format_version");
  const int v = j.at("format_version").get<int>();
  if (v != kCheckpointFormatVersion)
    throw CheckpointVersionError("unsupported checkpoint format version " + std::to_string(v));
  Checkpoint c;
  try {
    c.kind = j.at("kind").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.train_config = j.value("train_config", json::object());
    if (j.contains("denoiser")) c.denoiser = denoiser_from_json(j.at("denoiser"));
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("snr_net")) c.snr_net = LearnedSnrNet{mlp_from_json(j.at("snr_net"))};
    if (j.contains("vae")) c.vae = vae_from_json(j.at("vae"));
  } catch (const IoError&) {
    throw;
  } catch (const json::exception& e) {
    throw CheckpointParseError(std::string("malformed checkpoint: ") + e.what());
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << checkpoint_to_json(c).dump(1) << "\n";
  if (!f) throw IoError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw CheckpointParseError(std::string("checkpoint parse failure: ") + e.what());
  }
  return checkpoint_from_json(j);
}

// ---------------------------------------------------------------------------
// Trajectories as JSON lines (one state per line) and loss history CSV.

inline std::string trajectory_jsonl(const Trajectory& t) {
  std::string out;
  for (const TrajState& st : t.states) {
    json line{{"step", st.step}, {"level", st.level}, {"x", st.x}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

inline void write_trajectories_jsonl(const std::vector<Trajectory>& ts, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    json header{{"trajectory", i}, {"seed", ts[i].seed}, {"states", ts[i].states.size()}};
    f << header.dump() << "\n" << trajectory_jsonl(ts[i]);
  }
  if (!f) throw IoError("write failed: " + path);
}

inline void write_loss_csv(const std::vector<LossRecord>& history, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "step,loss,t_mean\n";
  for (const LossRecord& r : history)
    f << r.step << ',' << format_double(r.loss) << ',' << format_double(r.t_mean) << '\n';
  if (!f) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Run manifest: enough to reproduce any CLI run bit for bit.

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::string version;  // git describe string, "unknown" outside a checkout
  std::map<std::string, std::string> output_hashes;
};

inline std::string git_describe() {
  FILE* pipe = ::popen("git describe --always --dirty 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128];
  std::string out;
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  ::pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

inline void write_manifest(const std::string& path, const RunManifest& m) {
  json j{{"command", m.command},
         {"config", m.config},
         {"seed", m.seed},
         {"version", m.version},
         {"outputs", m.output_hashes}};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << j.dump(1) << "\n";
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace difflab
