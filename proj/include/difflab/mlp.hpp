#pragma once

#include <cmath>
#include <vector>

#include "difflab/autodiff.hpp"
#include "difflab/rng.hpp"
#include "difflab/tensor.hpp"

namespace difflab {

enum class Activation { kIdentity, kTanh, kSoftplus, kSigmoid };

struct MlpLayer {
  Tensor w;  // (in, out)
  Tensor b;  // (out)
  Activation act = Activation::kIdentity;
};

struct MlpParams {
  std::vector<MlpLayer> layers;

  int input_dim() const { return layers.front().w.shape()[0]; }
  int output_dim() const { return layers.back().w.shape()[1]; }

  void check_consistent() const {
    require(!layers.empty(), "MlpParams: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const MlpLayer& l = layers[i];
      require(l.w.rank() == 2, "MlpParams: weight must be rank 2");
      require(l.b.rank() == 1 && l.b.cols() == l.w.shape()[1], "MlpParams: bias width mismatch");
      if (i + 1 < layers.size())
        require(l.w.shape()[1] == layers[i + 1].w.shape()[0],
                "MlpParams: consecutive layer dimensions incompatible");
    }
  }
};

// dims = {in, h1, ..., out}; hidden layers get `hidden_act`, the output
// layer stays linear. Weights ~ N(0, 1/fan_in), biases zero.
inline MlpParams mlp_init(const std::vector<int>& dims, Activation hidden_act, Rng& rng) {
  require(dims.size() >= 2, "mlp_init: need at least input and output dims");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    MlpLayer l;
    l.w = Tensor({dims[i], dims[i + 1]});
    const double s = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    for (std::size_t k = 0; k < l.w.size(); ++k) l.w[k] = s * rng.normal();
    l.b = Tensor({dims[i + 1]});
    l.act = (i + 2 < dims.size()) ? hidden_act : Activation::kIdentity;
    p.layers.push_back(std::move(l));
  }
  return p;
}

// Parameter leaves of one MLP registered on a tape, in the fixed order
// w0, b0, w1, b1, ...  This order is the gradient/Adam keying contract.
struct MlpOnTape {
  std::vector<NodeId> ids;
  std::vector<Activation> acts;
};

inline MlpOnTape mlp_on_tape(Tape& tape, const MlpParams& p) {
  p.check_consistent();
  MlpOnTape h;
  for (const MlpLayer& l : p.layers) {
    h.ids.push_back(tape.leaf(l.w, /*requires_grad=*/true));
    h.ids.push_back(tape.leaf(l.b, /*requires_grad=*/true));
    h.acts.push_back(l.act);
  }
  return h;
}

inline NodeId apply_activation(Tape& tape, Activation act, NodeId x) {
  switch (act) {
    case Activation::kIdentity: return x;
    case Activation::kTanh: return tape.tanh(x);
    case Activation::kSoftplus: return tape.softplus(x);
    case Activation::kSigmoid: return tape.sigmoid(x);
  }
  throw ContractViolation("apply_activation: unknown activation");
}

// Forward pass on the tape; input is (batch, in) (a rank-1 input is treated
// as one row). Records matmul + bias + activation per layer.
inline NodeId mlp_apply(Tape& tape, const MlpOnTape& h, NodeId input) {
  NodeId x = input;
  for (std::size_t i = 0; i < h.acts.size(); ++i) {
    const Tensor& w = tape.val(h.ids[2 * i]);
    require(tape.val(x).cols() == w.rows(),
            "mlp_apply: input width " + tape.val(x).shape_str() + " does not match layer " +
                w.shape_str());
    x = tape.add(tape.matmul(x, h.ids[2 * i]), h.ids[2 * i + 1]);
    x = apply_activation(tape, h.acts[i], x);
  }
  return x;
}

// Tape-free forward pass for inference; runs the exact same op sequence on
// a scratch tape, so training-time and inference-time values agree bitwise.
inline Tensor mlp_apply(const MlpParams& p, const Tensor& input) {
  input.require_finite("mlp_apply input");
  Tensor in2 = input.rank() == 1 ? Tensor({1, input.cols()}, input.vec()) : input;
  Tape tape;
  MlpOnTape h;
  for (const MlpLayer& l : p.layers) {
    h.ids.push_back(tape.constant(l.w));
    h.ids.push_back(tape.constant(l.b));
    h.acts.push_back(l.act);
  }
  Tensor out = tape.val(mlp_apply(tape, h, tape.constant(in2)));
  if (input.rank() == 1) return Tensor::vector(out.vec());
  return out;
}

inline Vec mlp_apply_vec(const MlpParams& p, const Vec& input) {
  return mlp_apply(p, Tensor::vector(input)).vec();
}

// Gradients for one MLP pulled out of a GradMap in the w0,b0,w1,b1,...
// order; a parameter missing from the map is a caller bug.
inline std::vector<Tensor> collect_grads(const MlpOnTape& h, const Tape::GradMap& grads) {
  std::vector<Tensor> out;
  out.reserve(h.ids.size());
  for (NodeId id : h.ids) {
    auto it = grads.find(id);
    require(it != grads.end(), "collect_grads: missing gradient for parameter node");
    out.push_back(it->second);
  }
  return out;
}

inline std::vector<Tensor*> mlp_tensors(MlpParams& p) {
  std::vector<Tensor*> out;
  for (MlpLayer& l : p.layers) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

struct AdamState {
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

inline void adam_step(std::vector<Tensor*> params, const std::vector<Tensor>& grads,
                      AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  require(params.size() == grads.size(), "adam_step: gradient count mismatch");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::zeros(p->shape()));
      state.v.push_back(Tensor::zeros(p->shape()));
    }
  }
  require(state.m.size() == params.size(), "adam_step: state size mismatch");
  state.step += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    require(p.same_shape(g), "adam_step: gradient shape mismatch");
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

inline void adam_step(MlpParams& params, const std::vector<Tensor>& grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  adam_step(mlp_tensors(params), grads, state, lr, beta1, beta2, eps);
}

}  // namespace difflab
