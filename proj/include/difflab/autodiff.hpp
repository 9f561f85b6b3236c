#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "difflab/errors.hpp"
#include "difflab/tensor.hpp"

namespace difflab {

// Closed list of tape primitives. Everything else (subtraction, square
// roots, weighted losses, ...) is composed from these.
enum class Op {
  kLeaf,
  kAdd,   // same shape | (r,c)+(c) bias over rows | tensor + scalar
  kMul,   // same shape | tensor * scalar
  kMatMul,
  kExp,
  kLog,
  kTanh,
  kSoftplus,
  kSigmoid,
  kSum,
  kMean,
  kSquaredNorm,
};

namespace detail {
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double stable_softplus(double x) {
  return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}
}  // namespace detail

// Reverse-mode tape. One tape per training step; nodes are appended in
// evaluation order, so index order is already topological. Summation in
// every reduction and broadcast-accumulation runs left-to-right over the
// flat data, which makes gradients bitwise reproducible.
class Tape {
 public:
  struct Node {
    Op op = Op::kLeaf;
    int a = -1;
    int b = -1;
    Tensor val;
    bool needs_grad = false;
  };

  using NodeId = int;
  using GradMap = std::map<NodeId, Tensor>;

  NodeId leaf(Tensor value, bool requires_grad = false) {
    NodeId id = push(Op::kLeaf, -1, -1, std::move(value), requires_grad);
    if (requires_grad) params_.push_back(id);
    return id;
  }

  NodeId constant(Tensor value) { return leaf(std::move(value), false); }
  NodeId constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  NodeId add(NodeId a, NodeId b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    Tensor out;
    if (x.same_shape(y)) {
      out = x;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    } else if (y.is_scalar()) {
      out = x;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[0];
    } else if (x.is_scalar()) {
      out = y;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[0];
    } else if (x.rank() == 2 && y.rank() == 1 && x.cols() == y.cols()) {
      out = x;
      for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < x.cols(); ++c) out.at(r, c) += y[c];
    } else {
      throw ContractViolation("add: incompatible shapes " + x.shape_str() + " vs " + y.shape_str());
    }
    return push(Op::kAdd, a, b, std::move(out));
  }

  NodeId mul(NodeId a, NodeId b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    Tensor out;
    if (x.same_shape(y)) {
      out = x;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
    } else if (y.is_scalar()) {
      out = x;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[0];
    } else if (x.is_scalar()) {
      out = y;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= x[0];
    } else {
      throw ContractViolation("mul: incompatible shapes " + x.shape_str() + " vs " + y.shape_str());
    }
    return push(Op::kMul, a, b, std::move(out));
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    require(x.rank() == 2 && y.rank() == 2, "matmul: rank-2 operands required");
    require(x.cols() == y.rows(),
            "matmul: inner dimensions differ " + x.shape_str() + " vs " + y.shape_str());
    const int r = x.rows(), k = x.cols(), c = y.cols();
    Tensor out({r, c});
    for (int i = 0; i < r; ++i) {
      const double* xi = x.data() + static_cast<std::size_t>(i) * k;
      double* oi = out.data() + static_cast<std::size_t>(i) * c;
      for (int kk = 0; kk < k; ++kk) {
        const double xv = xi[kk];
        const double* yk = y.data() + static_cast<std::size_t>(kk) * c;
        for (int j = 0; j < c; ++j) oi[j] += xv * yk[j];
      }
    }
    return push(Op::kMatMul, a, b, std::move(out));
  }

  NodeId exp(NodeId a) { return unary(Op::kExp, a, [](double v) { return std::exp(v); }); }
  NodeId log(NodeId a) { return unary(Op::kLog, a, [](double v) { return std::log(v); }); }
  NodeId tanh(NodeId a) { return unary(Op::kTanh, a, [](double v) { return std::tanh(v); }); }
  NodeId softplus(NodeId a) { return unary(Op::kSoftplus, a, detail::stable_softplus); }
  NodeId sigmoid(NodeId a) { return unary(Op::kSigmoid, a, detail::stable_sigmoid); }

  NodeId sum(NodeId a) {
    const Tensor& x = val(a);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    return push(Op::kSum, a, -1, Tensor::scalar(s));
  }

  NodeId mean(NodeId a) {
    const Tensor& x = val(a);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    return push(Op::kMean, a, -1, Tensor::scalar(s / static_cast<double>(x.size())));
  }

  NodeId squared_norm(NodeId a) {
    const Tensor& x = val(a);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * x[i];
    return push(Op::kSquaredNorm, a, -1, Tensor::scalar(s));
  }

  // --- compositions (no new primitives on the tape) ---
  NodeId neg(NodeId a) { return mul(a, constant_scalar(-1.0)); }
  NodeId sub(NodeId a, NodeId b) { return add(a, neg(b)); }
  NodeId scale(NodeId a, double s) { return mul(a, constant_scalar(s)); }
  NodeId shift(NodeId a, double s) { return add(a, constant_scalar(s)); }
  NodeId sqrt(NodeId a) { return exp(scale(log(a), 0.5)); }

  const Tensor& val(NodeId id) const { return nodes_[check(id)].val; }
  const Node& node(NodeId id) const { return nodes_[check(id)]; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeId>& params() const { return params_; }

  // Reverse sweep from a scalar loss. Every tracked parameter gets an entry;
  // parameters the loss never touched get zeros.
  GradMap grad(NodeId loss) const {
    require(val(loss).is_scalar(), "grad: loss must be a scalar node");
    std::vector<Tensor> adj(nodes_.size());
    std::vector<bool> seeded(nodes_.size(), false);
    adj[loss] = Tensor::scalar(1.0);
    seeded[loss] = true;
    for (NodeId id = loss; id >= 0; --id) {
      if (!seeded[id] || !nodes_[id].needs_grad) continue;
      backward_one(id, adj, seeded);
    }
    GradMap out;
    for (NodeId p : params_) {
      if (seeded[p])
        out.emplace(p, std::move(adj[p]));
      else
        out.emplace(p, Tensor::zeros(nodes_[p].val.shape()));
    }
    return out;
  }

  // Recompute every node value from the leaves in tape order. Used to check
  // that a topological replay reproduces the forward pass bit-for-bit.
  Tensor replay(NodeId target) const {
    std::vector<Tensor> vals(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      Tape scratch;
      switch (n.op) {
        case Op::kLeaf: vals[i] = n.val; break;
        case Op::kAdd: vals[i] = scratch.val(scratch.add(scratch.constant(vals[n.a]), scratch.constant(vals[n.b]))); break;
        case Op::kMul: vals[i] = scratch.val(scratch.mul(scratch.constant(vals[n.a]), scratch.constant(vals[n.b]))); break;
        case Op::kMatMul: vals[i] = scratch.val(scratch.matmul(scratch.constant(vals[n.a]), scratch.constant(vals[n.b]))); break;
        case Op::kExp: vals[i] = scratch.val(scratch.exp(scratch.constant(vals[n.a]))); break;
        case Op::kLog: vals[i] = scratch.val(scratch.log(scratch.constant(vals[n.a]))); break;
        case Op::kTanh: vals[i] = scratch.val(scratch.tanh(scratch.constant(vals[n.a]))); break;
        case Op::kSoftplus: vals[i] = scratch.val(scratch.softplus(scratch.constant(vals[n.a]))); break;
        case Op::kSigmoid: vals[i] = scratch.val(scratch.sigmoid(scratch.constant(vals[n.a]))); break;
        case Op::kSum: vals[i] = scratch.val(scratch.sum(scratch.constant(vals[n.a]))); break;
        case Op::kMean: vals[i] = scratch.val(scratch.mean(scratch.constant(vals[n.a]))); break;
        case Op::kSquaredNorm: vals[i] = scratch.val(scratch.squared_norm(scratch.constant(vals[n.a]))); break;
      }
    }
    return vals[check(target)];
  }

 private:
  template <typename F>
  NodeId unary(Op op, NodeId a, F f) {
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(out[i]);
    return push(op, a, -1, std::move(out));
  }

  NodeId push(Op op, int a, int b, Tensor val, bool force_grad = false) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.needs_grad = force_grad || (a >= 0 && nodes_[a].needs_grad) || (b >= 0 && nodes_[b].needs_grad);
    n.val = std::move(val);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  int check(NodeId id) const {
    require(id >= 0 && id < static_cast<NodeId>(nodes_.size()), "Tape: bad node id");
    return id;
  }

  void accum(std::vector<Tensor>& adj, std::vector<bool>& seeded, NodeId id, const Tensor& g) const {
    if (!nodes_[id].needs_grad) return;
    if (!seeded[id]) {
      adj[id] = Tensor::zeros(nodes_[id].val.shape());
      seeded[id] = true;
    }
    Tensor& dst = adj[id];
    const Tensor& x = nodes_[id].val;
    if (g.same_shape(x)) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
      return;
    }
    // Broadcast adjoints: reduce g back onto the smaller operand shape.
    if (x.is_scalar()) {
      double s = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
      dst[0] += s;
      return;
    }
    if (x.rank() == 1 && g.rank() == 2 && g.cols() == x.cols()) {
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) dst[c] += g.at(r, c);
      return;
    }
    throw ContractViolation("accum: unexpected adjoint shape");
  }

  void backward_one(NodeId id, std::vector<Tensor>& adj, std::vector<bool>& seeded) const {
    const Node& n = nodes_[id];
    if (n.op == Op::kLeaf) return;
    const Tensor& g = adj[id];
    const Tensor& out = n.val;
    switch (n.op) {
      case Op::kAdd: {
        accum(adj, seeded, n.a, g);
        accum(adj, seeded, n.b, g);
        break;
      }
      case Op::kMul: {
        const Tensor& x = nodes_[n.a].val;
        const Tensor& y = nodes_[n.b].val;
        if (nodes_[n.a].needs_grad) accum(adj, seeded, n.a, hadamard_or_scale(g, y));
        if (nodes_[n.b].needs_grad) accum(adj, seeded, n.b, hadamard_or_scale(g, x));
        break;
      }
      case Op::kMatMul: {
        const Tensor& x = nodes_[n.a].val;
        const Tensor& y = nodes_[n.b].val;
        const int r = x.rows(), k = x.cols(), c = y.cols();
        if (nodes_[n.a].needs_grad) {
          Tensor gx({r, k});
          for (int i = 0; i < r; ++i)
            for (int kk = 0; kk < k; ++kk) {
              double s = 0.0;
              const double* gi = g.data() + static_cast<std::size_t>(i) * c;
              const double* yk = y.data() + static_cast<std::size_t>(kk) * c;
              for (int j = 0; j < c; ++j) s += gi[j] * yk[j];
              gx.at(i, kk) = s;
            }
          accum(adj, seeded, n.a, gx);
        }
        if (nodes_[n.b].needs_grad) {
          Tensor gy({k, c});
          for (int i = 0; i < r; ++i) {
            const double* xi = x.data() + static_cast<std::size_t>(i) * k;
            const double* gi = g.data() + static_cast<std::size_t>(i) * c;
            for (int kk = 0; kk < k; ++kk) {
              const double xv = xi[kk];
              double* yk = gy.data() + static_cast<std::size_t>(kk) * c;
              for (int j = 0; j < c; ++j) yk[j] += xv * gi[j];
            }
          }
          accum(adj, seeded, n.b, gy);
        }
        break;
      }
      case Op::kExp: {
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= out[i];
        accum(adj, seeded, n.a, gx);
        break;
      }
      case Op::kLog: {
        const Tensor& x = nodes_[n.a].val;
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] /= x[i];
        accum(adj, seeded, n.a, gx);
        break;
      }
      case Op::kTanh: {
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= 1.0 - out[i] * out[i];
        accum(adj, seeded, n.a, gx);
        break;
      }
      case Op::kSoftplus: {
        const Tensor& x = nodes_[n.a].val;
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= detail::stable_sigmoid(x[i]);
        accum(adj, seeded, n.a, gx);
        break;
      }
      case Op::kSigmoid: {
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= out[i] * (1.0 - out[i]);
        accum(adj, seeded, n.a, gx);
        break;
      }
      case Op::kSum: {
        Tensor gx = Tensor::full(nodes_[n.a].val.shape(), g[0]);
        accum(adj, seeded, n.a, gx);
        break;
      }
      case Op::kMean: {
        const double s = g[0] / static_cast<double>(nodes_[n.a].val.size());
        Tensor gx = Tensor::full(nodes_[n.a].val.shape(), s);
        accum(adj, seeded, n.a, gx);
        break;
      }
      case Op::kSquaredNorm: {
        const Tensor& x = nodes_[n.a].val;
        Tensor gx(x.shape());
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = 2.0 * x[i] * g[0];
        accum(adj, seeded, n.a, gx);
        break;
      }
      case Op::kLeaf: break;
    }
  }

  static Tensor hadamard_or_scale(const Tensor& g, const Tensor& other) {
    if (g.same_shape(other)) {
      Tensor out = g;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= other[i];
      return out;
    }
    if (other.is_scalar()) {
      Tensor out = g;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= other[0];
      return out;
    }
    throw ContractViolation("mul backward: unsupported broadcast");
  }

  std::vector<Node> nodes_;
  std::vector<NodeId> params_;
};

using NodeId = Tape::NodeId;

}  // namespace difflab
