#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace centaur::autodiff {

struct MlpSpec {
  int in = 0, h1 = 0, h2 = 0, out = 0;

  int param_count() const { return h1 * in + h1 + h2 * h1 + h2 + out * h2 + out; }
  // Flat layout: W1 (h1 x in, row-major), b1, W2 (h2 x h1), b2, W3 (out x h2), b3.
  int w1_off() const { return 0; }
  int b1_off() const { return h1 * in; }
  int w2_off() const { return b1_off() + h1; }
  int b2_off() const { return w2_off() + h2 * h1; }
  int w3_off() const { return b2_off() + h2; }
  int b3_off() const { return w3_off() + out * h2; }

  bool operator==(const MlpSpec&) const = default;
};

// Two tanh hidden layers, linear output. `raw` gets the pre-activation
// outputs; callers apply output nonlinearities themselves. h1/h2 receive the
// post-tanh activations (needed for the reverse pass).
void mlp_forward_core(const MlpSpec& spec, const double* theta, const double* input,
                      double* h1, double* h2, double* raw);

// Accumulates d(loss)/d(theta) into dtheta given d(loss)/d(raw).
void mlp_backward_core(const MlpSpec& spec, const double* theta, const double* input,
                       const double* h1, const double* h2, const double* draw,
                       double* dtheta);

double stable_sigmoid(double x);
double stable_softplus(double x);
double digamma(double x);  // x > 0

// Reverse-mode tape over scalars, with the MLP available as a fused
// primitive so that batched network evaluations do not explode the node
// count. Children always precede parents, so one reverse sweep suffices.
class Tape {
 public:
  struct Var {
    int i = -1;
  };

  Var constant(double v) { return push(Op::kConst, v, -1, -1); }
  Var leaf(double v) { return push(Op::kLeaf, v, -1, -1); }

  double val(Var v) const { return nodes_[static_cast<std::size_t>(v.i)].val; }
  double grad(Var v) const { return nodes_[static_cast<std::size_t>(v.i)].grad; }

  Var add(Var a, Var b) { return push(Op::kAdd, val(a) + val(b), a.i, b.i); }
  Var sub(Var a, Var b) { return push(Op::kSub, val(a) - val(b), a.i, b.i); }
  Var mul(Var a, Var b) { return push(Op::kMul, val(a) * val(b), a.i, b.i); }
  Var div(Var a, Var b) { return push(Op::kDiv, val(a) / val(b), a.i, b.i); }
  Var neg(Var a) { return push(Op::kNeg, -val(a), a.i, -1); }
  Var add_const(Var a, double c) { return push(Op::kAddC, val(a) + c, a.i, -1, c); }
  Var mul_const(Var a, double c) { return push(Op::kMulC, val(a) * c, a.i, -1, c); }
  Var log(Var a);
  Var exp(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var sqrt(Var a);
  Var abs(Var a);
  Var lgamma(Var a);
  // max(a, floor) with zero gradient on the clamped branch.
  Var clamp_min(Var a, double floor);

  Var sum(std::span<const Var> vs);

  struct ParamBlock {
    int base = -1;
    MlpSpec spec;
  };

  // Registers theta as a contiguous block of leaves.
  ParamBlock register_params(const MlpSpec& spec, std::span<const double> theta);

  // Emits spec.out vars carrying the raw MLP outputs for one input row.
  // Inputs are treated as constants (frozen featurizers).
  std::vector<Var> mlp_raw(const ParamBlock& params, std::span<const double> input);

  // Seeds d(root) = 1 and sweeps in reverse creation order. Throws
  // Error("non-finite-loss") if the root value is not finite.
  void backward(Var root);

  // Gradient of the last backward() w.r.t. a registered param block.
  std::vector<double> param_gradient(const ParamBlock& params) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : unsigned char {
    kConst,
    kLeaf,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kNeg,
    kAddC,
    kMulC,
    kLog,
    kExp,
    kTanh,
    kSigmoid,
    kSoftplus,
    kSqrt,
    kAbs,
    kLgamma,
    kClampMin,
    kMlpOut,
  };

  struct Node {
    double val = 0.0;
    double grad = 0.0;
    int a = -1, b = -1;
    double aux = 0.0;
    Op op = Op::kConst;
  };

  struct MlpRecord {
    MlpSpec spec;
    int param_base = -1;
    int out_base = -1;
    std::vector<double> input, h1, h2;
  };

  Var push(Op op, double v, int a, int b, double aux = 0.0) {
    nodes_.push_back(Node{v, 0.0, a, b, aux, op});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::vector<MlpRecord> records_;
};

}  // namespace centaur::autodiff
