#include "centaur/autodiff.hpp"

#include <cmath>

#include "centaur/error.hpp"

namespace centaur::autodiff {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return (x > 0.0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double digamma(double x) {
  // Recurrence up into the asymptotic regime, then the standard expansion.
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
  return result;
}

void mlp_forward_core(const MlpSpec& spec, const double* theta, const double* input,
                      double* h1, double* h2, double* raw) {
  const double* w1 = theta + spec.w1_off();
  const double* b1 = theta + spec.b1_off();
  const double* w2 = theta + spec.w2_off();
  const double* b2 = theta + spec.b2_off();
  const double* w3 = theta + spec.w3_off();
  const double* b3 = theta + spec.b3_off();

  for (int i = 0; i < spec.h1; ++i) {
    double acc = b1[i];
    const double* row = w1 + i * spec.in;
    for (int j = 0; j < spec.in; ++j) acc += row[j] * input[j];
    h1[i] = std::tanh(acc);
  }
  for (int i = 0; i < spec.h2; ++i) {
    double acc = b2[i];
    const double* row = w2 + i * spec.h1;
    for (int j = 0; j < spec.h1; ++j) acc += row[j] * h1[j];
    h2[i] = std::tanh(acc);
  }
  for (int i = 0; i < spec.out; ++i) {
    double acc = b3[i];
    const double* row = w3 + i * spec.h2;
    for (int j = 0; j < spec.h2; ++j) acc += row[j] * h2[j];
    raw[i] = acc;
  }
}

void mlp_backward_core(const MlpSpec& spec, const double* theta, const double* input,
                       const double* h1, const double* h2, const double* draw,
                       double* dtheta) {
  const double* w2 = theta + spec.w2_off();
  const double* w3 = theta + spec.w3_off();
  double* gw1 = dtheta + spec.w1_off();
  double* gb1 = dtheta + spec.b1_off();
  double* gw2 = dtheta + spec.w2_off();
  double* gb2 = dtheta + spec.b2_off();
  double* gw3 = dtheta + spec.w3_off();
  double* gb3 = dtheta + spec.b3_off();

  // Output layer is linear: d(raw_i) flows straight into W3/b3.
  std::vector<double> dh2(static_cast<std::size_t>(spec.h2), 0.0);
  for (int i = 0; i < spec.out; ++i) {
    const double g = draw[i];
    if (g == 0.0) continue;
    double* grow = gw3 + i * spec.h2;
    const double* row = w3 + i * spec.h2;
    for (int j = 0; j < spec.h2; ++j) {
      grow[j] += g * h2[j];
      dh2[static_cast<std::size_t>(j)] += g * row[j];
    }
    gb3[i] += g;
  }

  std::vector<double> dh1(static_cast<std::size_t>(spec.h1), 0.0);
  for (int i = 0; i < spec.h2; ++i) {
    const double g = dh2[static_cast<std::size_t>(i)] * (1.0 - h2[i] * h2[i]);
    if (g == 0.0) continue;
    double* grow = gw2 + i * spec.h1;
    const double* row = w2 + i * spec.h1;
    for (int j = 0; j < spec.h1; ++j) {
      grow[j] += g * h1[j];
      dh1[static_cast<std::size_t>(j)] += g * row[j];
    }
    gb2[i] += g;
  }

  for (int i = 0; i < spec.h1; ++i) {
    const double g = dh1[static_cast<std::size_t>(i)] * (1.0 - h1[i] * h1[i]);
    if (g == 0.0) continue;
    double* grow = gw1 + i * spec.in;
    for (int j = 0; j < spec.in; ++j) grow[j] += g * input[j];
    gb1[i] += g;
  }
}

Tape::Var Tape::log(Var a) { return push(Op::kLog, std::log(val(a)), a.i, -1); }
Tape::Var Tape::exp(Var a) { return push(Op::kExp, std::exp(val(a)), a.i, -1); }
Tape::Var Tape::tanh(Var a) { return push(Op::kTanh, std::tanh(val(a)), a.i, -1); }
Tape::Var Tape::sigmoid(Var a) { return push(Op::kSigmoid, stable_sigmoid(val(a)), a.i, -1); }
Tape::Var Tape::softplus(Var a) {
  return push(Op::kSoftplus, stable_softplus(val(a)), a.i, -1);
}
Tape::Var Tape::sqrt(Var a) { return push(Op::kSqrt, std::sqrt(val(a)), a.i, -1); }
Tape::Var Tape::abs(Var a) { return push(Op::kAbs, std::fabs(val(a)), a.i, -1); }
Tape::Var Tape::lgamma(Var a) { return push(Op::kLgamma, std::lgamma(val(a)), a.i, -1); }
Tape::Var Tape::clamp_min(Var a, double floor) {
  const double v = val(a);
  return push(Op::kClampMin, v > floor ? v : floor, a.i, -1, floor);
}

Tape::Var Tape::sum(std::span<const Var> vs) {
  if (vs.empty()) return constant(0.0);
  Var acc = vs[0];
  for (std::size_t i = 1; i < vs.size(); ++i) acc = add(acc, vs[i]);
  return acc;
}

Tape::ParamBlock Tape::register_params(const MlpSpec& spec, std::span<const double> theta) {
  require(static_cast<int>(theta.size()) == spec.param_count(), "shape-mismatch",
          "parameter vector does not match MLP layout");
  ParamBlock block;
  block.base = static_cast<int>(nodes_.size());
  block.spec = spec;
  nodes_.reserve(nodes_.size() + theta.size());
  for (double v : theta) push(Op::kLeaf, v, -1, -1);
  return block;
}

std::vector<Tape::Var> Tape::mlp_raw(const ParamBlock& params, std::span<const double> input) {
  const MlpSpec& spec = params.spec;
  require(static_cast<int>(input.size()) == spec.in, "shape-mismatch",
          "MLP input size mismatch");

  MlpRecord rec;
  rec.spec = spec;
  rec.param_base = params.base;
  rec.input.assign(input.begin(), input.end());
  rec.h1.resize(static_cast<std::size_t>(spec.h1));
  rec.h2.resize(static_cast<std::size_t>(spec.h2));
  std::vector<double> raw(static_cast<std::size_t>(spec.out));

  // Parameter values live in the leaf block, contiguously in layout order.
  std::vector<double> theta(static_cast<std::size_t>(spec.param_count()));
  for (int i = 0; i < spec.param_count(); ++i) {
    theta[static_cast<std::size_t>(i)] = nodes_[static_cast<std::size_t>(rec.param_base + i)].val;
  }
  mlp_forward_core(spec, theta.data(), rec.input.data(), rec.h1.data(), rec.h2.data(),
                   raw.data());

  rec.out_base = static_cast<int>(nodes_.size());
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(spec.out));
  const int rec_index = static_cast<int>(records_.size());
  for (int i = 0; i < spec.out; ++i) {
    outs.push_back(push(Op::kMlpOut, raw[static_cast<std::size_t>(i)], rec_index, i));
  }
  records_.push_back(std::move(rec));
  return outs;
}

void Tape::backward(Var root) {
  require(root.i >= 0 && root.i < static_cast<int>(nodes_.size()), "shape-mismatch",
          "backward root is not on this tape");
  require(std::isfinite(nodes_[static_cast<std::size_t>(root.i)].val), "non-finite-loss",
          "loss value is not finite");
  for (Node& n : nodes_) n.grad = 0.0;
  nodes_[static_cast<std::size_t>(root.i)].grad = 1.0;

  std::vector<double> theta_scratch;
  for (int i = root.i; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    const double g = n.grad;
    switch (n.op) {
      case Op::kConst:
      case Op::kLeaf:
        break;
      case Op::kAdd:
        nodes_[static_cast<std::size_t>(n.a)].grad += g;
        nodes_[static_cast<std::size_t>(n.b)].grad += g;
        break;
      case Op::kSub:
        nodes_[static_cast<std::size_t>(n.a)].grad += g;
        nodes_[static_cast<std::size_t>(n.b)].grad -= g;
        break;
      case Op::kMul:
        nodes_[static_cast<std::size_t>(n.a)].grad += g * nodes_[static_cast<std::size_t>(n.b)].val;
        nodes_[static_cast<std::size_t>(n.b)].grad += g * nodes_[static_cast<std::size_t>(n.a)].val;
        break;
      case Op::kDiv: {
        const double va = nodes_[static_cast<std::size_t>(n.a)].val;
        const double vb = nodes_[static_cast<std::size_t>(n.b)].val;
        nodes_[static_cast<std::size_t>(n.a)].grad += g / vb;
        nodes_[static_cast<std::size_t>(n.b)].grad -= g * va / (vb * vb);
        break;
      }
      case Op::kNeg:
        nodes_[static_cast<std::size_t>(n.a)].grad -= g;
        break;
      case Op::kAddC:
        nodes_[static_cast<std::size_t>(n.a)].grad += g;
        break;
      case Op::kMulC:
        nodes_[static_cast<std::size_t>(n.a)].grad += g * n.aux;
        break;
      case Op::kLog:
        nodes_[static_cast<std::size_t>(n.a)].grad += g / nodes_[static_cast<std::size_t>(n.a)].val;
        break;
      case Op::kExp:
        nodes_[static_cast<std::size_t>(n.a)].grad += g * n.val;
        break;
      case Op::kTanh:
        nodes_[static_cast<std::size_t>(n.a)].grad += g * (1.0 - n.val * n.val);
        break;
      case Op::kSigmoid:
        nodes_[static_cast<std::size_t>(n.a)].grad += g * n.val * (1.0 - n.val);
        break;
      case Op::kSoftplus:
        nodes_[static_cast<std::size_t>(n.a)].grad +=
            g * stable_sigmoid(nodes_[static_cast<std::size_t>(n.a)].val);
        break;
      case Op::kSqrt:
        nodes_[static_cast<std::size_t>(n.a)].grad += g / (2.0 * n.val);
        break;
      case Op::kAbs: {
        const double va = nodes_[static_cast<std::size_t>(n.a)].val;
        nodes_[static_cast<std::size_t>(n.a)].grad += g * (va > 0.0 ? 1.0 : (va < 0.0 ? -1.0 : 0.0));
        break;
      }
      case Op::kLgamma:
        nodes_[static_cast<std::size_t>(n.a)].grad +=
            g * digamma(nodes_[static_cast<std::size_t>(n.a)].val);
        break;
      case Op::kClampMin:
        if (nodes_[static_cast<std::size_t>(n.a)].val > n.aux) {
          nodes_[static_cast<std::size_t>(n.a)].grad += g;
        }
        break;
      case Op::kMlpOut: {
        // The record's outputs are contiguous; run the fused reverse pass
        // once, when the sweep reaches output 0.
        if (n.b != 0) break;
        const MlpRecord& rec = records_[static_cast<std::size_t>(n.a)];
        const int pc = rec.spec.param_count();
        theta_scratch.resize(static_cast<std::size_t>(pc));
        for (int p = 0; p < pc; ++p) {
          theta_scratch[static_cast<std::size_t>(p)] =
              nodes_[static_cast<std::size_t>(rec.param_base + p)].val;
        }
        std::vector<double> draw(static_cast<std::size_t>(rec.spec.out));
        for (int o = 0; o < rec.spec.out; ++o) {
          draw[static_cast<std::size_t>(o)] =
              nodes_[static_cast<std::size_t>(rec.out_base + o)].grad;
        }
        std::vector<double> dtheta(static_cast<std::size_t>(pc), 0.0);
        mlp_backward_core(rec.spec, theta_scratch.data(), rec.input.data(), rec.h1.data(),
                          rec.h2.data(), draw.data(), dtheta.data());
        for (int p = 0; p < pc; ++p) {
          nodes_[static_cast<std::size_t>(rec.param_base + p)].grad +=
              dtheta[static_cast<std::size_t>(p)];
        }
        break;
      }
    }
  }
}

std::vector<double> Tape::param_gradient(const ParamBlock& params) const {
  const int pc = params.spec.param_count();
  std::vector<double> grad(static_cast<std::size_t>(pc));
  for (int i = 0; i < pc; ++i) {
    grad[static_cast<std::size_t>(i)] = nodes_[static_cast<std::size_t>(params.base + i)].grad;
  }
  return grad;
}

}  // namespace centaur::autodiff
