#include "ebrns/gates.hpp"

#include <cmath>

#include "ebrns/errors.hpp"

namespace ebrns {

namespace {

constexpr double kLogVarClamp = 35.0;

// in/out dims per net index, given n_x and d_c.
void net_dims(int net, int n_x, int d_c, int* in, int* out) {
  const bool memory = (net == kFwdMemMean || net == kFwdMemLogVar || net == kBwdMemMean ||
                       net == kBwdMemLogVar);
  *in = memory ? 2 * d_c + n_x : 2 * d_c;
  *out = memory ? d_c : n_x;
}

Mat draw_uniform(Rng& rng, int rows, int cols, double bound) {
  Mat m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m[i] = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

int GateBank::param_count() const {
  int n = 0;
  for (const MlpParams& p : nets)
    n += p.w1.size() + p.b1.size() + p.w2.size() + p.b2.size();
  return n;
}

GateBank make_gate_bank(int n_x, int d_c, int hidden, Rng& rng) {
  if (n_x < 1 || d_c < 1 || hidden < 1)
    throw ConfigError("make_gate_bank: dims must be positive (n_x=" + std::to_string(n_x) +
                      ", d_c=" + std::to_string(d_c) + ", hidden=" + std::to_string(hidden) + ")");
  GateBank bank;
  bank.n_x = n_x;
  bank.d_c = d_c;
  bank.hidden = hidden;
  for (int net = 0; net < 8; ++net) {
    int in = 0, out = 0;
    net_dims(net, n_x, d_c, &in, &out);
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(in));
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    MlpParams& p = bank.nets[net];
    p.w1 = draw_uniform(rng, hidden, in, bound1);
    p.b1 = draw_uniform(rng, hidden, 1, bound1);
    p.w2 = draw_uniform(rng, out, hidden, bound2);
    p.b2 = draw_uniform(rng, out, 1, bound2);
  }
  return bank;
}

int gate_input_dim(const GateBank& bank, GateNet net) {
  int in = 0, out = 0;
  net_dims(net, bank.n_x, bank.d_c, &in, &out);
  return in;
}

Mat mlp_forward(const MlpParams& p, const Mat& input) {
  if (input.rows() != p.w1.cols() || input.cols() != 1)
    throw DimensionError("mlp_forward: input " + input.shape_str() + " does not match layer " +
                         p.w1.shape_str());
  return add(matmul(p.w2, tanh_ew(add(matmul(p.w1, input), p.b1))), p.b2);
}

BankVars insert_bank(Tape& t, const GateBank& bank, bool fwd_trainable, bool bwd_trainable) {
  BankVars bv;
  bv.n_x = bank.n_x;
  bv.d_c = bank.d_c;
  bv.hidden = bank.hidden;
  for (int net = 0; net < 8; ++net) {
    const bool train = (net < 4) ? fwd_trainable : bwd_trainable;
    bv.trainable[net] = train;
    const MlpParams& p = bank.nets[net];
    NetVars& nv = bv.nets[net];
    if (train) {
      nv.w1 = t.param(p.w1);
      nv.b1 = t.param(p.b1);
      nv.w2 = t.param(p.w2);
      nv.b2 = t.param(p.b2);
    } else {
      nv.w1 = t.constant(p.w1);
      nv.b1 = t.constant(p.b1);
      nv.w2 = t.constant(p.w2);
      nv.b2 = t.constant(p.b2);
    }
  }
  if (bank.has_norm()) {
    Mat inv(bank.n_x, 1);
    for (int i = 0; i < bank.n_x; ++i)
      inv(i, 0) = 1.0 / std::max(std::fabs(bank.norm_scale(i, 0)), 1e-12);
    bv.norm_inv = t.constant(std::move(inv));
  }
  return bv;
}

Var mlp_forward(const NetVars& p, Var input) {
  return add(matmul(p.w2, tanh_ew(add(matmul(p.w1, input), p.b1))), p.b2);
}

Var build_gate_input(GateInputKind kind, const BankVars& bank, Var mem_mean, Var mem_sigma,
                     Var state) {
  Var squashed = sigmoid_ew(vcat(mem_mean, mem_sigma));
  if (kind == GateInputKind::ForwardTrend || kind == GateInputKind::BackwardTrend)
    return squashed;
  if (!state.valid())
    throw ContractError("build_gate_input: memory-gate input needs a state estimate");
  if (!bank.norm_inv.valid())
    throw ConfigError(
        "build_gate_input: normalization statistics missing (bank was never fitted to a "
        "training split)");
  return vcat(squashed, hadamard(state, bank.norm_inv));
}

GatePair eval_gate_pair(const NetVars& mean_net, const NetVars& logvar_net, Var input) {
  GatePair out;
  out.mean = mlp_forward(mean_net, input);
  out.sigma_diag = exp_ew(clamp_ew(mlp_forward(logvar_net, input), -kLogVarClamp, kLogVarClamp));
  return out;
}

std::vector<double> bank_gradient(const Tape& t, const BankVars& bv) {
  std::vector<double> g;
  for (int net = 0; net < 8; ++net) {
    if (!bv.trainable[net]) continue;
    for (Var v : {bv.nets[net].w1, bv.nets[net].b1, bv.nets[net].w2, bv.nets[net].b2}) {
      Mat adj = t.adjoint(v);
      g.insert(g.end(), adj.data(), adj.data() + adj.size());
    }
  }
  return g;
}

std::vector<Mat*> trainable_mats(GateBank& bank, bool fwd, bool bwd) {
  std::vector<Mat*> mats;
  for (int net = 0; net < 8; ++net) {
    const bool train = (net < 4) ? fwd : bwd;
    if (!train) continue;
    MlpParams& p = bank.nets[net];
    mats.push_back(&p.w1);
    mats.push_back(&p.b1);
    mats.push_back(&p.w2);
    mats.push_back(&p.b2);
  }
  return mats;
}

}  // namespace ebrns
