#pragma once

// The eight gate networks driving the learned smoother, bundled with the
// per-dimension normalization statistics they expect. Each net is a two-layer
// perceptron  y = W2 tanh(W1 x + b1) + b2.  Gates come in mean/log-variance
// pairs; variances are produced as exp(clamped log-variance), so they are
// positive by construction and the covariances they inflate stay diagonal.

#include <array>
#include <cstdint>
#include <vector>

#include "ebrns/mat.hpp"
#include "ebrns/rng.hpp"
#include "ebrns/tape.hpp"

namespace ebrns {

struct MlpParams {
  Mat w1, b1, w2, b2;  // w1: H x in, b1: H x 1, w2: out x H, b2: out x 1
};

// Net indices. Memory gates update the memory vector; trend gates emit the
// additive trend. Forward nets feed the filter, backward nets the smoother.
enum GateNet : int {
  kFwdMemMean = 0,
  kFwdMemLogVar = 1,
  kFwdTrendMean = 2,
  kFwdTrendLogVar = 3,
  kBwdMemMean = 4,
  kBwdMemLogVar = 5,
  kBwdTrendMean = 6,
  kBwdTrendLogVar = 7,
};

struct GateBank {
  int n_x = 0;     // state dimension
  int d_c = 0;     // memory dimension
  int hidden = 0;  // perceptron hidden width
  std::array<MlpParams, 8> nets;
  Mat norm_scale;  // n_x x 1 per-dimension max-abs of the training states; empty until fitted

  bool has_norm() const { return norm_scale.rows() == n_x && n_x > 0; }
  int param_count() const;
};

// Fresh bank with every weight and bias drawn U[-1/sqrt(fan_in), +1/sqrt(fan_in)]
// (fan_in of the layer the parameter belongs to). Draw order is fixed: nets
// 0..7, each w1 row-major, then b1, w2, b2.
GateBank make_gate_bank(int n_x, int d_c, int hidden, Rng& rng);

// Gate input dimensionalities: memory gates see sigmoid(concat[c, sigma])
// plus the normalized state (2*d_c + n_x); trend gates see only
// sigmoid(concat[c, sigma]) (2*d_c).
int gate_input_dim(const GateBank& bank, GateNet net);

// Eager evaluation (tests, inspection).
Mat mlp_forward(const MlpParams& p, const Mat& input);

// --- taped side ------------------------------------------------------------

struct NetVars {
  Var w1, b1, w2, b2;
};

struct BankVars {
  std::array<NetVars, 8> nets;
  std::array<bool, 8> trainable{};
  Var norm_inv;  // constant 1/max(|scale|, 1e-12) per dim; invalid when unfitted
  int n_x = 0, d_c = 0, hidden = 0;
};

// Record the bank on a tape. Trainable nets become parameter leaves (gradient
// flows), frozen nets become constants (adjoints identically zero).
BankVars insert_bank(Tape& t, const GateBank& bank, bool fwd_trainable, bool bwd_trainable);

Var mlp_forward(const NetVars& p, Var input);

enum class GateInputKind { ForwardMemory, ForwardTrend, BackwardMemory, BackwardTrend };

// Assemble a gate input. Memory kinds consume the state estimate (normalized
// by the bank statistics; ConfigError if the bank was never fitted); trend
// kinds ignore it.  Layout: [sigmoid(concat[mem_mean, mem_sigma]) ; norm(x)].
Var build_gate_input(GateInputKind kind, const BankVars& bank, Var mem_mean, Var mem_sigma,
                     Var state = {});

// Evaluate a mean/log-variance net pair on a shared input. The log-variance
// head is clamped to +-35 before exponentiation so a wild parameter cannot
// overflow; inside the clamp band gradients are exact.
struct GatePair {
  Var mean;
  Var sigma_diag;  // exp(logvar), entrywise positive
};
GatePair eval_gate_pair(const NetVars& mean_net, const NetVars& logvar_net, Var input);

// Flat gradient over the trainable nets in net-index order, each net
// contributing w1, b1, w2, b2 row-major. Matches trainable_mats().
std::vector<double> bank_gradient(const Tape& t, const BankVars& bv);

// Pointers into the bank's trainable parameter matrices, same order as
// bank_gradient. fwd/bwd select which half is trainable.
std::vector<Mat*> trainable_mats(GateBank& bank, bool fwd, bool bwd);

}  // namespace ebrns
