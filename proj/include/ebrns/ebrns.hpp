#pragma once

// The learned fixed-interval smoother. A forward recurrent gate network
// drives a Gaussian filter: a memory update gate advances a memory vector
// from the previous filtered state, a trend gate turns the memory into an
// additive mean trend plus diagonal covariance inflation for the time
// update, and the measurement update is classical. The backward pass mirrors
// it: a backward memory iterates from the end of the sequence (seeded with
// the terminal forward memory), a backward trend gate retargets the backward
// prediction, and the smoothing identity combines it with the stored forward
// quantities. Everything runs on the autodiff tape, so training backpropagates
// through the full recursion; inference just never calls backward. In nominal
// mode the gates are bypassed (zero trend, no inflation), which reduces the
// whole machine exactly to the classical filter/smoother - the oracle tests
// pin that reduction.

#include <vector>

#include "ebrns/classic.hpp"
#include "ebrns/gates.hpp"
#include "ebrns/mat.hpp"
#include "ebrns/model.hpp"
#include "ebrns/tape.hpp"

namespace ebrns {

struct MemoryBelief {
  Mat mean;        // d_c x 1
  Mat sigma_diag;  // d_c x 1, diagonal of the memory covariance
};

enum class EbrnsMode { Filter, Smooth };

// Tape handles for one step of the sequence.
struct EbrnsStepVars {
  Var pred_mean, pred_cov;       // forward prediction into this step (k=0: init)
  Var filt_mean, filt_cov;
  Var innovation;                // invalid at k=0
  Var f_jac;                     // Jacobian used predicting into this step; I at k=0
  Var mem_mean, mem_sigma;       // forward memory after this step
  Var trend_delta, trend_sigma;  // forward trend applied predicting into this step (k>=1)
  Var smooth_mean, smooth_cov;   // smoothing pass (Smooth mode)
  Var bmem_mean, bmem_sigma;     // backward memory at this step (Smooth mode)
  Var btrend_delta, btrend_sigma;  // backward trend at this step (k>=1, Smooth mode)
};

struct EbrnsRunVars {
  std::vector<EbrnsStepVars> steps;
  EbrnsMode mode = EbrnsMode::Filter;
  bool nominal = false;
  int length() const { return static_cast<int>(steps.size()); }
};

// One forward step k (>= 1): memory update from the previous filtered state,
// trend from the new memory, time update with the trend folded in, classical
// measurement update. nominal skips the gates (zero trend).
struct FrgnStepOut {
  Var mem_mean, mem_sigma;
  Var trend_delta, trend_sigma;
  Var pred_mean, pred_cov;
  Var filt_mean, filt_cov;
  Var innovation;
  Var f_jac;
};
FrgnStepOut frgn_step(Tape& t, const BankVars& bank, const StateSpaceModel& m, Var prev_filt_mean,
                      Var prev_filt_cov, Var prev_mem_mean, Var prev_mem_sigma, const Mat& z_k,
                      int k, bool nominal);

// One backward step: smooth frame k given frame k+1's stored forward
// prediction, its smoothed belief and the backward memory. Emits the
// smoothed belief at k, the backward memory advanced to k, and the backward
// trend it applied at k+1.
struct BrgnStepOut {
  Var smooth_mean, smooth_cov;
  Var bmem_mean, bmem_sigma;
  Var btrend_delta, btrend_sigma;
};
BrgnStepOut brgn_step(Tape& t, const BankVars& bank, const StateSpaceModel& m, Var filt_mean_k,
                      Var filt_cov_k, Var pred_mean_next, Var pred_cov_next, Var f_jac_next,
                      Var smooth_mean_next, Var smooth_cov_next, Var bmem_mean_next,
                      Var bmem_sigma_next, bool nominal);

// Full pass. Frame 0 is the initial belief (memory starts at mean zero,
// unit diagonal); filtering covers frames 1..K-1; in Smooth mode the
// backward sweep runs K-2..0 after seeding the backward memory at K-1 with
// the terminal forward memory (bit-equal). K must be >= 2.
EbrnsRunVars run_ebrns_taped(Tape& t, const BankVars& bank, const StateSpaceModel& m,
                             const std::vector<Mat>& z, const GaussianBelief& init,
                             EbrnsMode mode, bool nominal);

// Plain-Mat snapshot of a run (owns its tape internally): inference surface.
struct EbrnsSequence {
  std::vector<GaussianBelief> predicted, filtered, smoothed;
  std::vector<MemoryBelief> forward_memory, backward_memory;
  std::vector<TrendEstimate> forward_trend, backward_trend;  // index-aligned; frame 0 zero
  int length() const { return static_cast<int>(filtered.size()); }
};
EbrnsSequence run_ebrns(const GateBank& bank, const StateSpaceModel& m, const std::vector<Mat>& z,
                        const GaussianBelief& init, EbrnsMode mode, bool nominal);

// Snapshot extraction from an existing taped run.
EbrnsSequence snapshot(const Tape& t, const EbrnsRunVars& run);

}  // namespace ebrns
