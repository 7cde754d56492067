#pragma once

// Classical Gaussian fixed-interval estimation: extended Kalman filter and
// Rauch-Tung-Striebel smoother with first-order (Taylor) linearization.
// Runs eagerly on Mat. The predict and smooth steps optionally accept an
// additive trend (mean shift + diagonal covariance inflation); with no trend
// they are exactly the classical recursions, which is what makes this module
// the oracle for the learned smoother's zero-trend mode.

#include <optional>
#include <vector>

#include "ebrns/mat.hpp"
#include "ebrns/model.hpp"

namespace ebrns {

struct GaussianBelief {
  Mat mean;  // n x 1
  Mat cov;   // n x n, kept symmetric by construction
};

// Additive trend: mean offset delta (n x 1) and diagonal covariance
// inflation sigma_diag (n x 1, entrywise >= 0).
struct TrendEstimate {
  Mat delta;
  Mat sigma_diag;
};

// One-step time update through the model (Jacobian evaluated at the input
// mean):  mean' = f(mean) + delta,  cov' = F cov F^T + Q + diag(sigma).
// The result covariance is explicitly symmetrized.
GaussianBelief ekf_predict(const GaussianBelief& b, const StateSpaceModel& m, int k,
                           const TrendEstimate* trend = nullptr);

struct UpdateResult {
  GaussianBelief belief;
  Mat innovation;  // z - h(pred_mean), angle rows wrapped to (-pi, pi]
  Mat innov_cov;   // S = H P H^T + R
  Mat cross_cov;   // P H^T
};

// Measurement update:  x + P H^T S^{-1} v,  P - P H^T S^{-1} H P, all linear
// solves through the SPD factorization (no explicit inverse, no Joseph form).
UpdateResult ekf_update(const GaussianBelief& pred, const Mat& z, const StateSpaceModel& m, int k);

// One backward smoothing step from k+1 to k. pred_next / f_next are the
// forward prediction into k+1 and the transition Jacobian used to make it.
// backward_trend, when present, retargets the backward prediction:
//   xb = pred_next.mean + delta,  Pb = pred_next.cov + diag(sigma),
// and the gain is G = filtered.cov * f_next^T * Pb^{-1}.
GaussianBelief rts_smooth_step(const GaussianBelief& filtered_k, const GaussianBelief& pred_next,
                               const GaussianBelief& smoothed_next, const Mat& f_next,
                               const TrendEstimate* backward_trend = nullptr);

enum class RunMode { Filter, Smooth };

struct StepRecord {
  GaussianBelief predicted;  // k = 0 holds the initial belief
  GaussianBelief filtered;
  Mat innovation;            // zeros at k = 0
  Mat f_jac;                 // Jacobian used predicting into this step; I at k = 0
};

struct SequenceCache {
  std::vector<StepRecord> steps;          // size K
  std::vector<GaussianBelief> smoothed;   // size K in Smooth mode, else empty
  int length() const { return static_cast<int>(steps.size()); }
};

// Full pass over a measurement sequence. Frame 0 is handled by the supplied
// initial belief (z[0] is consumed by whoever built `init`, not re-used);
// filtering runs over frames 1..K-1; smoothing sweeps K-2..0 with
// smoothed[K-1] = filtered[K-1]. K must be at least 2.
SequenceCache run_classic(const StateSpaceModel& m, const std::vector<Mat>& z,
                          const GaussianBelief& init, RunMode mode);

// Initial belief from the first measurement via the model's init policy.
GaussianBelief default_init(const StateSpaceModel& m, const Mat& z0);

}  // namespace ebrns
