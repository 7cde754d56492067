#pragma once

// Brute-force fixed-interval smoothing oracle for LINEAR Gaussian models:
// assemble the joint Gaussian over the stacked trajectory x_{0:K-1}, condition
// on the stacked measurements z_{1:K-1} in one shot, and read the marginal
// mean/cov per step. Independent of the recursive estimators - the only
// shared code is the Mat primitives - so it can arbitrate them.

#include <vector>

#include "ebrns/classic.hpp"
#include "ebrns/mat.hpp"
#include "ebrns/model.hpp"

namespace ebrns::test {

struct JointSmoothResult {
  std::vector<Mat> mean;  // per step, n x 1
  std::vector<Mat> cov;   // per step, n x n
};

// m must be linear (uses jac_f/jac_h as the exact system matrices). The
// initial belief plays the role of the frame-0 prior; z[0] is ignored to
// mirror the recursive convention (frame 0 is the initial belief).
inline JointSmoothResult joint_gaussian_smooth(const StateSpaceModel& m,
                                               const std::vector<Mat>& z,
                                               const GaussianBelief& init) {
  const int kk = static_cast<int>(z.size());
  const int n = m.state_dim();
  const int nz = m.meas_dim();
  const Mat f = m.jac_f(init.mean, 1);
  const Mat h = m.jac_h(init.mean, 1);

  // Joint prior over the stacked trajectory.
  Mat mu(n * kk, 1);
  Mat sig(n * kk, n * kk);
  set_block(mu, 0, 0, init.mean);
  set_block(sig, 0, 0, init.cov);
  for (int k = 1; k < kk; ++k) {
    set_block(mu, n * k, 0, matmul(f, block(mu, n * (k - 1), 0, n, 1)));
    // Diagonal block: F Sig_{k-1,k-1} F^T + Q.
    Mat prev = block(sig, n * (k - 1), n * (k - 1), n, n);
    set_block(sig, n * k, n * k, add(matmul(matmul(f, prev), transpose(f)), m.process_noise()));
    // Cross blocks: Sig_{j,k} = Sig_{j,k-1} F^T for all j < k.
    for (int j = 0; j < k; ++j) {
      Mat cross = matmul(block(sig, n * j, n * (k - 1), n, n), transpose(f));
      set_block(sig, n * j, n * k, cross);
      set_block(sig, n * k, n * j, transpose(cross));
    }
  }

  // Stacked observation operator for z_{1:K-1}.
  const int mz = nz * (kk - 1);
  Mat hbig(mz, n * kk);
  Mat rbig(mz, mz);
  Mat zstack(mz, 1);
  for (int k = 1; k < kk; ++k) {
    set_block(hbig, nz * (k - 1), n * k, h);
    set_block(rbig, nz * (k - 1), nz * (k - 1), m.meas_noise());
    set_block(zstack, nz * (k - 1), 0, z[k]);
  }

  // Condition: mu + Sig H^T S^{-1} (z - H mu), Sig - Sig H^T S^{-1} H Sig.
  Mat sht = matmul(sig, transpose(hbig));
  Mat s = sym(add(matmul(hbig, sht), rbig));
  CholFactor sf = chol_factor(s);
  Mat resid = sub(zstack, matmul(hbig, mu));
  Mat post_mu = add(mu, matmul(sht, chol_solve(sf, resid)));
  Mat post_sig = sym(sub(sig, matmul(sht, chol_solve(sf, transpose(sht)))));

  JointSmoothResult res;
  for (int k = 0; k < kk; ++k) {
    res.mean.push_back(block(post_mu, n * k, 0, n, 1));
    res.cov.push_back(block(post_sig, n * k, n * k, n, n));
  }
  return res;
}

}  // namespace ebrns::test
