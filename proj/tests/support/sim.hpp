#pragma once

// Trajectory simulation straight from a state-space model: the data the
// model believes in, with no extra structure. Used by oracle-style tests
// (a correctly specified model makes the classical estimators optimal).

#include <vector>

#include "ebrns/mat.hpp"
#include "ebrns/model.hpp"
#include "ebrns/rng.hpp"

namespace ebrns::test {

struct SimTraj {
  std::vector<Mat> x;  // true states
  std::vector<Mat> z;  // measurements
};

inline SimTraj simulate_from_model(const StateSpaceModel& m, const Mat& x0, int k_len, Rng& rng) {
  SimTraj tr;
  const CholFactor qf = chol_factor(m.process_noise());
  Mat x = x0;
  for (int k = 0; k < k_len; ++k) {
    if (k > 0) {
      x = m.f(x, k);
      Mat n(m.state_dim(), 1);
      for (int i = 0; i < n.rows(); ++i) n(i, 0) = rng.normal();
      for (int i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j <= i; ++j) s += qf.l(i, j) * n(j, 0);
        x(i, 0) += s;
      }
    }
    tr.x.push_back(x);
    tr.z.push_back(sample_measurement(m, x, k, rng));
  }
  return tr;
}

}  // namespace ebrns::test
