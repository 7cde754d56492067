#include <cmath>

#include "doctest.h"
#include "ebrns/classic.hpp"
#include "ebrns/errors.hpp"
#include "ebrns/monitor.hpp"
#include "support/joint_oracle.hpp"
#include "support/sim.hpp"
#include "support/test_util.hpp"

using namespace ebrns;

namespace {

std::unique_ptr<StateSpaceModel> rw(double q2 = 1.0, double r2 = 1.0) {
  ModelParams p;
  p.q2 = q2;
  p.r_diag = {r2};
  return make_builtin(BuiltinModelId::RandomWalk1d, p);
}

std::unique_ptr<StateSpaceModel> cv_linear(double dt = 4.0, double q2 = 10.0, double r2 = 100.0) {
  ModelParams p;
  p.dt = dt;
  p.q2 = q2;
  p.r_diag = {r2, r2};
  return make_builtin(BuiltinModelId::Cv2dLinear, p);
}

}  // namespace

TEST_CASE("scalar update: unit prior, unit noise, z=1 gives (0.5, 0.5)") {
  auto m = rw();
  GaussianBelief pred{Mat::col({0.0}), Mat(1, 1, {1.0})};
  UpdateResult up = ekf_update(pred, Mat::col({1.0}), *m, 1);
  CHECK(up.belief.mean(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(up.belief.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(up.innovation(0, 0) == 1.0);
  CHECK(up.innov_cov(0, 0) == 2.0);
  CHECK(up.cross_cov(0, 0) == 1.0);
}

TEST_CASE("huge measurement noise leaves the prior untouched") {
  auto m = rw(1.0, 1e12);
  GaussianBelief pred{Mat::col({3.0}), Mat(1, 1, {2.0})};
  UpdateResult up = ekf_update(pred, Mat::col({100.0}), *m, 1);
  CHECK(up.belief.mean(0, 0) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(up.belief.cov(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("zero innovation moves nothing but still contracts the covariance") {
  auto m = rw();
  GaussianBelief pred{Mat::col({2.0}), Mat(1, 1, {4.0})};
  UpdateResult up = ekf_update(pred, Mat::col({2.0}), *m, 1);
  CHECK(up.belief.mean(0, 0) == 2.0);
  CHECK(up.belief.cov(0, 0) < 4.0);
}

TEST_CASE("predict through the random walk adds exactly the process noise") {
  auto m = rw(2.5);
  GaussianBelief b{Mat::col({1.0}), Mat(1, 1, {3.0})};
  GaussianBelief p = ekf_predict(b, *m, 1);
  CHECK(p.mean(0, 0) == 1.0);
  CHECK(p.cov(0, 0) == 5.5);
}

TEST_CASE("predict with a trend shifts the mean and inflates the diagonal") {
  auto m = cv_linear();
  GaussianBelief b{Mat::col({0.0, 0.0, 1.0, 2.0}), Mat::identity(4)};
  TrendEstimate trend{Mat::col({0.5, -0.5, 0.1, 0.0}), Mat::col({1.0, 2.0, 3.0, 4.0})};
  GaussianBelief pn = ekf_predict(b, *m, 1);
  GaussianBelief pt = ekf_predict(b, *m, 1, &trend);
  CHECK(max_abs_diff(pt.mean, add(pn.mean, trend.delta)) == 0.0);
  CHECK(max_abs_diff(pt.cov, add(pn.cov, diag_from_col(trend.sigma_diag))) == 0.0);
  // Worked constant-velocity numbers: dt=4, q2=10, P=I.
  CHECK(pn.mean(0, 0) == 4.0);
  CHECK(pn.mean(1, 0) == 8.0);
  CHECK(pn.cov(0, 0) == 27.0);
  CHECK(pn.cov(0, 2) == 4.0);
  CHECK(pn.cov(2, 2) == 11.0);
}

TEST_CASE("smooth step with smoothed_next equal to pred_next is the identity") {
  auto m = rw();
  GaussianBelief filt{Mat::col({1.0}), Mat(1, 1, {2.0})};
  GaussianBelief pred{Mat::col({1.0}), Mat(1, 1, {3.0})};
  GaussianBelief sm = rts_smooth_step(filt, pred, pred, m->jac_f(filt.mean, 1));
  CHECK(sm.mean(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sm.cov(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("huge backward inflation turns the smoother gain off") {
  auto m = rw();
  GaussianBelief filt{Mat::col({1.0}), Mat(1, 1, {2.0})};
  GaussianBelief pred{Mat::col({1.5}), Mat(1, 1, {3.0})};
  GaussianBelief next{Mat::col({-7.0}), Mat(1, 1, {0.5})};
  TrendEstimate trend{Mat::col({0.0}), Mat::col({1e12})};
  GaussianBelief sm = rts_smooth_step(filt, pred, next, m->jac_f(filt.mean, 1), &trend);
  CHECK(sm.mean(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sm.cov(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("two-step scalar smoother against direct joint-Gaussian conditioning") {
  auto m = rw(0.7, 1.3);
  GaussianBelief init{Mat::col({0.4}), Mat(1, 1, {2.0})};
  std::vector<Mat> z = {Mat::col({0.0}), Mat::col({1.9})};
  SequenceCache cache = run_classic(*m, z, init, RunMode::Smooth);
  auto oracle = test::joint_gaussian_smooth(*m, z, init);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::fabs(cache.smoothed[k].mean(0, 0) - oracle.mean[k](0, 0)) < 1e-10);
    CHECK(std::fabs(cache.smoothed[k].cov(0, 0) - oracle.cov[k](0, 0)) < 1e-10);
  }
}

TEST_CASE("short linear-Gaussian runs match the joint oracle everywhere") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = rw(rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0));
    const int k_len = 3 + static_cast<int>(rng.next_u64() % 3);  // 3..5
    GaussianBelief init{Mat::col({rng.uniform(-1, 1)}), Mat(1, 1, {rng.uniform(0.5, 2.0)})};
    std::vector<Mat> z;
    for (int k = 0; k < k_len; ++k) z.push_back(Mat::col({rng.uniform(-2, 2)}));
    SequenceCache cache = run_classic(*m, z, init, RunMode::Smooth);
    auto oracle = test::joint_gaussian_smooth(*m, z, init);
    for (int k = 0; k < k_len; ++k) {
      CHECK(max_abs_diff(cache.smoothed[k].mean, oracle.mean[k]) < 1e-8);
      CHECK(max_abs_diff(cache.smoothed[k].cov, oracle.cov[k]) < 1e-8);
    }
  }
}

TEST_CASE("smoothing never inflates the posterior variance") {
  auto m = cv_linear();
  Rng rng(32);
  test::SimTraj tr = test::simulate_from_model(*m, Mat::col({100.0, 200.0, 5.0, -3.0}), 40, rng);
  SequenceCache cache = run_classic(*m, tr.z, default_init(*m, tr.z[0]), RunMode::Smooth);
  for (int k = 0; k < 40; ++k) {
    CHECK(trace(cache.smoothed[k].cov) <= trace(cache.steps[k].filtered.cov) + 1e-9);
  }
  // Terminal boundary: smoothed == filtered bit for bit.
  CHECK(bit_equal(cache.smoothed[39].mean, cache.steps[39].filtered.mean));
  CHECK(bit_equal(cache.smoothed[39].cov, cache.steps[39].filtered.cov));
}

TEST_CASE("filter converges: late errors beat the first-step error on average") {
  auto m = rw(0.5, 4.0);
  Rng rng(33);
  double err_first = 0.0, err_last = 0.0;
  for (int s = 0; s < 100; ++s) {
    test::SimTraj tr = test::simulate_from_model(*m, Mat::col({rng.uniform(-5, 5)}), 30, rng);
    SequenceCache cache = run_classic(*m, tr.z, default_init(*m, tr.z[0]), RunMode::Filter);
    const double e1 = cache.steps[1].filtered.mean(0, 0) - tr.x[1](0, 0);
    const double eK = cache.steps[29].filtered.mean(0, 0) - tr.x[29](0, 0);
    err_first += e1 * e1;
    err_last += eK * eK;
  }
  CHECK(err_last < err_first);
}

TEST_CASE("sequence contracts: K >= 2 and matching dimensions") {
  auto m = rw();
  GaussianBelief init{Mat::col({0.0}), Mat(1, 1, {1.0})};
  std::vector<Mat> z1 = {Mat::col({0.0})};
  CHECK_THROWS_AS(run_classic(*m, z1, init, RunMode::Filter), ContractError);
  GaussianBelief bad{Mat::col({0.0, 0.0}), Mat::identity(2)};
  std::vector<Mat> z2 = {Mat::col({0.0}), Mat::col({0.0})};
  CHECK_THROWS_AS(run_classic(*m, z2, bad, RunMode::Filter), ContractError);
}

namespace {

// Collects every covariance the run loops emit and tracks the worst
// asymmetry / most negative eigenvalue.
struct HygieneProbe : CovMonitor {
  double worst_asym = 0.0;
  double worst_eig = 1e300;
  int count = 0;
  void observe(const Mat& cov, const char*) override {
    ++count;
    worst_asym = std::max(worst_asym, max_abs_diff(cov, transpose(cov)));
    worst_eig = std::min(worst_eig, min_eig_sym(cov));
  }
};

}  // namespace

TEST_CASE("covariance hygiene across a radar smoothing run") {
  ModelParams p;
  p.dt = 4.0;
  p.q2 = 10.0;
  const double sa = 0.3 * M_PI / 180.0;
  p.r_diag = {150.0 * 150.0, sa * sa};
  auto m = make_builtin(BuiltinModelId::Cv2dRadar, p);
  Rng rng(34);
  test::SimTraj tr = test::simulate_from_model(*m, Mat::col({5e4, 2e4, -90.0, -20.0}), 60, rng);

  HygieneProbe probe;
  set_cov_monitor(&probe);
  SequenceCache cache = run_classic(*m, tr.z, default_init(*m, tr.z[0]), RunMode::Smooth);
  set_cov_monitor(nullptr);

  CHECK(probe.count > 0);
  CHECK(probe.worst_asym <= 1e-9);
  CHECK(probe.worst_eig >= -1e-9);
  // The filter actually locks on: terminal position error far below the
  // initial-uncertainty scale.
  const double ex = cache.steps[59].filtered.mean(0, 0) - tr.x[59](0, 0);
  const double ey = cache.steps[59].filtered.mean(1, 0) - tr.x[59](1, 0);
  CHECK(std::hypot(ex, ey) < 2000.0);
}
