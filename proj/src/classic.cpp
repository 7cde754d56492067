#include "ebrns/classic.hpp"

#include "ebrns/errors.hpp"
#include "ebrns/monitor.hpp"
#include "ebrns/tape.hpp"  // wrap_angle

namespace ebrns {

GaussianBelief ekf_predict(const GaussianBelief& b, const StateSpaceModel& m, int k,
                           const TrendEstimate* trend) {
  Mat mean = m.f(b.mean, k);
  Mat fj = m.jac_f(b.mean, k);
  Mat cov = add(matmul(matmul(fj, b.cov), transpose(fj)), m.process_noise());
  if (trend != nullptr) {
    mean = add(mean, trend->delta);
    cov = add(cov, diag_from_col(trend->sigma_diag));
  }
  cov = sym(cov);
  observe_cov(cov, "classic.predict");
  return {std::move(mean), std::move(cov)};
}

UpdateResult ekf_update(const GaussianBelief& pred, const Mat& z, const StateSpaceModel& m,
                        int k) {
  Mat hj = m.jac_h(pred.mean, k);
  Mat s = sym(add(matmul(matmul(hj, pred.cov), transpose(hj)), m.meas_noise()));
  Mat cross = matmul(pred.cov, transpose(hj));  // P H^T
  Mat innov = sub(z, m.h(pred.mean, k));
  for (int r : m.angle_rows()) innov(r, 0) = wrap_angle(innov(r, 0));

  // x + P H^T S^{-1} v ; P - P H^T S^{-1} (P H^T)^T, through one factorization.
  const CholFactor sf = chol_factor(s);
  Mat mean = add(pred.mean, matmul(cross, chol_solve(sf, innov)));
  Mat cov = sym(sub(pred.cov, matmul(cross, chol_solve(sf, transpose(cross)))));
  observe_cov(cov, "classic.update");
  return {{std::move(mean), std::move(cov)}, std::move(innov), std::move(s), std::move(cross)};
}

GaussianBelief rts_smooth_step(const GaussianBelief& filtered_k, const GaussianBelief& pred_next,
                               const GaussianBelief& smoothed_next, const Mat& f_next,
                               const TrendEstimate* backward_trend) {
  Mat xb = pred_next.mean;
  Mat pb = pred_next.cov;
  if (backward_trend != nullptr) {
    xb = add(xb, backward_trend->delta);
    pb = add(pb, diag_from_col(backward_trend->sigma_diag));
  }
  // G = P_f F^T Pb^{-1}  ==  (Pb^{-1} F P_f)^T since P_f and Pb are symmetric.
  Mat g = transpose(spd_solve(pb, matmul(f_next, filtered_k.cov)));
  Mat mean = add(filtered_k.mean, matmul(g, sub(smoothed_next.mean, xb)));
  Mat cov = sym(add(filtered_k.cov, matmul(matmul(g, sub(smoothed_next.cov, pb)), transpose(g))));
  observe_cov(cov, "classic.smooth");
  return {std::move(mean), std::move(cov)};
}

SequenceCache run_classic(const StateSpaceModel& m, const std::vector<Mat>& z,
                          const GaussianBelief& init, RunMode mode) {
  const int k_len = static_cast<int>(z.size());
  if (k_len < 2) throw ContractError("run_classic: sequence length must be >= 2");
  if (init.mean.rows() != m.state_dim())
    throw ContractError("run_classic: init mean dim " + std::to_string(init.mean.rows()) +
                        " does not match model state dim " + std::to_string(m.state_dim()));

  SequenceCache cache;
  cache.steps.resize(k_len);
  cache.steps[0].predicted = init;
  cache.steps[0].filtered = init;
  cache.steps[0].innovation = Mat::zeros(m.meas_dim(), 1);
  cache.steps[0].f_jac = Mat::identity(m.state_dim());
  observe_cov(init.cov, "classic.init");

  for (int k = 1; k < k_len; ++k) {
    StepRecord& rec = cache.steps[k];
    rec.f_jac = m.jac_f(cache.steps[k - 1].filtered.mean, k);
    rec.predicted = ekf_predict(cache.steps[k - 1].filtered, m, k);
    UpdateResult up = ekf_update(rec.predicted, z[k], m, k);
    rec.filtered = std::move(up.belief);
    rec.innovation = std::move(up.innovation);
  }

  if (mode == RunMode::Smooth) {
    cache.smoothed.resize(k_len);
    cache.smoothed[k_len - 1] = cache.steps[k_len - 1].filtered;  // boundary: no update
    for (int k = k_len - 2; k >= 0; --k) {
      cache.smoothed[k] = rts_smooth_step(cache.steps[k].filtered, cache.steps[k + 1].predicted,
                                          cache.smoothed[k + 1], cache.steps[k + 1].f_jac);
    }
  }
  return cache;
}

GaussianBelief default_init(const StateSpaceModel& m, const Mat& z0) {
  return {m.init_mean(z0), m.init_cov()};
}

}  // namespace ebrns
