#include "ebrns/ebrns.hpp"

#include "ebrns/errors.hpp"
#include "ebrns/monitor.hpp"

namespace ebrns {

namespace {

std::vector<uint8_t> angle_mask(const StateSpaceModel& m) {
  std::vector<uint8_t> mask(m.meas_dim(), 0);
  for (int r : m.angle_rows()) mask[r] = 1;
  return mask;
}

}  // namespace

FrgnStepOut frgn_step(Tape& t, const BankVars& bank, const StateSpaceModel& m, Var prev_filt_mean,
                      Var prev_filt_cov, Var prev_mem_mean, Var prev_mem_sigma, const Mat& z_k,
                      int k, bool nominal) {
  FrgnStepOut out;

  // Memory update and trend gates. Nominal mode bypasses the nets entirely:
  // zero trend, no inflation, memory pinned at zero.
  if (nominal) {
    out.mem_mean = t.constant(Mat::zeros(bank.d_c, 1));
    out.mem_sigma = t.constant(Mat::zeros(bank.d_c, 1));
  } else {
    Var mem_in = build_gate_input(GateInputKind::ForwardMemory, bank, prev_mem_mean,
                                  prev_mem_sigma, prev_filt_mean);
    GatePair mem = eval_gate_pair(bank.nets[kFwdMemMean], bank.nets[kFwdMemLogVar], mem_in);
    out.mem_mean = mem.mean;
    out.mem_sigma = mem.sigma_diag;
    Var trend_in =
        build_gate_input(GateInputKind::ForwardTrend, bank, out.mem_mean, out.mem_sigma);
    GatePair trend =
        eval_gate_pair(bank.nets[kFwdTrendMean], bank.nets[kFwdTrendLogVar], trend_in);
    out.trend_delta = trend.mean;
    out.trend_sigma = trend.sigma_diag;
  }

  // Time update, mirroring the classical predict operation for operation so
  // the nominal path reduces to it exactly.
  out.f_jac = m.jac_f_t(t, prev_filt_mean, k);
  Var mean = m.f_t(t, prev_filt_mean, k);
  Var cov = add(matmul(matmul(out.f_jac, prev_filt_cov), transpose(out.f_jac)),
                t.constant(m.process_noise()));
  if (!nominal) {
    mean = add(mean, out.trend_delta);
    cov = add(cov, diag_from_col(out.trend_sigma));
  }
  out.pred_mean = mean;
  out.pred_cov = sym(cov);
  observe_cov(t.value(out.pred_cov), "ebrns.predict");

  // Measurement update.
  Var h_jac = m.jac_h_t(t, out.pred_mean, k);
  Var s = sym(add(matmul(matmul(h_jac, out.pred_cov), transpose(h_jac)),
                  t.constant(m.meas_noise())));
  Var cross = matmul(out.pred_cov, transpose(h_jac));
  Var innov = sub(t.constant(z_k), m.h_t(t, out.pred_mean, k));
  const auto mask = angle_mask(m);
  for (uint8_t b : mask)
    if (b) {
      innov = wrap_rows(innov, mask);
      break;
    }
  out.innovation = innov;
  out.filt_mean = add(out.pred_mean, matmul(cross, spd_solve(s, innov)));
  out.filt_cov = sym(sub(out.pred_cov, matmul(cross, spd_solve(s, transpose(cross)))));
  observe_cov(t.value(out.filt_cov), "ebrns.update");
  return out;
}

BrgnStepOut brgn_step(Tape& t, const BankVars& bank, const StateSpaceModel& m, Var filt_mean_k,
                      Var filt_cov_k, Var pred_mean_next, Var pred_cov_next, Var f_jac_next,
                      Var smooth_mean_next, Var smooth_cov_next, Var bmem_mean_next,
                      Var bmem_sigma_next, bool nominal) {
  (void)m;
  BrgnStepOut out;

  // Backward trend at frame k+1 from the backward memory at k+1.
  Var xb = pred_mean_next;
  Var pb = pred_cov_next;
  if (!nominal) {
    Var btrend_in =
        build_gate_input(GateInputKind::BackwardTrend, bank, bmem_mean_next, bmem_sigma_next);
    GatePair btrend =
        eval_gate_pair(bank.nets[kBwdTrendMean], bank.nets[kBwdTrendLogVar], btrend_in);
    out.btrend_delta = btrend.mean;
    out.btrend_sigma = btrend.sigma_diag;
    xb = add(xb, out.btrend_delta);
    pb = add(pb, diag_from_col(out.btrend_sigma));
  }

  // Smoothing identity with gain G = P_filt F^T Pb^{-1}.
  Var g = transpose(spd_solve(pb, matmul(f_jac_next, filt_cov_k)));
  out.smooth_mean = add(filt_mean_k, matmul(g, sub(smooth_mean_next, xb)));
  out.smooth_cov =
      sym(add(filt_cov_k, matmul(matmul(g, sub(smooth_cov_next, pb)), transpose(g))));
  observe_cov(t.value(out.smooth_cov), "ebrns.smooth");

  // Backward memory update consumes the smoothed state at k+1.
  if (nominal) {
    out.bmem_mean = t.constant(Mat::zeros(bank.d_c, 1));
    out.bmem_sigma = t.constant(Mat::zeros(bank.d_c, 1));
  } else {
    Var bmem_in = build_gate_input(GateInputKind::BackwardMemory, bank, bmem_mean_next,
                                   bmem_sigma_next, smooth_mean_next);
    GatePair bmem = eval_gate_pair(bank.nets[kBwdMemMean], bank.nets[kBwdMemLogVar], bmem_in);
    out.bmem_mean = bmem.mean;
    out.bmem_sigma = bmem.sigma_diag;
  }
  return out;
}

EbrnsRunVars run_ebrns_taped(Tape& t, const BankVars& bank, const StateSpaceModel& m,
                             const std::vector<Mat>& z, const GaussianBelief& init,
                             EbrnsMode mode, bool nominal) {
  const int k_len = static_cast<int>(z.size());
  if (k_len < 2) throw ContractError("run_ebrns: sequence length must be >= 2");
  if (init.mean.rows() != m.state_dim())
    throw ContractError("run_ebrns: init mean dim " + std::to_string(init.mean.rows()) +
                        " does not match model state dim " + std::to_string(m.state_dim()));
  if (bank.n_x != m.state_dim())
    throw ContractError("run_ebrns: bank built for n_x=" + std::to_string(bank.n_x) +
                        " but model has n_x=" + std::to_string(m.state_dim()));

  EbrnsRunVars run;
  run.mode = mode;
  run.nominal = nominal;
  run.steps.resize(k_len);

  // Frame 0: initial belief; memory starts at zero mean, unit diagonal.
  EbrnsStepVars& s0 = run.steps[0];
  s0.pred_mean = s0.filt_mean = t.constant(init.mean);
  s0.pred_cov = s0.filt_cov = t.constant(init.cov);
  s0.f_jac = t.constant(Mat::identity(m.state_dim()));
  s0.mem_mean = t.constant(Mat::zeros(bank.d_c, 1));
  s0.mem_sigma = t.constant(Mat::ones(bank.d_c, 1));
  observe_cov(init.cov, "ebrns.init");

  for (int k = 1; k < k_len; ++k) {
    const EbrnsStepVars& prev = run.steps[k - 1];
    FrgnStepOut o = frgn_step(t, bank, m, prev.filt_mean, prev.filt_cov, prev.mem_mean,
                              prev.mem_sigma, z[k], k, nominal);
    EbrnsStepVars& s = run.steps[k];
    s.pred_mean = o.pred_mean;
    s.pred_cov = o.pred_cov;
    s.filt_mean = o.filt_mean;
    s.filt_cov = o.filt_cov;
    s.innovation = o.innovation;
    s.f_jac = o.f_jac;
    s.mem_mean = o.mem_mean;
    s.mem_sigma = o.mem_sigma;
    s.trend_delta = o.trend_delta;
    s.trend_sigma = o.trend_sigma;
  }

  if (mode == EbrnsMode::Smooth) {
    EbrnsStepVars& last = run.steps[k_len - 1];
    last.smooth_mean = last.filt_mean;  // terminal boundary: no backward update
    last.smooth_cov = last.filt_cov;
    last.bmem_mean = last.mem_mean;  // backward memory seeded with the terminal
    last.bmem_sigma = last.mem_sigma;  // forward memory, bit-equal
    for (int k = k_len - 2; k >= 0; --k) {
      const EbrnsStepVars& next = run.steps[k + 1];
      EbrnsStepVars& s = run.steps[k];
      BrgnStepOut o =
          brgn_step(t, bank, m, s.filt_mean, s.filt_cov, next.pred_mean, next.pred_cov,
                    next.f_jac, next.smooth_mean, next.smooth_cov, next.bmem_mean,
                    next.bmem_sigma, nominal);
      s.smooth_mean = o.smooth_mean;
      s.smooth_cov = o.smooth_cov;
      s.bmem_mean = o.bmem_mean;
      s.bmem_sigma = o.bmem_sigma;
      run.steps[k + 1].btrend_delta = o.btrend_delta;  // trend belongs to frame k+1
      run.steps[k + 1].btrend_sigma = o.btrend_sigma;
    }
  }
  return run;
}

EbrnsSequence snapshot(const Tape& t, const EbrnsRunVars& run) {
  EbrnsSequence seq;
  const int k_len = run.length();
  auto val = [&](Var v) { return t.value(v); };
  for (int k = 0; k < k_len; ++k) {
    const EbrnsStepVars& s = run.steps[k];
    seq.predicted.push_back({val(s.pred_mean), val(s.pred_cov)});
    seq.filtered.push_back({val(s.filt_mean), val(s.filt_cov)});
    seq.forward_memory.push_back({val(s.mem_mean), val(s.mem_sigma)});
    const int n_x = val(s.filt_mean).rows();
    if (s.trend_delta.valid())
      seq.forward_trend.push_back({val(s.trend_delta), val(s.trend_sigma)});
    else
      seq.forward_trend.push_back({Mat::zeros(n_x, 1), Mat::zeros(n_x, 1)});
    if (run.mode == EbrnsMode::Smooth) {
      seq.smoothed.push_back({val(s.smooth_mean), val(s.smooth_cov)});
      seq.backward_memory.push_back({val(s.bmem_mean), val(s.bmem_sigma)});
      if (s.btrend_delta.valid())
        seq.backward_trend.push_back({val(s.btrend_delta), val(s.btrend_sigma)});
      else
        seq.backward_trend.push_back({Mat::zeros(n_x, 1), Mat::zeros(n_x, 1)});
    }
  }
  return seq;
}

EbrnsSequence run_ebrns(const GateBank& bank, const StateSpaceModel& m, const std::vector<Mat>& z,
                        const GaussianBelief& init, EbrnsMode mode, bool nominal) {
  Tape t;
  BankVars bv = insert_bank(t, bank, /*fwd_trainable=*/false, /*bwd_trainable=*/false);
  EbrnsRunVars run = run_ebrns_taped(t, bv, m, z, init, mode, nominal);
  return snapshot(t, run);
}

}  // namespace ebrns
