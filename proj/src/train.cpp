#include "ebrns/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ebrns/classic.hpp"
#include "ebrns/ebrns.hpp"
#include "ebrns/errors.hpp"
#include "ebrns/rng.hpp"

namespace ebrns {

namespace {

// Taped per-sample loss: (1/K) sum over estimated frames of the squared
// state error, plus tau * ||params of the trainable nets||^2.
Var build_sample_loss(Tape& t, const BankVars& bv, const TrajectorySample& sample,
                      const StateSpaceModel& m, TrainStage stage, double tau) {
  const EbrnsMode mode = stage == TrainStage::Filter ? EbrnsMode::Filter : EbrnsMode::Smooth;
  GaussianBelief init = default_init(m, sample.z[0]);
  EbrnsRunVars run = run_ebrns_taped(t, bv, m, sample.z, init, mode, /*nominal=*/false);

  Var sum = t.constant(Mat::zeros(1, 1));
  for (int k = 1; k < run.length(); ++k) {
    Var est = stage == TrainStage::Filter ? run.steps[k].filt_mean : run.steps[k].smooth_mean;
    sum = add(sum, sum_sq(sub(est, t.constant(sample.x[k]))));
  }
  Var loss = scale(sum, 1.0 / run.length());

  if (tau > 0.0) {
    Var reg = t.constant(Mat::zeros(1, 1));
    for (int n = 0; n < 8; ++n) {
      if (!bv.trainable[n]) continue;
      const NetVars& nv = bv.nets[n];
      reg = add(reg, add(add(sum_sq(nv.w1), sum_sq(nv.b1)), add(sum_sq(nv.w2), sum_sq(nv.b2))));
    }
    loss = add(loss, scale(reg, tau));
  }
  return loss;
}

double eager_loss(const GateBank& bank, const TrajectorySample& sample, const StateSpaceModel& m,
                  TrainStage stage, double tau) {
  Tape t;
  BankVars bv = insert_bank(t, bank, stage == TrainStage::Filter, stage == TrainStage::Smooth);
  Var loss = build_sample_loss(t, bv, sample, m, stage, tau);
  return t.value(loss)(0, 0);
}

void apply_flat_update(GateBank& bank, TrainStage stage, const std::vector<double>& grad,
                       double lr) {
  std::vector<Mat*> mats =
      trainable_mats(bank, stage == TrainStage::Filter, stage == TrainStage::Smooth);
  std::size_t flat = 0;
  for (Mat* mp : mats)
    for (int i = 0; i < mp->size(); ++i) (*mp)[i] -= lr * grad[flat++];
}

}  // namespace

double filtered_loss(const GateBank& bank, const TrajectorySample& sample,
                     const StateSpaceModel& m, double tau_a) {
  return eager_loss(bank, sample, m, TrainStage::Filter, tau_a);
}

double smoothed_loss(const GateBank& bank, const TrajectorySample& sample,
                     const StateSpaceModel& m, double tau_b) {
  return eager_loss(bank, sample, m, TrainStage::Smooth, tau_b);
}

double validation_rmse(const GateBank& bank, const Dataset& data, const StateSpaceModel& m,
                       TrainStage stage) {
  if (data.samples.empty()) throw ContractError("validation_rmse: empty dataset");
  const EbrnsMode mode = stage == TrainStage::Filter ? EbrnsMode::Filter : EbrnsMode::Smooth;
  double sum = 0.0;
  long count = 0;
  for (const TrajectorySample& s : data.samples) {
    GaussianBelief init = default_init(m, s.z[0]);
    EbrnsSequence seq = run_ebrns(bank, m, s.z, init, mode, /*nominal=*/false);
    for (int k = 1; k < seq.length(); ++k) {
      const Mat& est = stage == TrainStage::Filter ? seq.filtered[k].mean : seq.smoothed[k].mean;
      Mat err = sub(est, s.x[k]);
      for (int i = 0; i < err.rows(); ++i) sum += err(i, 0) * err(i, 0);
      ++count;
    }
  }
  return std::sqrt(sum / static_cast<double>(count));
}

TrainResult train_stage(const GateBank& start, const SplitDataset& split,
                        const StateSpaceModel& m, const TrainConfig& cfg) {
  const int n_train = static_cast<int>(split.train.samples.size());
  if (n_train == 0) throw ConfigError("train_stage: empty training split");
  if (cfg.batch < 1 || cfg.batch > n_train)
    throw ConfigError("train_stage: batch size " + std::to_string(cfg.batch) +
                      " must be in [1, " + std::to_string(n_train) + "]");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("train_stage: bad learning rate");
  if (cfg.epochs < 1) throw ConfigError("train_stage: epochs must be >= 1");
  if (!(cfg.clip > 0.0)) throw ConfigError("train_stage: clip threshold must be positive");
  if (cfg.patience < 1) throw ConfigError("train_stage: patience must be >= 1");
  const double tau = cfg.stage == TrainStage::Filter ? cfg.tau_a : cfg.tau_b;
  if (tau < 0.0 || !std::isfinite(tau)) throw ConfigError("train_stage: bad regularization weight");

  GateBank bank = start;
  bank.norm_scale = split.norm_scale;  // refit from the training split
  if (!bank.has_norm()) throw ConfigError("train_stage: split carries no usable norm statistics");

  const bool fwd = cfg.stage == TrainStage::Filter;
  const bool bwd = cfg.stage == TrainStage::Smooth;

  TrainResult out;
  out.report.stage = fwd ? 1 : 2;
  GateBank best = bank;
  double best_rmse = 0.0;
  int best_epoch = -1, since_best = 0;

  Rng shuffle_rng(cfg.seed);
  std::vector<int> order(n_train);
  for (int i = 0; i < n_train; ++i) order[i] = i;

  const int batches = n_train / cfg.batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto tic = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;

    for (int b = 0; b < batches; ++b) {
      // Ascending-id accumulation keeps the reduction order fixed no matter
      // how the shuffle dealt the batch.
      std::vector<int> batch(order.begin() + b * cfg.batch,
                             order.begin() + (b + 1) * cfg.batch);
      std::sort(batch.begin(), batch.end());

      std::vector<double> grad;
      double batch_loss = 0.0;
      for (int idx : batch) {
        const TrajectorySample& sample = split.train.samples[idx];
        Tape t;
        BankVars bv = insert_bank(t, bank, fwd, bwd);
        Var loss = build_sample_loss(t, bv, sample, m, cfg.stage, tau);
        const double lv = t.value(loss)(0, 0);
        if (!std::isfinite(lv))
          throw NumericError("train_stage: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b) + ", sample " +
                             std::to_string(sample.id));
        batch_loss += lv;
        t.backward(loss);
        std::vector<double> g = bank_gradient(t, bv);
        if (grad.empty()) grad.assign(g.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
      }
      batch_loss /= cfg.batch;
      epoch_loss += batch_loss;
      for (double& g : grad) g /= cfg.batch;

      double norm2 = 0.0;
      for (double g : grad) norm2 += g * g;
      const double gnorm = std::sqrt(norm2);
      if (!std::isfinite(gnorm))
        throw NumericError("train_stage: non-finite gradient at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(b));
      if (gnorm > cfg.clip)
        for (double& g : grad) g *= cfg.clip / gnorm;

      apply_flat_update(bank, cfg.stage, grad, cfg.lr);
    }

    const double val = validation_rmse(bank, split.validation, m, cfg.stage);
    const auto toc = std::chrono::steady_clock::now();

    EpochStats st;
    st.train_loss = batches > 0 ? epoch_loss / batches : 0.0;
    st.val_rmse = val;
    st.seconds = std::chrono::duration<double>(toc - tic).count();
    out.report.epochs.push_back(st);

    if (best_epoch < 0 || val < best_rmse) {
      best_rmse = val;
      best_epoch = epoch;
      best = bank;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  out.report.best_epoch = best_epoch;
  out.report.best_val_rmse = best_rmse;
  out.report.ran_epochs = static_cast<int>(out.report.epochs.size());
  out.bank = std::move(best);
  return out;
}

std::string train_report_to_json(const TrainReport& report) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "{\n  \"stage\": " << report.stage << ",\n  \"epochs\": [";
  for (std::size_t i = 0; i < report.epochs.size(); ++i) {
    os << (i ? "," : "") << "\n    {\"epoch\": " << i
       << ", \"train_loss\": " << num(report.epochs[i].train_loss)
       << ", \"val_rmse\": " << num(report.epochs[i].val_rmse) << "}";
  }
  os << "\n  ],\n  \"best_epoch\": " << report.best_epoch
     << ",\n  \"best_val_rmse\": " << num(report.best_val_rmse)
     << ",\n  \"ran_epochs\": " << report.ran_epochs << ",\n  \"timing\": {\n    \"epoch_seconds\": [";
  double total = 0.0;
  for (std::size_t i = 0; i < report.epochs.size(); ++i) {
    os << (i ? ", " : "") << num(report.epochs[i].seconds);
    total += report.epochs[i].seconds;
  }
  os << "],\n    \"total_seconds\": " << num(total) << "\n  }\n}\n";
  return os.str();
}

}  // namespace ebrns
