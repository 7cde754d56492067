// Training: loss definitions, frozen-parameter contracts, batch mechanics,
// determinism, descent behavior, and the filter-optimality oracle on data
// the nominal model explains exactly.

#include <cmath>
#include <vector>

#include "doctest.h"
#include "ebrns/classic.hpp"
#include "ebrns/dataset.hpp"
#include "ebrns/ebrns.hpp"
#include "ebrns/errors.hpp"
#include "ebrns/gates.hpp"
#include "ebrns/mat.hpp"
#include "ebrns/model.hpp"
#include "ebrns/rng.hpp"
#include "ebrns/train.hpp"
#include "json.hpp"

using namespace ebrns;

namespace {

GateBank zero_bank(int n_x, int d_c, int hidden) {
  Rng rng(1);
  GateBank bank = make_gate_bank(n_x, d_c, hidden, rng);
  for (auto& net : bank.nets) {
    net.w1 = Mat::zeros(net.w1.rows(), net.w1.cols());
    net.b1 = Mat::zeros(net.b1.rows(), 1);
    net.w2 = Mat::zeros(net.w2.rows(), net.w2.cols());
    net.b2 = Mat::zeros(net.b2.rows(), 1);
  }
  bank.norm_scale = Mat::ones(n_x, 1);
  return bank;
}

std::unique_ptr<StateSpaceModel> scalar_model(double q2 = 1.0, double r = 1.0) {
  ModelParams mp;
  mp.q2 = q2;
  mp.r_diag = {r};
  return make_builtin(BuiltinModelId::RandomWalk1d, mp);
}

bool banks_equal(const GateBank& a, const GateBank& b) {
  for (int n = 0; n < 8; ++n)
    if (!bit_equal(a.nets[n].w1, b.nets[n].w1) || !bit_equal(a.nets[n].b1, b.nets[n].b1) ||
        !bit_equal(a.nets[n].w2, b.nets[n].w2) || !bit_equal(a.nets[n].b2, b.nets[n].b2))
      return false;
  return true;
}

// Mean RMSE of the classical filter over a dataset (frames 1..K-1), matching
// the validation metric's frame convention.
double classic_filter_rmse(const Dataset& data, const StateSpaceModel& m) {
  double sum = 0.0;
  long count = 0;
  for (const TrajectorySample& s : data.samples) {
    SequenceCache cache = run_classic(m, s.z, default_init(m, s.z[0]), RunMode::Filter);
    for (int k = 1; k < static_cast<int>(s.z.size()); ++k) {
      Mat err = sub(cache.steps[k].filtered.mean, s.x[k]);
      for (int i = 0; i < err.rows(); ++i) sum += err(i, 0) * err(i, 0);
      ++count;
    }
  }
  return std::sqrt(sum / static_cast<double>(count));
}

}  // namespace

TEST_CASE("loss is zero on perfect estimates and carries the documented normalization") {
  auto m = scalar_model();
  Rng rng(3);
  GateBank bank = make_gate_bank(1, 2, 3, rng);
  bank.norm_scale = Mat::filled(1, 1, 10.0);

  Dataset d = gen_temperature(1, 10, 2.0, 42);
  TrajectorySample s = d.samples[0];

  // Replace the truth with the filter's own output: zero error, zero loss.
  GaussianBelief init = default_init(*m, s.z[0]);
  EbrnsSequence seq = run_ebrns(bank, *m, s.z, init, EbrnsMode::Filter, false);
  TrajectorySample perfect = s;
  for (int k = 0; k < 10; ++k) perfect.x[k] = seq.filtered[k].mean;
  CHECK(filtered_loss(bank, perfect, *m, 0.0) == 0.0);

  // Truth shifted off the filter output by a constant e: the sum has K-1
  // terms but is divided by K, so the loss is ((K-1)/K) * e^2.
  const double e = 0.75;
  TrajectorySample shifted = perfect;
  for (int k = 0; k < 10; ++k) shifted.x[k](0, 0) -= e;
  CHECK(filtered_loss(bank, shifted, *m, 0.0) ==
        doctest::Approx(9.0 / 10.0 * e * e).epsilon(1e-12));

  // Same contract on the smoothing loss.
  EbrnsSequence sm = run_ebrns(bank, *m, s.z, init, EbrnsMode::Smooth, false);
  TrajectorySample perfect_s = s;
  for (int k = 0; k < 10; ++k) perfect_s.x[k] = sm.smoothed[k].mean;
  CHECK(smoothed_loss(bank, perfect_s, *m, 0.0) == 0.0);
}

TEST_CASE("regularization counts only the trainable half and vanishes at zero parameters") {
  auto m = scalar_model();
  Dataset d = gen_temperature(1, 8, 1.0, 7);

  GateBank zb = zero_bank(1, 2, 3);
  CHECK(filtered_loss(zb, d.samples[0], *m, 1000.0) ==
        filtered_loss(zb, d.samples[0], *m, 0.0));

  Rng rng(5);
  GateBank bank = make_gate_bank(1, 2, 3, rng);
  bank.norm_scale = Mat::ones(1, 1);
  double l2_fwd = 0.0;
  for (int n = 0; n < 4; ++n) {
    for (int i = 0; i < bank.nets[n].w1.size(); ++i) l2_fwd += bank.nets[n].w1[i] * bank.nets[n].w1[i];
    for (int i = 0; i < bank.nets[n].b1.size(); ++i) l2_fwd += bank.nets[n].b1[i] * bank.nets[n].b1[i];
    for (int i = 0; i < bank.nets[n].w2.size(); ++i) l2_fwd += bank.nets[n].w2[i] * bank.nets[n].w2[i];
    for (int i = 0; i < bank.nets[n].b2.size(); ++i) l2_fwd += bank.nets[n].b2[i] * bank.nets[n].b2[i];
  }
  const double tau = 0.125;
  CHECK(filtered_loss(bank, d.samples[0], *m, tau) - filtered_loss(bank, d.samples[0], *m, 0.0) ==
        doctest::Approx(tau * l2_fwd).epsilon(1e-12));
}

TEST_CASE("full-loss gradients match finite differences on sampled parameters") {
  auto m = scalar_model(0.8, 1.5);
  Dataset d = gen_temperature(1, 10, 1.5, 11);
  const TrajectorySample& s = d.samples[0];

  Rng rng(21);
  GateBank bank = make_gate_bank(1, 2, 3, rng);
  bank.norm_scale = Mat::filled(1, 1, 12.0);

  for (TrainStage stage : {TrainStage::Filter, TrainStage::Smooth}) {
    const bool fwd = stage == TrainStage::Filter;
    const double tau = 1e-4;

    Tape t;
    BankVars bv = insert_bank(t, bank, fwd, !fwd);
    GaussianBelief init = default_init(*m, s.z[0]);
    EbrnsRunVars run = run_ebrns_taped(
        t, bv, *m, s.z, init, fwd ? EbrnsMode::Filter : EbrnsMode::Smooth, false);
    Var sum = t.constant(Mat::zeros(1, 1));
    for (int k = 1; k < run.length(); ++k) {
      Var est = fwd ? run.steps[k].filt_mean : run.steps[k].smooth_mean;
      sum = add(sum, sum_sq(sub(est, t.constant(s.x[k]))));
    }
    Var loss = scale(sum, 1.0 / run.length());
    Var reg = t.constant(Mat::zeros(1, 1));
    for (int n = 0; n < 8; ++n)
      if (bv.trainable[n])
        reg = add(reg, add(add(sum_sq(bv.nets[n].w1), sum_sq(bv.nets[n].b1)),
                           add(sum_sq(bv.nets[n].w2), sum_sq(bv.nets[n].b2))));
    loss = add(loss, scale(reg, tau));
    t.backward(loss);
    std::vector<double> grad = bank_gradient(t, bv);

    GateBank probe = bank;
    std::vector<Mat*> mats = trainable_mats(probe, fwd, !fwd);
    int total = 0;
    for (Mat* mp : mats) total += mp->size();
    REQUIRE(total == static_cast<int>(grad.size()));

    auto loss_eval = [&]() {
      return fwd ? filtered_loss(probe, s, *m, tau) : smoothed_loss(probe, s, *m, tau);
    };

    Rng pick(99);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
      int target = static_cast<int>(pick.next_u64() % static_cast<std::uint64_t>(total));
      int flat = target;
      Mat* mp = nullptr;
      for (Mat* cand : mats) {
        if (flat < cand->size()) {
          mp = cand;
          break;
        }
        flat -= cand->size();
      }
      REQUIRE(mp != nullptr);
      const double saved = (*mp)[flat];
      (*mp)[flat] = saved + h;
      const double up = loss_eval();
      (*mp)[flat] = saved - h;
      const double dn = loss_eval();
      (*mp)[flat] = saved;
      const double fd = (up - dn) / (2.0 * h);
      CHECK(std::abs(fd - grad[target]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("stage training updates only its own nets and refits normalization") {
  auto m = scalar_model();
  Dataset d = gen_temperature(12, 8, 2.0, 17);
  SplitDataset split = split_dataset(d, 0.7, 0.2, 0.1, 5);

  Rng rng(9);
  GateBank start = make_gate_bank(1, 2, 3, rng);

  TrainConfig cfg;
  cfg.stage = TrainStage::Filter;
  cfg.lr = 1e-3;
  cfg.batch = 4;
  cfg.epochs = 2;
  cfg.patience = 10;
  cfg.seed = 3;
  TrainResult r1 = train_stage(start, split, *m, cfg);

  // Forward nets moved, backward nets bit-identical to the start.
  bool fwd_moved = false;
  for (int n = 0; n < 4; ++n) fwd_moved = fwd_moved || !bit_equal(r1.bank.nets[n].b2, start.nets[n].b2);
  CHECK(fwd_moved);
  for (int n = 4; n < 8; ++n) {
    CHECK(bit_equal(r1.bank.nets[n].w1, start.nets[n].w1));
    CHECK(bit_equal(r1.bank.nets[n].b1, start.nets[n].b1));
    CHECK(bit_equal(r1.bank.nets[n].w2, start.nets[n].w2));
    CHECK(bit_equal(r1.bank.nets[n].b2, start.nets[n].b2));
  }
  CHECK(bit_equal(r1.bank.norm_scale, split.norm_scale));

  cfg.stage = TrainStage::Smooth;
  TrainResult r2 = train_stage(r1.bank, split, *m, cfg);
  for (int n = 0; n < 4; ++n) {
    CHECK(bit_equal(r2.bank.nets[n].w1, r1.bank.nets[n].w1));
    CHECK(bit_equal(r2.bank.nets[n].b2, r1.bank.nets[n].b2));
  }
  bool bwd_moved = false;
  for (int n = 4; n < 8; ++n) bwd_moved = bwd_moved || !bit_equal(r2.bank.nets[n].b2, r1.bank.nets[n].b2);
  CHECK(bwd_moved);
}

TEST_CASE("epoch training loss equals the mean of per-sample losses on a full batch") {
  auto m = scalar_model();
  Dataset d = gen_temperature(10, 8, 2.0, 23);
  SplitDataset split = split_dataset(d, 0.7, 0.2, 0.1, 2);

  Rng rng(4);
  GateBank start = make_gate_bank(1, 2, 3, rng);

  TrainConfig cfg;
  cfg.stage = TrainStage::Filter;
  cfg.lr = 1e-4;
  cfg.batch = static_cast<int>(split.train.samples.size());  // single fixed batch
  cfg.epochs = 1;
  cfg.seed = 8;

  TrainResult r = train_stage(start, split, *m, cfg);
  GateBank fitted = start;
  fitted.norm_scale = split.norm_scale;
  double mean = 0.0;
  for (const TrajectorySample& s : split.train.samples)
    mean += filtered_loss(fitted, s, *m, cfg.tau_a);
  mean /= split.train.samples.size();
  CHECK(r.report.epochs[0].train_loss == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("one SGD step on a quadratic surrogate decreases the loss") {
  // Zero weights everywhere: the filtered states depend on the parameters
  // only through the trend biases, quadratically through the mean head.
  auto m = scalar_model();
  Dataset d = gen_temperature(10, 8, 2.0, 31);
  SplitDataset split = split_dataset(d, 0.7, 0.2, 0.1, 13);

  GateBank start = zero_bank(1, 2, 3);
  start.nets[kFwdTrendMean].b2 = Mat::filled(1, 1, 2.0);  // displaced from optimum

  TrainConfig cfg;
  cfg.stage = TrainStage::Filter;
  cfg.lr = 1e-3;
  cfg.batch = static_cast<int>(split.train.samples.size());
  cfg.epochs = 1;
  cfg.seed = 55;
  TrainResult r = train_stage(start, split, *m, cfg);

  GateBank fitted = start;
  fitted.norm_scale = split.norm_scale;
  double before = 0.0, after = 0.0;
  for (const TrajectorySample& s : split.train.samples) {
    before += filtered_loss(fitted, s, *m, cfg.tau_a);
    after += filtered_loss(r.bank, s, *m, cfg.tau_a);
  }
  CHECK(after < before);
}

TEST_CASE("training loss is non-increasing on a fixed batch at a small learning rate") {
  auto m = scalar_model();
  Dataset d = gen_temperature(10, 10, 2.0, 47);
  SplitDataset split = split_dataset(d, 0.7, 0.2, 0.1, 29);

  Rng rng(6);
  GateBank start = make_gate_bank(1, 2, 3, rng);

  TrainConfig cfg;
  cfg.stage = TrainStage::Filter;
  cfg.lr = 1e-5;
  cfg.batch = static_cast<int>(split.train.samples.size());
  cfg.epochs = 6;
  cfg.patience = 100;
  cfg.seed = 77;
  TrainResult r = train_stage(start, split, *m, cfg);

  REQUIRE(r.report.epochs.size() == 6);
  for (std::size_t i = 1; i < r.report.epochs.size(); ++i)
    CHECK(r.report.epochs[i].train_loss <= r.report.epochs[i - 1].train_loss + 1e-12);
}

TEST_CASE("training twice with the same seed is bit-identical") {
  auto m = scalar_model();
  Dataset d = gen_temperature(12, 8, 2.0, 61);
  SplitDataset split = split_dataset(d, 0.7, 0.2, 0.1, 3);

  Rng rng(2);
  GateBank start = make_gate_bank(1, 2, 3, rng);

  TrainConfig cfg;
  cfg.stage = TrainStage::Filter;
  cfg.lr = 3e-3;
  cfg.batch = 4;
  cfg.epochs = 3;
  cfg.patience = 10;
  cfg.seed = 31337;

  TrainResult a = train_stage(start, split, *m, cfg);
  TrainResult b = train_stage(start, split, *m, cfg);
  CHECK(banks_equal(a.bank, b.bank));
  REQUIRE(a.report.epochs.size() == b.report.epochs.size());
  for (std::size_t i = 0; i < a.report.epochs.size(); ++i) {
    CHECK(a.report.epochs[i].train_loss == b.report.epochs[i].train_loss);
    CHECK(a.report.epochs[i].val_rmse == b.report.epochs[i].val_rmse);
  }
}

TEST_CASE("trained filter approaches the optimal filter on self-consistent linear data") {
  // Data generated by the very model the nominal filter assumes: there is
  // nothing for the gates to learn, so training must drive them quiet and
  // land within 2% of the classical filter's RMSE.
  auto m = scalar_model(1.0, 1.0);
  Rng sim_rng(501);
  Dataset d;
  d.n_x = 1;
  d.n_z = 1;
  d.k_len = 10;
  for (int id = 0; id < 60; ++id) {
    Rng rng(derive_seed(808, static_cast<std::uint64_t>(id)));
    TrajectorySample s;
    s.id = id;
    double x = rng.normal() * 2.0;
    for (int k = 0; k < d.k_len; ++k) {
      if (k > 0) x += rng.normal();  // q2 = 1 random walk
      s.x.push_back(Mat::filled(1, 1, x));
      s.z.push_back(Mat::filled(1, 1, x + rng.normal()));  // r = 1
    }
    d.samples.push_back(std::move(s));
  }
  SplitDataset split = split_dataset(d, 0.7, 0.2, 0.1, 91);

  Rng rng(14);
  GateBank start = make_gate_bank(1, 2, 4, rng);

  TrainConfig cfg;
  cfg.stage = TrainStage::Filter;
  cfg.lr = 3e-2;
  cfg.batch = 14;
  cfg.epochs = 150;
  cfg.patience = 150;
  cfg.seed = 4096;
  TrainResult r = train_stage(start, split, *m, cfg);

  const double kf = classic_filter_rmse(split.validation, *m);
  const double learned = validation_rmse(r.bank, split.validation, *m, TrainStage::Filter);
  CHECK(learned <= 1.02 * kf);
}

TEST_CASE("non-finite losses abort with the offending sample named") {
  auto m = scalar_model();
  Dataset d = gen_temperature(10, 8, 2.0, 71);
  d.samples[3].z[4](0, 0) = std::nan("");
  SplitDataset split = split_dataset(d, 0.7, 0.2, 0.1, 1);

  // Only trip if sample 3 landed in train; force it there by splitting until
  // it does (seeded, so just assert on the built split).
  bool in_train = false;
  for (const auto& s : split.train.samples) in_train = in_train || s.id == 3;
  if (!in_train) {
    for (std::uint64_t seed = 2; seed < 64 && !in_train; ++seed) {
      split = split_dataset(d, 0.7, 0.2, 0.1, seed);
      for (const auto& s : split.train.samples) in_train = in_train || s.id == 3;
    }
  }
  REQUIRE(in_train);

  Rng rng(5);
  GateBank start = make_gate_bank(1, 2, 3, rng);
  TrainConfig cfg;
  cfg.stage = TrainStage::Filter;
  cfg.batch = static_cast<int>(split.train.samples.size());
  cfg.epochs = 1;
  CHECK_THROWS_WITH_AS(train_stage(start, split, *m, cfg), doctest::Contains("sample 3"),
                       NumericError);
}

TEST_CASE("config validation rejects broken settings") {
  auto m = scalar_model();
  Dataset d = gen_temperature(10, 6, 1.0, 3);
  SplitDataset split = split_dataset(d, 0.7, 0.2, 0.1, 1);
  Rng rng(1);
  GateBank start = make_gate_bank(1, 2, 3, rng);

  TrainConfig cfg;
  cfg.batch = 100;  // > training-set size
  CHECK_THROWS_AS(train_stage(start, split, *m, cfg), ConfigError);
  cfg.batch = 4;
  cfg.lr = -1.0;
  CHECK_THROWS_AS(train_stage(start, split, *m, cfg), ConfigError);
  cfg.lr = 1e-3;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_stage(start, split, *m, cfg), ConfigError);
}

TEST_CASE("train report serializes with timing quarantined") {
  TrainReport rep;
  rep.stage = 1;
  rep.epochs = {{0.5, 1.25, 0.01}, {0.25, 1.0, 0.02}};
  rep.best_epoch = 1;
  rep.best_val_rmse = 1.0;
  rep.ran_epochs = 2;

  const std::string js = train_report_to_json(rep);
  nlohmann::json parsed = nlohmann::json::parse(js);
  CHECK(parsed["stage"] == 1);
  CHECK(parsed["best_epoch"] == 1);
  CHECK(parsed["epochs"].size() == 2);
  CHECK(parsed["epochs"][1]["train_loss"] == 0.25);
  CHECK(parsed.contains("timing"));
  CHECK(parsed["timing"]["epoch_seconds"].size() == 2);
  // Stripping "timing" leaves only deterministic content.
  parsed.erase("timing");
  CHECK(!parsed.dump().empty());
}
