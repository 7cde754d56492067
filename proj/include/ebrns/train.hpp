#pragma once

// Two-stage supervised training of the gate banks by mini-batch SGD with
// gradients backpropagated through the full filter/smoother recursions.
// Stage one trains the forward nets against filtered-state error with the
// backward nets inert; stage two freezes the forward nets and trains the
// backward nets against smoothed-state error.

#include <cstdint>
#include <string>
#include <vector>

#include "ebrns/dataset.hpp"
#include "ebrns/gates.hpp"
#include "ebrns/model.hpp"

namespace ebrns {

// Which half of the bank learns, and which estimates the loss supervises.
enum class TrainStage { Filter, Smooth };

struct TrainConfig {
  TrainStage stage = TrainStage::Filter;
  double lr = 1e-3;
  int batch = 32;  // J samples per SGD step
  int epochs = 200;
  double tau_a = 1e-5;  // L2 weight on the forward nets (stage one)
  double tau_b = 1e-5;  // L2 weight on the backward nets (stage two)
  double clip = 5.0;    // global gradient-norm threshold
  std::uint64_t seed = 1;
  int patience = 20;  // epochs without validation improvement before stopping
};

struct EpochStats {
  double train_loss = 0.0;  // mean over the epoch's batch losses
  double val_rmse = 0.0;
  double seconds = 0.0;  // wall time; excluded from determinism comparisons
};

struct TrainReport {
  int stage = 1;
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // epoch whose validation RMSE was minimal
  double best_val_rmse = 0.0;
  int ran_epochs = 0;  // may stop early on patience
};

struct TrainResult {
  GateBank bank;  // parameters of the best validation epoch
  TrainReport report;
};

// Per-sample losses (eager wrappers used by tests and the trainer).
// Both are (1/K) * sum of squared state-estimate errors over the estimated
// frames (every frame after the initial one; K-1 summands over K, keeping
// the documented normalization) plus tau * squared L2 norm of the stage's
// own parameter set. Stage one scores filtered means, stage two smoothed.
double filtered_loss(const GateBank& bank, const TrajectorySample& sample,
                     const StateSpaceModel& m, double tau_a);
double smoothed_loss(const GateBank& bank, const TrajectorySample& sample,
                     const StateSpaceModel& m, double tau_b);

// Mean RMSE of an estimator pass over a dataset: sqrt of the average squared
// error norm over all samples and the estimated frames 1..K-1. Used for
// validation-based model selection.
double validation_rmse(const GateBank& bank, const Dataset& data, const StateSpaceModel& m,
                       TrainStage stage);

// One training stage. The bank's normalization statistics are (re)fitted
// from the split's train statistics before any gradient work. Per epoch:
// seeded shuffle, floor(I/J) batches of J (remainder skipped that epoch),
// per-sample gradients accumulated in ascending sample-id order, global-norm
// clip, SGD step; then validation mean-RMSE. Keeps the parameters of the
// best validation epoch; stops after `patience` epochs without improvement.
// Deterministic in (inputs, config.seed). Non-finite losses abort with a
// NumericError naming the epoch, batch, and sample.
TrainResult train_stage(const GateBank& start, const SplitDataset& split,
                        const StateSpaceModel& m, const TrainConfig& cfg);

// Report serialization: stable field order; timing lives in a separate
// "timing" object so determinism checks can ignore it.
std::string train_report_to_json(const TrainReport& report);

}  // namespace ebrns
