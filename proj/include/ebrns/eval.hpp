#pragma once

// Monte-Carlo evaluation harness: per-step and aggregate RMSE for any of the
// four estimators (classical filter/smoother, learned filter/smoother), with
// fixed-truth/resampled-noise runs and machine-readable comparison reports.
//
// Metrics:
//   per-step:  R_k    = sqrt( (1/M)    sum_i  |e_k^(i)|^2 )
//   aggregate: R_mean = sqrt( (1/(K M)) sum_i sum_k |e_k^(i)|^2 )
// The aggregate pools squared errors over every run and frame before the
// root; it is NOT the average of the per-step values. For 4-dimensional
// states the position (dims 0,1) and velocity (dims 2,3) groups are also
// reported, each pooled with the same 1/(K M) normalization.

#include <cstdint>
#include <string>
#include <vector>

#include "ebrns/dataset.hpp"
#include "ebrns/gates.hpp"
#include "ebrns/mat.hpp"
#include "ebrns/model.hpp"

namespace ebrns {

enum class EstimatorId { ClassicFilter, ClassicSmoother, EbrnsFilter, EbrnsSmoother };

// Stable machine names: classic_filter, classic_smoother, ebrns_filter,
// ebrns_smoother.
std::string estimator_name(EstimatorId id);
EstimatorId parse_estimator(const std::string& name);

struct McResult {
  std::string estimator;
  int m_runs = 0;
  std::vector<double> per_step;  // R_k for k = 0..K-1
  double mean_rmse = 0.0;
  // Dimension groups: filled only for 4-dim states (position, velocity).
  std::vector<std::string> group_names;
  std::vector<double> group_mean;
  int k_len() const { return static_cast<int>(per_step.size()); }
};

// errors[i][k] is the (d x 1) estimation error of run i at frame k. All runs
// must share K >= 1; M >= 1.
std::vector<double> rmse_per_step(const std::vector<std::vector<Mat>>& errors);
double rmse_mean(const std::vector<std::vector<Mat>>& errors);

// Runs an estimator end to end on a measurement sequence and returns the
// estimate means per frame (filtered or smoothed depending on the id).
// `bank` is required for the learned estimators and ignored by the classical
// ones.
std::vector<Mat> estimate_means(EstimatorId id, const GateBank* bank,
                                const StateSpaceModel& m, const std::vector<Mat>& z,
                                bool nominal = false);

// Fixed-truth Monte-Carlo protocol: for each run i in 0..M-1, fresh
// measurement noise is drawn on the same truth with the per-run seed
// derive_seed(seed, i), the estimator is run, and errors are pooled.
// A run failure aborts with the run index in the error message.
McResult mc_run(EstimatorId id, const GateBank* bank, const TrajectorySample& truth,
                const StateSpaceModel& m, int m_runs, std::uint64_t seed,
                bool nominal = false);

// Whole-test-set aggregation: each sample contributes one run using its own
// recorded measurements (no noise regeneration), pooled as M = sample count.
McResult evaluate_dataset(EstimatorId id, const GateBank* bank, const Dataset& data,
                          const StateSpaceModel& m, bool nominal = false);

// Comparison reports over estimators sharing K. JSON and CSV carry full
// 17-significant-digit values; the human summary rounds to 4.
std::string compare_report_json(const std::vector<McResult>& results);
std::string compare_report_csv(const std::vector<McResult>& results);
std::string summary_table(const std::vector<McResult>& results);

}  // namespace ebrns
