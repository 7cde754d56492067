#include "ebrns/eval.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "ebrns/classic.hpp"
#include "ebrns/ebrns.hpp"
#include "ebrns/errors.hpp"
#include "ebrns/rng.hpp"

namespace ebrns {

namespace {

std::string fmt17(double v) {
  char buf[36];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt4(double v) {
  char buf[36];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void check_error_tensor(const std::vector<std::vector<Mat>>& errors) {
  if (errors.empty()) throw ContractError("rmse: no runs");
  const std::size_t k_len = errors[0].size();
  if (k_len == 0) throw ContractError("rmse: runs have no frames");
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i].size() != k_len)
      throw ContractError("rmse: run " + std::to_string(i) + " has " +
                          std::to_string(errors[i].size()) + " frames, expected " +
                          std::to_string(k_len));
    for (const Mat& e : errors[i])
      if (e.cols() != 1) throw ContractError("rmse: errors must be column vectors");
  }
}

double sq_norm(const Mat& e, int lo, int hi) {
  double s = 0.0;
  for (int i = lo; i < hi; ++i) s += e(i, 0) * e(i, 0);
  return s;
}

}  // namespace

std::string estimator_name(EstimatorId id) {
  switch (id) {
    case EstimatorId::ClassicFilter: return "classic_filter";
    case EstimatorId::ClassicSmoother: return "classic_smoother";
    case EstimatorId::EbrnsFilter: return "ebrns_filter";
    case EstimatorId::EbrnsSmoother: return "ebrns_smoother";
  }
  throw ContractError("estimator_name: unknown id");
}

EstimatorId parse_estimator(const std::string& name) {
  if (name == "classic_filter") return EstimatorId::ClassicFilter;
  if (name == "classic_smoother") return EstimatorId::ClassicSmoother;
  if (name == "ebrns_filter") return EstimatorId::EbrnsFilter;
  if (name == "ebrns_smoother") return EstimatorId::EbrnsSmoother;
  throw ConfigError("parse_estimator: unknown estimator '" + name +
                    "' (expected classic_filter, classic_smoother, ebrns_filter or "
                    "ebrns_smoother)");
}

std::vector<double> rmse_per_step(const std::vector<std::vector<Mat>>& errors) {
  check_error_tensor(errors);
  const int m = static_cast<int>(errors.size());
  const int k_len = static_cast<int>(errors[0].size());
  std::vector<double> out(k_len, 0.0);
  for (int k = 0; k < k_len; ++k) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += sq_norm(errors[i][k], 0, errors[i][k].rows());
    out[k] = std::sqrt(s / m);
  }
  return out;
}

double rmse_mean(const std::vector<std::vector<Mat>>& errors) {
  check_error_tensor(errors);
  const int m = static_cast<int>(errors.size());
  const int k_len = static_cast<int>(errors[0].size());
  double s = 0.0;
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < k_len; ++k) s += sq_norm(errors[i][k], 0, errors[i][k].rows());
  return std::sqrt(s / (static_cast<double>(k_len) * m));
}

std::vector<Mat> estimate_means(EstimatorId id, const GateBank* bank,
                                const StateSpaceModel& m, const std::vector<Mat>& z,
                                bool nominal) {
  const GaussianBelief init = default_init(m, z[0]);
  std::vector<Mat> means;
  means.reserve(z.size());
  switch (id) {
    case EstimatorId::ClassicFilter: {
      SequenceCache c = run_classic(m, z, init, RunMode::Filter);
      for (const auto& s : c.steps) means.push_back(s.filtered.mean);
      break;
    }
    case EstimatorId::ClassicSmoother: {
      SequenceCache c = run_classic(m, z, init, RunMode::Smooth);
      for (const auto& b : c.smoothed) means.push_back(b.mean);
      break;
    }
    case EstimatorId::EbrnsFilter:
    case EstimatorId::EbrnsSmoother: {
      if (bank == nullptr)
        throw ContractError("estimate_means: " + estimator_name(id) +
                            " requires a gate bank");
      const bool smooth = id == EstimatorId::EbrnsSmoother;
      EbrnsSequence seq = run_ebrns(*bank, m, z, init,
                                    smooth ? EbrnsMode::Smooth : EbrnsMode::Filter, nominal);
      const auto& src = smooth ? seq.smoothed : seq.filtered;
      for (const auto& b : src) means.push_back(b.mean);
      break;
    }
  }
  return means;
}

namespace {

McResult pool_errors(EstimatorId id, int m_runs,
                     const std::vector<std::vector<Mat>>& errors, int n_x) {
  McResult r;
  r.estimator = estimator_name(id);
  r.m_runs = m_runs;
  r.per_step = rmse_per_step(errors);
  r.mean_rmse = rmse_mean(errors);
  if (n_x == 4) {
    const int k_len = static_cast<int>(errors[0].size());
    double pos = 0.0, vel = 0.0;
    for (const auto& run : errors)
      for (const Mat& e : run) {
        pos += sq_norm(e, 0, 2);
        vel += sq_norm(e, 2, 4);
      }
    const double denom = static_cast<double>(k_len) * static_cast<double>(errors.size());
    r.group_names = {"position", "velocity"};
    r.group_mean = {std::sqrt(pos / denom), std::sqrt(vel / denom)};
  }
  return r;
}

}  // namespace

McResult mc_run(EstimatorId id, const GateBank* bank, const TrajectorySample& truth,
                const StateSpaceModel& m, int m_runs, std::uint64_t seed, bool nominal) {
  if (m_runs < 1)
    throw ConfigError("mc_run: run count must be >= 1 (got " + std::to_string(m_runs) + ")");
  const int k_len = static_cast<int>(truth.x.size());
  if (k_len < 2) throw ContractError("mc_run: truth needs at least 2 frames");
  if ((id == EstimatorId::EbrnsFilter || id == EstimatorId::EbrnsSmoother) && bank == nullptr)
    throw ContractError("mc_run: " + estimator_name(id) + " requires a gate bank");

  std::vector<std::vector<Mat>> errors(m_runs);
  for (int i = 0; i < m_runs; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::vector<Mat> means;
    try {
      std::vector<Mat> z;
      z.reserve(k_len);
      for (int k = 0; k < k_len; ++k) z.push_back(sample_measurement(m, truth.x[k], k, rng));
      means = estimate_means(id, bank, m, z, nominal);
    } catch (const std::exception& e) {
      throw NumericError("mc_run: " + estimator_name(id) + " failed on run " +
                         std::to_string(i) + ": " + e.what());
    }
    errors[i].reserve(k_len);
    for (int k = 0; k < k_len; ++k) errors[i].push_back(sub(means[k], truth.x[k]));
  }
  return pool_errors(id, m_runs, errors, m.state_dim());
}

McResult evaluate_dataset(EstimatorId id, const GateBank* bank, const Dataset& data,
                          const StateSpaceModel& m, bool nominal) {
  if (data.samples.empty()) throw ContractError("evaluate_dataset: empty dataset");
  if ((id == EstimatorId::EbrnsFilter || id == EstimatorId::EbrnsSmoother) && bank == nullptr)
    throw ContractError("evaluate_dataset: " + estimator_name(id) + " requires a gate bank");
  std::vector<std::vector<Mat>> errors(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const TrajectorySample& s = data.samples[i];
    std::vector<Mat> means;
    try {
      means = estimate_means(id, bank, m, s.z, nominal);
    } catch (const std::exception& e) {
      throw NumericError("evaluate_dataset: " + estimator_name(id) + " failed on sample " +
                         std::to_string(s.id) + ": " + e.what());
    }
    errors[i].reserve(s.x.size());
    for (std::size_t k = 0; k < s.x.size(); ++k)
      errors[i].push_back(sub(means[k], s.x[k]));
  }
  return pool_errors(id, static_cast<int>(data.samples.size()), errors, m.state_dim());
}

namespace {

void check_report_pre(const std::vector<McResult>& results) {
  if (results.empty()) throw ContractError("compare_report: no results");
  const int k_len = results[0].k_len();
  for (const McResult& r : results)
    if (r.k_len() != k_len)
      throw ContractError("compare_report: sequence length mismatch (" + r.estimator +
                          " has " + std::to_string(r.k_len()) + " steps, expected " +
                          std::to_string(k_len) + ")");
}

}  // namespace

std::string compare_report_json(const std::vector<McResult>& results) {
  check_report_pre(results);
  std::ostringstream os;
  os << "{\n  \"k_len\": " << results[0].k_len() << ",\n  \"estimators\": [\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const McResult& r = results[i];
    os << "    {\n      \"estimator\": \"" << r.estimator << "\",\n"
       << "      \"m_runs\": " << r.m_runs << ",\n"
       << "      \"mean_rmse\": " << fmt17(r.mean_rmse) << ",\n";
    os << "      \"groups\": {";
    for (std::size_t g = 0; g < r.group_names.size(); ++g) {
      if (g) os << ", ";
      os << "\"" << r.group_names[g] << "\": " << fmt17(r.group_mean[g]);
    }
    os << "},\n      \"per_step\": [";
    for (int k = 0; k < r.k_len(); ++k) {
      if (k) os << ", ";
      os << fmt17(r.per_step[k]);
    }
    os << "]\n    }" << (i + 1 < results.size() ? "," : "") << "\n";
  }
  os << "  ]\n}\n";
  return os.str();
}

std::string compare_report_csv(const std::vector<McResult>& results) {
  check_report_pre(results);
  std::ostringstream os;
  os << "estimator,m_runs,mean_rmse";
  for (const std::string& g : results[0].group_names) os << "," << g << "_mean_rmse";
  for (int k = 0; k < results[0].k_len(); ++k) os << ",rmse_k" << k;
  os << "\n";
  for (const McResult& r : results) {
    if (r.group_names != results[0].group_names)
      throw ContractError("compare_report: dimension groups differ between results");
    os << r.estimator << "," << r.m_runs << "," << fmt17(r.mean_rmse);
    for (double g : r.group_mean) os << "," << fmt17(g);
    for (int k = 0; k < r.k_len(); ++k) os << "," << fmt17(r.per_step[k]);
    os << "\n";
  }
  return os.str();
}

std::string summary_table(const std::vector<McResult>& results) {
  check_report_pre(results);
  std::ostringstream os;
  os << "estimator          runs  mean_rmse";
  for (const std::string& g : results[0].group_names) os << "  " << g;
  os << "\n";
  for (const McResult& r : results) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-18s %4d  %9s", r.estimator.c_str(), r.m_runs,
                  fmt4(r.mean_rmse).c_str());
    os << line;
    for (std::size_t g = 0; g < r.group_mean.size(); ++g) {
      std::snprintf(line, sizeof(line), "  %8s", fmt4(r.group_mean[g]).c_str());
      os << line;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace ebrns
