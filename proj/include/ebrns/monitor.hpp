#pragma once

// Optional global covariance monitor. When installed, every covariance the
// estimator run loops emit (predicted, filtered, smoothed — classic and
// learned paths alike) is reported with a site label, letting tests assert
// symmetry/positive-semidefiniteness across entire pipelines without
// instrumenting call sites one by one. Null (the default) costs one branch.

namespace ebrns {

class Mat;

class CovMonitor {
 public:
  virtual ~CovMonitor() = default;
  virtual void observe(const Mat& cov, const char* site) = 0;
};

void set_cov_monitor(CovMonitor* m);  // not owned; nullptr disables
CovMonitor* cov_monitor();

inline void observe_cov(const Mat& cov, const char* site) {
  if (CovMonitor* m = cov_monitor()) m->observe(cov, site);
}

}  // namespace ebrns
