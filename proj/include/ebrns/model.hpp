#pragma once

// State-space model abstraction: transition f with Jacobian F, measurement h
// with Jacobian H, constant process/measurement noise Q/R, and a sampling
// interval. Built-in models cover the scalar random walk and the 2-D
// constant-velocity motion model with either a linear position sensor or a
// range/azimuth radar. Analytic Jacobians for the built-ins; user subclasses
// inherit a central finite-difference fallback.

#include <memory>
#include <string>
#include <vector>

#include "ebrns/mat.hpp"
#include "ebrns/rng.hpp"
#include "ebrns/tape.hpp"

namespace ebrns {

class StateSpaceModel {
 public:
  StateSpaceModel(int n_x, int n_z, Mat q, Mat r, double dt);
  virtual ~StateSpaceModel() = default;

  int state_dim() const { return n_x_; }
  int meas_dim() const { return n_z_; }
  const Mat& process_noise() const { return q_; }   // n_x x n_x
  const Mat& meas_noise() const { return r_; }      // n_z x n_z
  double dt() const { return dt_; }
  virtual std::string name() const = 0;

  // Transition / measurement maps; k is the (0-based) destination frame for f
  // and the current frame for h. The built-ins are time-invariant.
  virtual Mat f(const Mat& x, int k) const = 0;
  virtual Mat h(const Mat& x, int k) const = 0;

  // Jacobians; default central finite difference (h = 1e-6 * max(1,|x|)).
  virtual Mat jac_f(const Mat& x, int k) const;
  virtual Mat jac_h(const Mat& x, int k) const;

  // Taped counterparts used inside the differentiable recursions. Defaults:
  // exact for nothing — they re-evaluate the eager map at the current value
  // and record it as a constant, which kills gradient flow through the map.
  // The built-ins override all four with exact taped graphs.
  virtual Var f_t(Tape& t, Var x, int k) const;
  virtual Var h_t(Tape& t, Var x, int k) const;
  virtual Var jac_f_t(Tape& t, Var x, int k) const;
  virtual Var jac_h_t(Tape& t, Var x, int k) const;

  // Measurement rows that are angles: innovations in these rows are wrapped
  // to (-pi, pi]. Empty for purely linear sensors.
  virtual std::vector<int> angle_rows() const { return {}; }

  // Initialization policy: mean lifted from the first measurement through a
  // documented pseudo-inverse of the sensor map (velocities zeroed), and a
  // large diagonal covariance at 1e4 x the measurement-noise scale.
  virtual Mat init_mean(const Mat& z0) const = 0;
  virtual Mat init_cov() const = 0;

 protected:
  int n_x_, n_z_;
  Mat q_, r_;
  double dt_;
};

enum class BuiltinModelId { RandomWalk1d, Cv2dLinear, Cv2dRadar };

// Parse/format of the CLI model names: rw1d, cv2d-linear, cv2d-radar.
BuiltinModelId parse_model_id(const std::string& s);
std::string model_id_name(BuiltinModelId id);

struct ModelParams {
  double dt = 1.0;
  double q2 = 1.0;                // process noise variance (every state dim)
  std::vector<double> r_diag;    // measurement noise variances, length n_z
};

std::unique_ptr<StateSpaceModel> make_builtin(BuiltinModelId id, const ModelParams& p);

// Range/azimuth of a planar position: [sqrt(px^2+py^2); atan2(py, px)].
// The origin is outside the sensor's domain.
Mat radar_measure(const Mat& x);

// Sample z = h(x) + v, v ~ N(0, R) through the Cholesky factor of R.
Mat sample_measurement(const StateSpaceModel& m, const Mat& x, int k, Rng& rng);

// Max normalized discrepancy between analytic and central-FD Jacobians at x.
struct JacobianCheckResult {
  double f_err = 0.0;
  double h_err = 0.0;
};
JacobianCheckResult jacobian_check(const StateSpaceModel& m, const Mat& x, int k,
                                   double step = 1e-6);

}  // namespace ebrns
