#include "ebrns/model.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "ebrns/errors.hpp"

namespace ebrns {

StateSpaceModel::StateSpaceModel(int n_x, int n_z, Mat q, Mat r, double dt)
    : n_x_(n_x), n_z_(n_z), q_(std::move(q)), r_(std::move(r)), dt_(dt) {
  if (q_.rows() != n_x_ || q_.cols() != n_x_)
    throw ConfigError("model: process noise must be " + std::to_string(n_x_) + "x" +
                      std::to_string(n_x_) + ", got " + q_.shape_str());
  if (r_.rows() != n_z_ || r_.cols() != n_z_)
    throw ConfigError("model: measurement noise must be " + std::to_string(n_z_) + "x" +
                      std::to_string(n_z_) + ", got " + r_.shape_str());
}

namespace {

Mat fd_jacobian(const Mat& x, int out_dim, const std::function<Mat(const Mat&)>& fn) {
  Mat j(out_dim, x.rows());
  for (int c = 0; c < x.rows(); ++c) {
    const double hc = 1e-6 * std::max(1.0, std::fabs(x(c, 0)));
    Mat xp = x, xm = x;
    xp(c, 0) += hc;
    xm(c, 0) -= hc;
    Mat fp = fn(xp), fm = fn(xm);
    for (int r = 0; r < out_dim; ++r) j(r, c) = (fp(r, 0) - fm(r, 0)) / (2.0 * hc);
  }
  return j;
}

}  // namespace

Mat StateSpaceModel::jac_f(const Mat& x, int k) const {
  return fd_jacobian(x, n_x_, [&](const Mat& v) { return f(v, k); });
}

Mat StateSpaceModel::jac_h(const Mat& x, int k) const {
  return fd_jacobian(x, n_z_, [&](const Mat& v) { return h(v, k); });
}

Var StateSpaceModel::f_t(Tape& t, Var x, int k) const { return t.constant(f(t.value(x), k)); }
Var StateSpaceModel::h_t(Tape& t, Var x, int k) const { return t.constant(h(t.value(x), k)); }
Var StateSpaceModel::jac_f_t(Tape& t, Var x, int k) const {
  return t.constant(jac_f(t.value(x), k));
}
Var StateSpaceModel::jac_h_t(Tape& t, Var x, int k) const {
  return t.constant(jac_h(t.value(x), k));
}

namespace {

// Linear-Gaussian base: f and h are constant matrices, taped as constants
// multiplied into the state so gradients flow through x exactly.
class LinearModel : public StateSpaceModel {
 public:
  LinearModel(Mat fmat, Mat hmat, Mat q, Mat r, double dt, std::string name)
      : StateSpaceModel(fmat.rows(), hmat.rows(), std::move(q), std::move(r), dt),
        f_(std::move(fmat)),
        h_(std::move(hmat)),
        name_(std::move(name)) {}

  std::string name() const override { return name_; }
  Mat f(const Mat& x, int) const override { return matmul(f_, x); }
  Mat h(const Mat& x, int) const override { return matmul(h_, x); }
  Mat jac_f(const Mat&, int) const override { return f_; }
  Mat jac_h(const Mat&, int) const override { return h_; }
  Var f_t(Tape& t, Var x, int) const override { return matmul(t.constant(f_), x); }
  Var h_t(Tape& t, Var x, int) const override { return matmul(t.constant(h_), x); }
  Var jac_f_t(Tape& t, Var, int) const override { return t.constant(f_); }
  Var jac_h_t(Tape& t, Var, int) const override { return t.constant(h_); }

 protected:
  Mat f_, h_;
  std::string name_;
};

class RandomWalk1d final : public LinearModel {
 public:
  RandomWalk1d(double q2, double r2, double dt)
      : LinearModel(Mat::identity(1), Mat::identity(1), Mat(1, 1, {q2}), Mat(1, 1, {r2}), dt,
                    "rw1d") {}
  Mat init_mean(const Mat& z0) const override { return z0; }
  Mat init_cov() const override { return Mat(1, 1, {1e4 * r_(0, 0)}); }
};

Mat cv_transition(double dt) {
  Mat f = Mat::identity(4);
  f(0, 2) = dt;
  f(1, 3) = dt;
  return f;
}

class Cv2dLinear final : public LinearModel {
 public:
  Cv2dLinear(double q2, const std::vector<double>& r_diag, double dt)
      : LinearModel(cv_transition(dt), Mat(2, 4, {1, 0, 0, 0, 0, 1, 0, 0}), scale(Mat::identity(4), q2),
                    Mat::diag(r_diag), dt, "cv2d-linear") {}
  Mat init_mean(const Mat& z0) const override {
    return Mat::col({z0(0, 0), z0(1, 0), 0.0, 0.0});  // positions observed, velocities unknown
  }
  Mat init_cov() const override {
    const double s = 1e4 * std::max(r_(0, 0), r_(1, 1));
    return Mat::diag({s, s, s / (dt_ * dt_), s / (dt_ * dt_)});
  }
};

class Cv2dRadar final : public StateSpaceModel {
 public:
  Cv2dRadar(double q2, const std::vector<double>& r_diag, double dt)
      : StateSpaceModel(4, 2, scale(Mat::identity(4), q2), Mat::diag(r_diag), dt),
        f_(cv_transition(dt)) {}

  std::string name() const override { return "cv2d-radar"; }
  Mat f(const Mat& x, int) const override { return matmul(f_, x); }
  Mat jac_f(const Mat&, int) const override { return f_; }
  Var f_t(Tape& t, Var x, int) const override { return matmul(t.constant(f_), x); }
  Var jac_f_t(Tape& t, Var, int) const override { return t.constant(f_); }

  Mat h(const Mat& x, int) const override { return radar_measure(x); }

  // H = [[px/eta, py/eta, 0, 0], [-py/eta^2, px/eta^2, 0, 0]].
  Mat jac_h(const Mat& x, int) const override {
    const double px = x(0, 0), py = x(1, 0);
    const double r2 = px * px + py * py;
    check_domain(r2);
    const double eta = std::sqrt(r2);
    return Mat(2, 4, {px / eta, py / eta, 0, 0, -py / r2, px / r2, 0, 0});
  }

  Var h_t(Tape& t, Var x, int) const override {
    Var px = rows(x, 0, 1), py = rows(x, 1, 2);
    check_domain(t.value(px)(0, 0) * t.value(px)(0, 0) + t.value(py)(0, 0) * t.value(py)(0, 0));
    Var eta = sqrt_ew(add(hadamard(px, px), hadamard(py, py)));
    Var alpha = atan2_ew(py, px);
    return vcat(eta, alpha);
  }

  Var jac_h_t(Tape& t, Var x, int) const override {
    Var px = rows(x, 0, 1), py = rows(x, 1, 2);
    Var r2 = add(hadamard(px, px), hadamard(py, py));
    check_domain(t.value(r2)(0, 0));
    Var eta = sqrt_ew(r2);
    Var z1 = t.constant(Mat::zeros(2, 1));
    Var row0 = transpose(vcat(vcat(div_ew(px, eta), div_ew(py, eta)), z1));
    Var row1 = transpose(vcat(vcat(scale(div_ew(py, r2), -1.0), div_ew(px, r2)), z1));
    return vcat(row0, row1);
  }

  std::vector<int> angle_rows() const override { return {1}; }

  // Mean through the sensor pseudo-inverse: positions from polar coordinates,
  // velocities zeroed.
  Mat init_mean(const Mat& z0) const override {
    const double eta = z0(0, 0), alpha = z0(1, 0);
    return Mat::col({eta * std::cos(alpha), eta * std::sin(alpha), 0.0, 0.0});
  }
  Mat init_cov() const override {
    const double s = 1e4 * r_(0, 0);  // range variance sets the position scale
    return Mat::diag({s, s, s / (dt_ * dt_), s / (dt_ * dt_)});
  }

 private:
  static void check_domain(double r2) {
    if (!(r2 > 0.0))
      throw ContractError("radar_measure: range/azimuth undefined at the origin (domain error)");
  }
  Mat f_;
};

}  // namespace

BuiltinModelId parse_model_id(const std::string& s) {
  if (s == "rw1d") return BuiltinModelId::RandomWalk1d;
  if (s == "cv2d-linear") return BuiltinModelId::Cv2dLinear;
  if (s == "cv2d-radar") return BuiltinModelId::Cv2dRadar;
  throw ConfigError("unknown model id '" + s + "' (expected rw1d, cv2d-linear or cv2d-radar)");
}

std::string model_id_name(BuiltinModelId id) {
  switch (id) {
    case BuiltinModelId::RandomWalk1d: return "rw1d";
    case BuiltinModelId::Cv2dLinear: return "cv2d-linear";
    case BuiltinModelId::Cv2dRadar: return "cv2d-radar";
  }
  return "?";
}

std::unique_ptr<StateSpaceModel> make_builtin(BuiltinModelId id, const ModelParams& p) {
  if (!(p.q2 > 0.0)) throw ConfigError("model: process noise variance must be positive");
  for (double r : p.r_diag)
    if (!(r > 0.0)) throw ConfigError("model: measurement noise variances must be positive");
  switch (id) {
    case BuiltinModelId::RandomWalk1d: {
      if (p.r_diag.size() != 1)
        throw ConfigError("rw1d expects one measurement noise variance, got " +
                          std::to_string(p.r_diag.size()));
      return std::make_unique<RandomWalk1d>(p.q2, p.r_diag[0], p.dt);
    }
    case BuiltinModelId::Cv2dLinear: {
      if (p.r_diag.size() != 2)
        throw ConfigError("cv2d-linear expects two measurement noise variances, got " +
                          std::to_string(p.r_diag.size()));
      return std::make_unique<Cv2dLinear>(p.q2, p.r_diag, p.dt);
    }
    case BuiltinModelId::Cv2dRadar: {
      if (p.r_diag.size() != 2)
        throw ConfigError("cv2d-radar expects range and azimuth noise variances, got " +
                          std::to_string(p.r_diag.size()));
      return std::make_unique<Cv2dRadar>(p.q2, p.r_diag, p.dt);
    }
  }
  throw ConfigError("make_builtin: unhandled model id");
}

Mat radar_measure(const Mat& x) {
  if (x.rows() < 2 || x.cols() != 1)
    throw DimensionError("radar_measure: needs a state column with px, py leading, got " +
                         x.shape_str());
  const double px = x(0, 0), py = x(1, 0);
  const double r2 = px * px + py * py;
  if (!(r2 > 0.0))
    throw ContractError("radar_measure: range/azimuth undefined at the origin (domain error)");
  return Mat::col({std::sqrt(r2), std::atan2(py, px)});
}

Mat sample_measurement(const StateSpaceModel& m, const Mat& x, int k, Rng& rng) {
  Mat z = m.h(x, k);
  const CholFactor f = chol_factor(m.meas_noise());
  Mat n(m.meas_dim(), 1);
  for (int i = 0; i < n.rows(); ++i) n(i, 0) = rng.normal();
  // z + L n, L lower Cholesky of R.
  for (int i = 0; i < z.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j <= i; ++j) s += f.l(i, j) * n(j, 0);
    z(i, 0) += s;
  }
  return z;
}

JacobianCheckResult jacobian_check(const StateSpaceModel& m, const Mat& x, int k, double step) {
  auto err = [&](const Mat& analytic, int out_dim, const std::function<Mat(const Mat&)>& fn) {
    Mat fd(out_dim, x.rows());
    for (int c = 0; c < x.rows(); ++c) {
      const double hc = step * std::max(1.0, std::fabs(x(c, 0)));  // relative step
      Mat xp = x, xm = x;
      xp(c, 0) += hc;
      xm(c, 0) -= hc;
      Mat fp = fn(xp), fm = fn(xm);
      for (int r = 0; r < out_dim; ++r) fd(r, c) = (fp(r, 0) - fm(r, 0)) / (2.0 * hc);
    }
    return max_abs_diff(analytic, fd) / std::max(1.0, fd.max_abs());
  };
  JacobianCheckResult res;
  res.f_err = err(m.jac_f(x, k), m.state_dim(), [&](const Mat& v) { return m.f(v, k); });
  res.h_err = err(m.jac_h(x, k), m.meas_dim(), [&](const Mat& v) { return m.h(v, k); });
  return res;
}

}  // namespace ebrns
