#include "ebrns/mat.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "ebrns/errors.hpp"

namespace ebrns {

namespace {

[[noreturn]] void dim_fail(const char* op, const Mat& a, const Mat& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << a.shape_str() << " and " << b.shape_str();
  throw DimensionError(os.str());
}

[[noreturn]] void dim_fail(const char* op, const Mat& a) {
  std::ostringstream os;
  os << op << ": bad shape " << a.shape_str();
  throw DimensionError(os.str());
}

}  // namespace

Mat::Mat(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
  assert(rows >= 0 && cols >= 0);
}

Mat::Mat(int rows, int cols, std::initializer_list<double> vals) : Mat(rows, cols) {
  assert(static_cast<int>(vals.size()) == rows * cols);
  std::copy(vals.begin(), vals.end(), data_.begin());
}

Mat Mat::zeros(int rows, int cols) { return Mat(rows, cols); }

Mat Mat::ones(int rows, int cols) { return filled(rows, cols, 1.0); }

Mat Mat::identity(int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::col(const std::vector<double>& vals) {
  Mat m(static_cast<int>(vals.size()), 1);
  std::copy(vals.begin(), vals.end(), m.data_.begin());
  return m;
}

Mat Mat::diag(const std::vector<double>& vals) {
  const int n = static_cast<int>(vals.size());
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = vals[i];
  return m;
}

Mat Mat::filled(int rows, int cols, double v) {
  Mat m(rows, cols);
  std::fill(m.data_.begin(), m.data_.end(), v);
  return m;
}

bool Mat::is_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Mat::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

std::string Mat::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) dim_fail("matmul", a, b);
  Mat c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Mat add(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) dim_fail("add", a, b);
  Mat c = a;
  for (int i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Mat sub(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) dim_fail("sub", a, b);
  Mat c = a;
  for (int i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Mat scale(const Mat& a, double s) {
  Mat c = a;
  for (int i = 0; i < c.size(); ++i) c[i] *= s;
  return c;
}

Mat hadamard(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) dim_fail("hadamard", a, b);
  Mat c = a;
  for (int i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

Mat vcat(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) dim_fail("vcat", a, b);
  Mat c(a.rows() + b.rows(), a.cols());
  std::memcpy(c.data(), a.data(), sizeof(double) * a.size());
  std::memcpy(c.data() + a.size(), b.data(), sizeof(double) * b.size());
  return c;
}

Mat hcat(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) dim_fail("hcat", a, b);
  Mat c(a.rows(), a.cols() + b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) c(i, j) = a(i, j);
    for (int j = 0; j < b.cols(); ++j) c(i, a.cols() + j) = b(i, j);
  }
  return c;
}

Mat block(const Mat& a, int r0, int c0, int nrows, int ncols) {
  if (r0 < 0 || c0 < 0 || nrows < 0 || ncols < 0 || r0 + nrows > a.rows() || c0 + ncols > a.cols()) {
    std::ostringstream os;
    os << "block: range [" << r0 << "," << r0 + nrows << ")x[" << c0 << "," << c0 + ncols
       << ") outside " << a.shape_str();
    throw DimensionError(os.str());
  }
  Mat c(nrows, ncols);
  for (int i = 0; i < nrows; ++i)
    for (int j = 0; j < ncols; ++j) c(i, j) = a(r0 + i, c0 + j);
  return c;
}

void set_block(Mat& a, int r0, int c0, const Mat& sub) {
  if (r0 < 0 || c0 < 0 || r0 + sub.rows() > a.rows() || c0 + sub.cols() > a.cols())
    dim_fail("set_block", a, sub);
  for (int i = 0; i < sub.rows(); ++i)
    for (int j = 0; j < sub.cols(); ++j) a(r0 + i, c0 + j) = sub(i, j);
}

Mat tanh_ew(const Mat& a) {
  Mat c = a;
  for (int i = 0; i < c.size(); ++i) c[i] = std::tanh(c[i]);
  return c;
}

Mat sigmoid_ew(const Mat& a) {
  Mat c = a;
  for (int i = 0; i < c.size(); ++i) c[i] = 1.0 / (1.0 + std::exp(-c[i]));
  return c;
}

Mat exp_ew(const Mat& a) {
  Mat c = a;
  for (int i = 0; i < c.size(); ++i) c[i] = std::exp(c[i]);
  return c;
}

Mat sqrt_ew(const Mat& a) {
  Mat c = a;
  for (int i = 0; i < c.size(); ++i) c[i] = std::sqrt(c[i]);
  return c;
}

Mat div_ew(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) dim_fail("div_ew", a, b);
  Mat c = a;
  for (int i = 0; i < c.size(); ++i) c[i] /= b[i];
  return c;
}

Mat atan2_ew(const Mat& y, const Mat& x) {
  if (y.rows() != x.rows() || y.cols() != x.cols()) dim_fail("atan2_ew", y, x);
  Mat c = y;
  for (int i = 0; i < c.size(); ++i) c[i] = std::atan2(y[i], x[i]);
  return c;
}

Mat clamp_ew(const Mat& a, double lo, double hi) {
  Mat c = a;
  for (int i = 0; i < c.size(); ++i) c[i] = std::min(hi, std::max(lo, c[i]));
  return c;
}

Mat sym(const Mat& p) {
  if (p.rows() != p.cols()) dim_fail("sym", p);
  Mat c(p.rows(), p.cols());
  for (int i = 0; i < p.rows(); ++i)
    for (int j = 0; j < p.cols(); ++j) c(i, j) = 0.5 * (p(i, j) + p(j, i));
  return c;
}

Mat diag_of(const Mat& a) {
  if (a.rows() != a.cols()) dim_fail("diag_of", a);
  Mat v(a.rows(), 1);
  for (int i = 0; i < a.rows(); ++i) v(i, 0) = a(i, i);
  return v;
}

Mat diag_from_col(const Mat& v) {
  if (v.cols() != 1) dim_fail("diag_from_col", v);
  Mat m(v.rows(), v.rows());
  for (int i = 0; i < v.rows(); ++i) m(i, i) = v(i, 0);
  return m;
}

double trace(const Mat& a) {
  if (a.rows() != a.cols()) dim_fail("trace", a);
  double t = 0.0;
  for (int i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

double sum_all(const Mat& a) {
  double t = 0.0;
  for (int i = 0; i < a.size(); ++i) t += a[i];
  return t;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) dim_fail("max_abs_diff", a, b);
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

bool bit_equal(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

namespace {

// Plain lower Cholesky with a fixed ridge already folded into the copy.
// Returns false on a non-positive pivot.
bool try_chol(const Mat& a, double ridge, Mat& l_out) {
  const int n = a.rows();
  Mat l(n, n);
  for (int j = 0; j < n; ++j) {
    double d = a(j, j) + ridge;
    for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double lj = std::sqrt(d);
    l(j, j) = lj;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / lj;
    }
  }
  l_out = std::move(l);
  return true;
}

}  // namespace

CholFactor chol_factor(const Mat& a) {
  if (a.rows() != a.cols()) dim_fail("chol_factor", a);
  const int n = a.rows();
  if (n == 0) dim_fail("chol_factor", a);
  // Symmetry gate, scaled by magnitude so meter^2-scale covariances are not
  // rejected for last-ulp asymmetry.
  double asym = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) asym = std::max(asym, std::fabs(a(i, j) - a(j, i)));
  if (asym > 1e-9 * std::max(1.0, a.max_abs())) {
    std::ostringstream os;
    os << "chol_factor: matrix " << a.shape_str() << " not symmetric (max asymmetry " << asym << ")";
    throw DimensionError(os.str());
  }
  CholFactor f;
  if (try_chol(a, 0.0, f.l)) return f;
  const double unit = std::max(trace(a) / n, 1e-300);  // ridge scale
  for (double lam : {1e-12, 1e-9, 1e-6}) {
    const double ridge = lam * unit;
    if (try_chol(a, ridge, f.l)) {
      f.jitter = ridge;
      return f;
    }
  }
  std::ostringstream os;
  os << "chol_factor: matrix " << a.shape_str()
     << " not positive definite; attempted ridges {0, " << 1e-12 * unit << ", " << 1e-9 * unit
     << ", " << 1e-6 * unit << "}";
  throw SingularMatrixError(os.str());
}

Mat chol_solve(const CholFactor& f, const Mat& b) {
  const Mat& l = f.l;
  const int n = l.rows();
  if (b.rows() != n) dim_fail("chol_solve", l, b);
  Mat x = b;
  // Forward substitution L Y = B.
  for (int c = 0; c < x.cols(); ++c) {
    for (int i = 0; i < n; ++i) {
      double s = x(i, c);
      for (int k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    // Back substitution L^T X = Y.
    for (int i = n - 1; i >= 0; --i) {
      double s = x(i, c);
      for (int k = i + 1; k < n; ++k) s -= l(k, i) * x(k, c);
      x(i, c) = s / l(i, i);
    }
  }
  return x;
}

Mat spd_solve(const Mat& a, const Mat& b) { return chol_solve(chol_factor(a), b); }

double min_eig_sym(const Mat& a) {
  if (a.rows() != a.cols()) dim_fail("min_eig_sym", a);
  const int n = a.rows();
  if (n == 1) return a(0, 0);
  Mat m = sym(a);
  // Cyclic Jacobi rotations; plenty for the tiny matrices used here.
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    if (off < 1e-30 * std::max(1.0, m.max_abs() * m.max_abs())) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
      }
    }
  }
  double mn = m(0, 0);
  for (int i = 1; i < n; ++i) mn = std::min(mn, m(i, i));
  return mn;
}

}  // namespace ebrns

#include "ebrns/monitor.hpp"

namespace ebrns {

namespace {
CovMonitor* g_cov_monitor = nullptr;
}

void set_cov_monitor(CovMonitor* m) { g_cov_monitor = m; }
CovMonitor* cov_monitor() { return g_cov_monitor; }

}  // namespace ebrns
