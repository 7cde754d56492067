#pragma once

// Dense row-major double matrix plus the eager primitives the estimators are
// written in. Small fixed-size problems only (state dims <= ~8), so clarity
// and exact, auditable operation order win over blocking/vectorization.

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace ebrns {

class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols);  // zero-initialized
  Mat(int rows, int cols, std::initializer_list<double> vals);  // row-major

  static Mat zeros(int rows, int cols);
  static Mat ones(int rows, int cols);
  static Mat identity(int n);
  static Mat col(const std::vector<double>& vals);        // n x 1
  static Mat diag(const std::vector<double>& vals);       // n x n
  static Mat filled(int rows, int cols, double v);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int size() const { return rows_ * cols_; }
  bool empty() const { return size() == 0; }

  double& operator()(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }
  double& operator[](int i) { assert(i >= 0 && i < size()); return data_[i]; }
  double operator[](int i) const { assert(i >= 0 && i < size()); return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool is_finite() const;
  double max_abs() const;
  std::string shape_str() const;  // "RxC"

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// --- primitives (throw DimensionError naming op and shapes on mismatch) ---

Mat matmul(const Mat& a, const Mat& b);
Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
Mat scale(const Mat& a, double s);
Mat hadamard(const Mat& a, const Mat& b);
Mat vcat(const Mat& a, const Mat& b);   // stack rows
Mat hcat(const Mat& a, const Mat& b);   // stack cols
Mat block(const Mat& a, int r0, int c0, int nrows, int ncols);
void set_block(Mat& a, int r0, int c0, const Mat& sub);

// Elementwise maps.
Mat tanh_ew(const Mat& a);
Mat sigmoid_ew(const Mat& a);
Mat exp_ew(const Mat& a);
Mat sqrt_ew(const Mat& a);
Mat div_ew(const Mat& a, const Mat& b);
Mat atan2_ew(const Mat& y, const Mat& x);
Mat clamp_ew(const Mat& a, double lo, double hi);

// Symmetric part (P + P^T)/2; P must be square.
Mat sym(const Mat& p);

// n x 1 column holding the diagonal of a square matrix / its inverse op.
Mat diag_of(const Mat& a);
Mat diag_from_col(const Mat& v);

double trace(const Mat& a);
double sum_all(const Mat& a);
double max_abs_diff(const Mat& a, const Mat& b);
bool bit_equal(const Mat& a, const Mat& b);

// --- SPD solve -------------------------------------------------------------

// Lower-triangular Cholesky factor of A (+ the ridge that made it succeed).
struct CholFactor {
  Mat l;
  double jitter = 0.0;  // ridge actually added to the diagonal
};

// Factor A = L L^T. A must be square and symmetric to within
// 1e-9 * max(1, |A|_inf). If plain factorization fails, retries with ridge
// lambda * (trace(A)/n) for lambda in {1e-12, 1e-9, 1e-6}; throws
// SingularMatrixError (listing attempted ridges) if all fail.
CholFactor chol_factor(const Mat& a);

// Solve L L^T X = B given a factor.
Mat chol_solve(const CholFactor& f, const Mat& b);

// X = A^{-1} B via chol_factor + chol_solve. Never materializes an inverse.
Mat spd_solve(const Mat& a, const Mat& b);

// Smallest eigenvalue of a symmetric matrix (cyclic Jacobi; n <= ~12).
double min_eig_sym(const Mat& a);

// Central finite-difference gradient of f at theta with step h.
// The oracle the reverse-mode tape is validated against.
template <class F>
std::vector<double> finite_diff_grad(F&& f, std::vector<double> theta, double h) {
  std::vector<double> g(theta.size());
  for (size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + h;
    const double fp = f(theta);
    theta[i] = orig - h;
    const double fm = f(theta);
    theta[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace ebrns
