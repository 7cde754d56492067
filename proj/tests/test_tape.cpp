#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "ebrns/errors.hpp"
#include "ebrns/mat.hpp"
#include "ebrns/rng.hpp"
#include "ebrns/tape.hpp"
#include "support/test_util.hpp"

using namespace ebrns;
using test::random_mat;
using test::random_spd;

namespace {

// Flatten a parameter matrix into theta, run a scalar-valued builder, and
// compare the tape gradient against central differences.
template <class Builder>
void check_grad(const Mat& p0, Builder build, double h = 1e-6, double tol = 1e-4) {
  Tape t;
  Var p = t.param(p0);
  Var loss = build(t, p);
  t.backward(loss);
  Mat g = t.adjoint(p);

  std::vector<double> theta(p0.data(), p0.data() + p0.size());
  auto f = [&](const std::vector<double>& th) {
    Mat pm = p0;
    std::copy(th.begin(), th.end(), pm.data());
    Tape t2;
    Var p2 = t2.param(pm);
    return t2.value(build(t2, p2))(0, 0);
  };
  auto g_fd = finite_diff_grad(f, theta, h);
  for (int i = 0; i < p0.size(); ++i) {
    const double denom = std::max(std::fabs(g_fd[i]), 1e-6);
    CHECK(std::fabs(g[i] - g_fd[i]) / denom < tol);
  }
}

}  // namespace

TEST_CASE("gradient of x^T x is 2x") {
  Tape t;
  Mat x0 = Mat::col({1.0, -2.0, 3.0});
  Var x = t.param(x0);
  Var loss = matmul(transpose(x), x);
  t.backward(loss);
  CHECK(max_abs_diff(t.adjoint(x), scale(x0, 2.0)) < 1e-14);
}

TEST_CASE("tanh gradient at zero is one") {
  Tape t;
  Var x = t.param(Mat::zeros(1, 1));
  Var loss = tanh_ew(x);
  t.backward(loss);
  CHECK(t.adjoint(x)(0, 0) == 1.0);
}

TEST_CASE("backward requires scalar loss") {
  Tape t;
  Var x = t.param(Mat::zeros(2, 1));
  Var y = scale(x, 2.0);
  CHECK_THROWS_WITH_AS(t.backward(y), doctest::Contains("1x1"), ContractError);
}

TEST_CASE("ops from different tapes are rejected") {
  Tape t1, t2;
  Var a = t1.param(Mat::ones(1, 1));
  Var b = t2.param(Mat::ones(1, 1));
  CHECK_THROWS_AS(add(a, b), ContractError);
}

TEST_CASE("constants receive no gradient and block propagation") {
  Tape t;
  Var c = t.constant(Mat::ones(2, 1));
  Var p = t.param(Mat::col({1.0, 2.0}));
  Var loss = matmul(transpose(c), hadamard(c, p));
  t.backward(loss);
  CHECK(max_abs_diff(t.adjoint(p), Mat::ones(2, 1)) == 0.0);
  CHECK(t.adjoint(c).max_abs() == 0.0);
  // A loss with no parameters upstream backpropagates trivially.
  Tape t3;
  Var c3 = t3.constant(Mat::ones(1, 1));
  t3.backward(c3);
  CHECK(t3.adjoint(c3)(0, 0) == 1.0);
}

TEST_CASE("per-op gradients match central differences") {
  Rng rng(101);

  SUBCASE("matmul chain") {
    Mat p0 = random_mat(rng, 3, 3, -0.5, 0.5);
    Mat a0 = random_mat(rng, 2, 3), b0 = random_mat(rng, 3, 1);
    check_grad(p0, [&](Tape& t, Var p) {
      Var a = t.constant(a0), b = t.constant(b0);
      Var y = matmul(matmul(a, p), b);  // 2x1
      return sum_sq(y);
    });
  }
  SUBCASE("add sub scale transpose") {
    Mat p0 = random_mat(rng, 2, 3, -0.5, 0.5);
    Mat c0 = random_mat(rng, 3, 2);
    check_grad(p0, [&](Tape& t, Var p) {
      Var c = t.constant(c0);
      Var y = sub(scale(transpose(p), -1.7), c);
      return sum_sq(add(y, c));
    });
  }
  SUBCASE("hadamard and elementwise maps") {
    Mat p0 = random_mat(rng, 4, 1, -0.5, 0.5);
    Mat c0 = random_mat(rng, 4, 1);
    check_grad(p0, [&](Tape& t, Var p) {
      Var c = t.constant(c0);
      Var y = hadamard(tanh_ew(p), sigmoid_ew(add(p, c)));
      return sum_sq(add(y, exp_ew(scale(p, 0.3))));
    });
  }
  SUBCASE("sqrt div atan2 on positive inputs") {
    Mat p0 = random_mat(rng, 3, 1, 0.5, 1.5);
    Mat c0 = random_mat(rng, 3, 1, 0.5, 1.5);
    check_grad(p0, [&](Tape& t, Var p) {
      Var c = t.constant(c0);
      Var y = atan2_ew(sqrt_ew(p), div_ew(c, p));
      return sum_sq(y);
    });
  }
  SUBCASE("vcat block reshape diag") {
    Mat p0 = random_mat(rng, 3, 2, -0.5, 0.5);
    check_grad(p0, [&](Tape& t, Var p) {
      Var v = reshape(p, 6, 1);
      Var top = rows(v, 0, 2);
      Var d = diag_from_col(rows(v, 2, 6));
      Var y = matmul(d, vcat(top, scale(top, 2.0)));
      return sum_sq(y);
    });
  }
  SUBCASE("clamp inside the band is identity") {
    Mat p0 = random_mat(rng, 3, 1, -0.5, 0.5);
    check_grad(p0, [&](Tape& t, Var p) { return sum_sq(clamp_ew(p, -35.0, 35.0)); });
  }
  SUBCASE("spd_solve via symmetric construction") {
    Mat p0 = random_mat(rng, 3, 3, -0.5, 0.5);
    Mat b0 = random_mat(rng, 3, 2);
    check_grad(p0, [&](Tape& t, Var p) {
      // A = P P^T + 2I stays SPD under the FD perturbations.
      Var a = add(matmul(p, transpose(p)), t.constant(scale(Mat::identity(3), 2.0)));
      Var x = spd_solve(a, t.constant(b0));
      return sum_sq(x);
    });
  }
  SUBCASE("wrap_rows is a gradient identity away from the cut") {
    Mat p0 = random_mat(rng, 2, 1, -1.0, 1.0);
    std::vector<uint8_t> mask = {0, 1};
    check_grad(p0, [&](Tape& t, Var p) {
      Var shifted = add(p, t.constant(Mat::col({0.0, 7.0})));  // pushes row 1 past pi
      return sum_sq(wrap_rows(shifted, mask));
    });
  }
}

TEST_CASE("wrap_rows values land in (-pi, pi]") {
  Tape t;
  Var v = t.constant(Mat::col({3.0 * M_PI, -3.0 * M_PI, 0.25, M_PI}));
  Var w = wrap_rows(v, {1, 1, 1, 1});
  const Mat& val = t.value(w);
  CHECK(val(0, 0) == doctest::Approx(M_PI).epsilon(1e-12));
  CHECK(val(1, 0) == doctest::Approx(M_PI).epsilon(1e-12));
  CHECK(val(2, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(val(3, 0) == doctest::Approx(M_PI).epsilon(1e-15));
  for (int i = 0; i < 4; ++i) {
    CHECK(val(i, 0) <= M_PI + 1e-15);
    CHECK(val(i, 0) > -M_PI);
  }
  // Unmasked rows pass through untouched.
  Var u = wrap_rows(v, {0, 0, 0, 0});
  CHECK(bit_equal(t.value(u), t.value(v)));
}

TEST_CASE("spd_solve on tape reuses the forward factor and solves correctly") {
  Rng rng(103);
  Tape t;
  Mat a0 = random_spd(rng, 4, 1.0);
  Mat b0 = random_mat(rng, 4, 1);
  Var x = spd_solve(t.constant(a0), t.constant(b0));
  CHECK(max_abs_diff(matmul(a0, t.value(x)), b0) < 1e-10);
}

TEST_CASE("replaying backward gives bit-identical adjoints") {
  Rng rng(104);
  Tape t;
  Var p = t.param(random_mat(rng, 4, 4, -0.5, 0.5));
  Var a = t.constant(random_spd(rng, 4, 1.0));
  Var x = spd_solve(add(a, matmul(p, transpose(p))), t.constant(random_mat(rng, 4, 1)));
  Var loss = sum_sq(tanh_ew(x));
  t.backward(loss);
  Mat g1 = t.adjoint(p);
  t.backward(loss);
  Mat g2 = t.adjoint(p);
  CHECK(bit_equal(g1, g2));
}

TEST_CASE("fan-out accumulates adjoints from every consumer") {
  Tape t;
  Var x = t.param(Mat::col({2.0}));
  // loss = x*x + 3x  ->  dloss/dx = 2x + 3 = 7.
  Var loss = add(hadamard(x, x), scale(x, 3.0));
  t.backward(loss);
  CHECK(t.adjoint(x)(0, 0) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("param_ids preserve insertion order for gradient extraction") {
  Tape t;
  Var p1 = t.param(Mat::ones(2, 2));
  t.constant(Mat::ones(1, 1));
  Var p2 = t.param(Mat::ones(3, 1));
  REQUIRE(t.param_ids().size() == 2);
  CHECK(t.param_ids()[0] == p1.id);
  CHECK(t.param_ids()[1] == p2.id);
}
