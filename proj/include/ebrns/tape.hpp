#pragma once

// Reverse-mode autodiff tape over Mat. Append-only: ops record eagerly
// evaluated nodes; backward() runs one reverse sweep seeding the (scalar)
// loss with adjoint 1 and accumulating parent adjoints in fixed node order,
// so replaying the same tape gives bit-identical adjoints. A tape is built
// per sequence and thrown away; inverses are never materialized (linear
// solves go through the SPD factorization, whose factor is reused by the
// backward rule).

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "ebrns/mat.hpp"

namespace ebrns {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

enum class OpKind : uint8_t {
  Constant, Param,
  MatMul, Add, Sub, Transpose, Scale, Hadamard, VCat, Block,
  Tanh, Sigmoid, Exp, Sqrt, DivEw, Atan2Ew,
  DiagFromCol, Reshape, Clamp, WrapRows, SpdSolve,
};

struct TapeNode {
  OpKind kind;
  int a = -1, b = -1;          // input node ids (-1 = unused)
  Mat value;
  Mat adj;                     // empty until backward touches it
  bool needs_grad = false;
  double s0 = 0.0, s1 = 0.0;   // Scale factor / Clamp bounds
  int i0 = 0, i1 = 0, i2 = 0, i3 = 0;       // Block offsets+extent / Reshape dims
  std::vector<uint8_t> row_mask;            // WrapRows
  std::shared_ptr<CholFactor> factor;       // SpdSolve: reused in backward
};

class Tape {
 public:
  Var constant(Mat v);
  Var param(Mat v);

  const Mat& value(Var v) const;
  // Adjoint of v after backward(); zeros if the sweep never reached it.
  Mat adjoint(Var v) const;

  // Reverse sweep from a scalar (1x1) loss node; ContractError otherwise.
  // Resets all adjoints first, so repeated calls replay identically.
  void backward(Var loss);

  const std::vector<int>& param_ids() const { return param_ids_; }
  Mat param_adjoint(int param_id) const;

  size_t num_nodes() const { return nodes_.size(); }

 private:
  friend Var push_unary(Tape&, OpKind, Var, Mat);
  friend Var push_binary(Tape&, OpKind, Var, Var, Mat);
  friend Var matmul(Var, Var);
  friend Var add(Var, Var);
  friend Var sub(Var, Var);
  friend Var transpose(Var);
  friend Var scale(Var, double);
  friend Var hadamard(Var, Var);
  friend Var vcat(Var, Var);
  friend Var block(Var, int, int, int, int);
  friend Var tanh_ew(Var);
  friend Var sigmoid_ew(Var);
  friend Var exp_ew(Var);
  friend Var sqrt_ew(Var);
  friend Var div_ew(Var, Var);
  friend Var atan2_ew(Var, Var);
  friend Var diag_from_col(Var);
  friend Var reshape(Var, int, int);
  friend Var clamp_ew(Var, double, double);
  friend Var wrap_rows(Var, const std::vector<uint8_t>&);
  friend Var spd_solve(Var, Var);

  int push(TapeNode n);
  void accumulate(int id, const Mat& g);

  std::deque<TapeNode> nodes_;  // deque: references stay valid as ops append
  std::vector<int> param_ids_;
};

// --- taped ops (same names/signatures as the eager Mat primitives) ---------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var transpose(Var a);
Var scale(Var a, double s);
Var hadamard(Var a, Var b);
Var vcat(Var a, Var b);
Var block(Var a, int r0, int c0, int nrows, int ncols);
Var tanh_ew(Var a);
Var sigmoid_ew(Var a);
Var exp_ew(Var a);
Var sqrt_ew(Var a);
Var div_ew(Var a, Var b);
Var atan2_ew(Var y, Var x);
Var diag_from_col(Var v);
Var reshape(Var a, int rows, int cols);
Var clamp_ew(Var a, double lo, double hi);
// Wrap the masked rows of a column vector to (-pi, pi]; identity gradient.
Var wrap_rows(Var a, const std::vector<uint8_t>& mask);
// X = A^{-1} B through the Cholesky ladder; the backward rule reuses the
// forward factor:  gB += A^{-1} gX,  gA -= (A^{-1} gX) X^T.
Var spd_solve(Var a, Var b);

// Conveniences assembled from the primitives above.
Var rows(Var a, int r0, int r1);  // full-width row slice [r0, r1)
Var sym(Var p);                   // (P + P^T)/2
Var sum_sq(Var a);                // 1x1 sum of squared entries

// Scalar wrap helper shared by the taped op and the eager innovation path.
double wrap_angle(double v);

}  // namespace ebrns
