#include "ebrns/tape.hpp"

#include <cmath>
#include <sstream>

#include "ebrns/errors.hpp"

namespace ebrns {

namespace {

void check_same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape != b.tape)
    throw ContractError("tape op: operands must live on the same tape");
}

}  // namespace

double wrap_angle(double v) {
  double w = std::remainder(v, 2.0 * M_PI);  // [-pi, pi]
  if (w <= -M_PI) w += 2.0 * M_PI;           // normalize to (-pi, pi]
  return w;
}

int Tape::push(TapeNode n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Mat v) {
  TapeNode n;
  n.kind = OpKind::Constant;
  n.value = std::move(v);
  return Var{this, push(std::move(n))};
}

Var Tape::param(Mat v) {
  TapeNode n;
  n.kind = OpKind::Param;
  n.value = std::move(v);
  n.needs_grad = true;
  const int id = push(std::move(n));
  param_ids_.push_back(id);
  return Var{this, id};
}

const Mat& Tape::value(Var v) const {
  if (!v.valid() || v.tape != this || v.id >= static_cast<int>(nodes_.size()))
    throw ContractError("tape value: var does not belong to this tape");
  return nodes_[v.id].value;
}

Mat Tape::adjoint(Var v) const {
  const Mat& val = value(v);
  const Mat& adj = nodes_[v.id].adj;
  if (adj.empty()) return Mat::zeros(val.rows(), val.cols());
  return adj;
}

Mat Tape::param_adjoint(int param_id) const {
  return adjoint(Var{const_cast<Tape*>(this), param_id});
}

void Tape::accumulate(int id, const Mat& g) {
  TapeNode& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.adj.empty()) n.adj = Mat::zeros(n.value.rows(), n.value.cols());
  for (int i = 0; i < g.size(); ++i) n.adj[i] += g[i];
}

// --- op constructors -------------------------------------------------------

Var push_unary(Tape& t, OpKind k, Var a, Mat value) {
  TapeNode n;
  n.kind = k;
  n.a = a.id;
  n.value = std::move(value);
  n.needs_grad = t.nodes_[a.id].needs_grad;
  return Var{&t, t.push(std::move(n))};
}

Var push_binary(Tape& t, OpKind k, Var a, Var b, Mat value) {
  TapeNode n;
  n.kind = k;
  n.a = a.id;
  n.b = b.id;
  n.value = std::move(value);
  n.needs_grad = t.nodes_[a.id].needs_grad || t.nodes_[b.id].needs_grad;
  return Var{&t, t.push(std::move(n))};
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  return push_binary(*a.tape, OpKind::MatMul, a, b, matmul(a.tape->value(a), b.tape->value(b)));
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  return push_binary(*a.tape, OpKind::Add, a, b, add(a.tape->value(a), b.tape->value(b)));
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  return push_binary(*a.tape, OpKind::Sub, a, b, sub(a.tape->value(a), b.tape->value(b)));
}

Var transpose(Var a) {
  return push_unary(*a.tape, OpKind::Transpose, a, transpose(a.tape->value(a)));
}

Var scale(Var a, double s) {
  Var v = push_unary(*a.tape, OpKind::Scale, a, scale(a.tape->value(a), s));
  a.tape->nodes_[v.id].s0 = s;
  return v;
}

Var hadamard(Var a, Var b) {
  check_same_tape(a, b);
  return push_binary(*a.tape, OpKind::Hadamard, a, b, hadamard(a.tape->value(a), b.tape->value(b)));
}

Var vcat(Var a, Var b) {
  check_same_tape(a, b);
  return push_binary(*a.tape, OpKind::VCat, a, b, vcat(a.tape->value(a), b.tape->value(b)));
}

Var block(Var a, int r0, int c0, int nrows, int ncols) {
  Var v = push_unary(*a.tape, OpKind::Block, a, block(a.tape->value(a), r0, c0, nrows, ncols));
  TapeNode& n = a.tape->nodes_[v.id];
  n.i0 = r0; n.i1 = c0; n.i2 = nrows; n.i3 = ncols;
  return v;
}

Var tanh_ew(Var a) { return push_unary(*a.tape, OpKind::Tanh, a, tanh_ew(a.tape->value(a))); }
Var sigmoid_ew(Var a) { return push_unary(*a.tape, OpKind::Sigmoid, a, sigmoid_ew(a.tape->value(a))); }
Var exp_ew(Var a) { return push_unary(*a.tape, OpKind::Exp, a, exp_ew(a.tape->value(a))); }
Var sqrt_ew(Var a) { return push_unary(*a.tape, OpKind::Sqrt, a, sqrt_ew(a.tape->value(a))); }

Var div_ew(Var a, Var b) {
  check_same_tape(a, b);
  return push_binary(*a.tape, OpKind::DivEw, a, b, div_ew(a.tape->value(a), b.tape->value(b)));
}

Var atan2_ew(Var y, Var x) {
  check_same_tape(y, x);
  return push_binary(*y.tape, OpKind::Atan2Ew, y, x, atan2_ew(y.tape->value(y), x.tape->value(x)));
}

Var diag_from_col(Var v) {
  return push_unary(*v.tape, OpKind::DiagFromCol, v, diag_from_col(v.tape->value(v)));
}

Var reshape(Var a, int rows, int cols) {
  const Mat& val = a.tape->value(a);
  if (rows * cols != val.size()) {
    std::ostringstream os;
    os << "reshape: cannot view " << val.shape_str() << " as " << rows << "x" << cols;
    throw DimensionError(os.str());
  }
  Mat out(rows, cols);
  for (int i = 0; i < val.size(); ++i) out[i] = val[i];
  Var v = push_unary(*a.tape, OpKind::Reshape, a, std::move(out));
  TapeNode& n = a.tape->nodes_[v.id];
  n.i0 = val.rows(); n.i1 = val.cols();
  return v;
}

Var clamp_ew(Var a, double lo, double hi) {
  Var v = push_unary(*a.tape, OpKind::Clamp, a, clamp_ew(a.tape->value(a), lo, hi));
  TapeNode& n = a.tape->nodes_[v.id];
  n.s0 = lo; n.s1 = hi;
  return v;
}

Var wrap_rows(Var a, const std::vector<uint8_t>& mask) {
  const Mat& val = a.tape->value(a);
  if (val.cols() != 1 || static_cast<int>(mask.size()) != val.rows())
    throw DimensionError("wrap_rows: needs a column vector with one mask entry per row, got " +
                         val.shape_str());
  Mat out = val;
  for (int i = 0; i < out.rows(); ++i)
    if (mask[i]) out(i, 0) = wrap_angle(out(i, 0));
  Var v = push_unary(*a.tape, OpKind::WrapRows, a, std::move(out));
  a.tape->nodes_[v.id].row_mask = mask;
  return v;
}

Var spd_solve(Var a, Var b) {
  check_same_tape(a, b);
  auto factor = std::make_shared<CholFactor>(chol_factor(a.tape->value(a)));
  Mat x = chol_solve(*factor, b.tape->value(b));
  Var v = push_binary(*a.tape, OpKind::SpdSolve, a, b, std::move(x));
  a.tape->nodes_[v.id].factor = std::move(factor);
  return v;
}

Var rows(Var a, int r0, int r1) { return block(a, r0, 0, r1 - r0, a.tape->value(a).cols()); }

Var sym(Var p) { return scale(add(p, transpose(p)), 0.5); }

Var sum_sq(Var a) {
  const Mat& val = a.tape->value(a);
  Var flat = (val.cols() == 1) ? a : reshape(a, val.size(), 1);
  return matmul(transpose(flat), flat);
}

// --- backward sweep --------------------------------------------------------

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.tape != this || loss.id >= static_cast<int>(nodes_.size()))
    throw ContractError("tape_backward: loss var does not belong to this tape");
  const Mat& lval = nodes_[loss.id].value;
  if (lval.rows() != 1 || lval.cols() != 1)
    throw ContractError("tape_backward: loss node must be 1x1 scalar, got " + lval.shape_str());

  for (auto& n : nodes_) n.adj = Mat();  // reset: replay is bit-identical
  nodes_[loss.id].adj = Mat(1, 1, {1.0});
  if (!nodes_[loss.id].needs_grad) return;  // no parameters upstream

  for (int id = loss.id; id >= 0; --id) {
    TapeNode& n = nodes_[id];
    if (!n.needs_grad || n.adj.empty()) continue;
    const Mat& g = n.adj;
    switch (n.kind) {
      case OpKind::Constant:
      case OpKind::Param:
        break;
      case OpKind::MatMul:
        accumulate(n.a, matmul(g, transpose(nodes_[n.b].value)));
        accumulate(n.b, matmul(transpose(nodes_[n.a].value), g));
        break;
      case OpKind::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case OpKind::Sub:
        accumulate(n.a, g);
        accumulate(n.b, scale(g, -1.0));
        break;
      case OpKind::Transpose:
        accumulate(n.a, transpose(g));
        break;
      case OpKind::Scale:
        accumulate(n.a, scale(g, n.s0));
        break;
      case OpKind::Hadamard:
        accumulate(n.a, hadamard(g, nodes_[n.b].value));
        accumulate(n.b, hadamard(g, nodes_[n.a].value));
        break;
      case OpKind::VCat: {
        const int ra = nodes_[n.a].value.rows();
        accumulate(n.a, block(g, 0, 0, ra, g.cols()));
        accumulate(n.b, block(g, ra, 0, g.rows() - ra, g.cols()));
        break;
      }
      case OpKind::Block: {
        Mat ga = Mat::zeros(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        set_block(ga, n.i0, n.i1, g);
        accumulate(n.a, ga);
        break;
      }
      case OpKind::Tanh: {
        Mat d = n.value;
        for (int i = 0; i < d.size(); ++i) d[i] = g[i] * (1.0 - d[i] * d[i]);
        accumulate(n.a, d);
        break;
      }
      case OpKind::Sigmoid: {
        Mat d = n.value;
        for (int i = 0; i < d.size(); ++i) d[i] = g[i] * d[i] * (1.0 - d[i]);
        accumulate(n.a, d);
        break;
      }
      case OpKind::Exp:
        accumulate(n.a, hadamard(g, n.value));
        break;
      case OpKind::Sqrt: {
        Mat d = n.value;
        for (int i = 0; i < d.size(); ++i) d[i] = g[i] * 0.5 / d[i];
        accumulate(n.a, d);
        break;
      }
      case OpKind::DivEw: {
        const Mat& bv = nodes_[n.b].value;
        Mat da = g;
        for (int i = 0; i < da.size(); ++i) da[i] /= bv[i];
        Mat db = g;
        for (int i = 0; i < db.size(); ++i) db[i] *= -n.value[i] / bv[i];
        accumulate(n.a, da);
        accumulate(n.b, db);
        break;
      }
      case OpKind::Atan2Ew: {
        const Mat& yv = nodes_[n.a].value;
        const Mat& xv = nodes_[n.b].value;
        Mat dy = g, dx = g;
        for (int i = 0; i < g.size(); ++i) {
          const double denom = yv[i] * yv[i] + xv[i] * xv[i];
          dy[i] = g[i] * xv[i] / denom;
          dx[i] = -g[i] * yv[i] / denom;
        }
        accumulate(n.a, dy);
        accumulate(n.b, dx);
        break;
      }
      case OpKind::DiagFromCol: {
        Mat d(nodes_[n.a].value.rows(), 1);
        for (int i = 0; i < d.rows(); ++i) d(i, 0) = g(i, i);
        accumulate(n.a, d);
        break;
      }
      case OpKind::Reshape: {
        Mat d(n.i0, n.i1);
        for (int i = 0; i < d.size(); ++i) d[i] = g[i];
        accumulate(n.a, d);
        break;
      }
      case OpKind::Clamp: {
        const Mat& av = nodes_[n.a].value;
        Mat d = g;
        for (int i = 0; i < d.size(); ++i)
          if (av[i] < n.s0 || av[i] > n.s1) d[i] = 0.0;  // flat outside the band
        accumulate(n.a, d);
        break;
      }
      case OpKind::WrapRows:
        accumulate(n.a, g);  // shift by a constant multiple of 2*pi
        break;
      case OpKind::SpdSolve: {
        // X = A^{-1} B.  gB = A^{-1} g;  gA = -(A^{-1} g) X^T.
        Mat gb = chol_solve(*n.factor, g);
        accumulate(n.a, scale(matmul(gb, transpose(n.value)), -1.0));
        accumulate(n.b, gb);
        break;
      }
    }
  }
}

}  // namespace ebrns
