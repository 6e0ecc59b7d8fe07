#include "pga/tensor.hpp"

#include <cblas.h>

#include <cmath>
#include <stdexcept>
#include <utility>

namespace pga {

// ---- Matrix ----------------------------------------------------------------

Matrix::Matrix(size_t r, size_t c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
  if (v.size() != rows * cols)
    throw DimensionError("Matrix: " + std::to_string(v.size()) + " values for shape " + shape_str());
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows_init) {
  rows = rows_init.size();
  cols = rows ? rows_init.begin()->size() : 0;
  v.reserve(rows * cols);
  for (const auto& r : rows_init) {
    if (r.size() != cols) throw DimensionError("Matrix: ragged initializer");
    v.insert(v.end(), r.begin(), r.end());
  }
}

Matrix Matrix::full(size_t r, size_t c, double value) {
  Matrix m(r, c);
  std::fill(m.v.begin(), m.v.end(), value);
  return m;
}

std::string Matrix::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

bool Matrix::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// C = alpha * op(A) * op(B) + beta * C, logical shapes m x k, k x n.
static void gemm(bool ta, bool tb, double alpha, const Matrix& A, const Matrix& B, double beta,
                 Matrix& C) {
  const size_t m = ta ? A.cols : A.rows;
  const size_t k = ta ? A.rows : A.cols;
  const size_t n = tb ? B.rows : B.cols;
  if (m == 0 || n == 0 || k == 0) {
    if (beta == 0.0) std::fill(C.v.begin(), C.v.end(), 0.0);
    return;
  }
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, A.v.data(),
              static_cast<int>(A.cols), B.v.data(), static_cast<int>(B.cols), beta, C.v.data(),
              static_cast<int>(C.cols));
}

Matrix matmul_values(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw DimensionError("matmul: inner extents disagree: " + a.shape_str() + " vs " +
                         b.shape_str());
  Matrix c(a.rows, b.cols);
  gemm(false, false, 1.0, a, b, 0.0, c);
  return c;
}

Matrix transpose_values(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// ---- Tensor / Tape ----------------------------------------------------------

double Tensor::scalar() const {
  if (numel() != 1) throw DimensionError("scalar(): tensor has shape " + values().shape_str());
  return values().v[0];
}

int Tape::record(std::vector<int> parents, size_t rows, size_t cols, Vjp vjp) {
  nodes_.push_back(Node{std::move(parents), rows, cols, std::move(vjp)});
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(Matrix values) {
  Tensor t(std::move(values));
  t.tape_ = this;
  t.node_ = record({}, t.rows(), t.cols(), nullptr);
  return t;
}

Tensor Tape::adopt(Matrix values, std::vector<int> parents, Vjp vjp) {
  Tensor t(std::move(values));
  t.tape_ = this;
  t.node_ = record(std::move(parents), t.rows(), t.cols(), std::move(vjp));
  return t;
}

Matrix& BackwardCtx::accum(int node) {
  auto& slot = grads_[static_cast<size_t>(node)];
  if (!slot) slot.emplace(shapes_[static_cast<size_t>(node)].first,
                          shapes_[static_cast<size_t>(node)].second);
  return *slot;
}

Gradients Tape::backward(const Tensor& scalar) const {
  if (scalar.numel() != 1)
    throw DimensionError("backward: expected a scalar, got shape " + scalar.values().shape_str());
  Gradients out;
  out.tape_ = this;
  if (!scalar.tracked()) {
    out.by_node_.resize(nodes_.size());
    return out;
  }
  if (scalar.tape() != this) throw std::logic_error("backward: tensor belongs to another tape");

  BackwardCtx ctx(nodes_.size());
  ctx.shapes_.reserve(nodes_.size());
  for (const auto& n : nodes_) ctx.shapes_.emplace_back(n.rows, n.cols);
  ctx.accum(scalar.node()).v[0] = 1.0;

  for (int i = scalar.node(); i >= 0; --i) {
    const auto& slot = ctx.grads_[static_cast<size_t>(i)];
    if (!slot) continue;
    const auto& node = nodes_[static_cast<size_t>(i)];
    if (node.vjp) node.vjp(*slot, ctx);
  }
  out.by_node_ = std::move(ctx.grads_);
  return out;
}

Matrix Gradients::wrt(const Tensor& t) const {
  if (t.tracked() && t.tape() == tape_ && static_cast<size_t>(t.node()) < by_node_.size() &&
      by_node_[static_cast<size_t>(t.node())])
    return *by_node_[static_cast<size_t>(t.node())];
  return Matrix(t.rows(), t.cols());
}

// ---- SgScope ----------------------------------------------------------------

namespace {
thread_local SgScope* g_active_scope = nullptr;
}

SgScope::SgScope(Mode mode, SgStore& store) : mode_(mode), store_(store) {
  if (g_active_scope) throw std::logic_error("SgScope: scopes do not nest");
  if (mode_ == Mode::record) store_.recorded.clear();
  g_active_scope = this;
}

SgScope::~SgScope() { g_active_scope = nullptr; }

SgScope* SgScope::active() { return g_active_scope; }

Matrix SgScope::intercept(Matrix&& fresh) {
  if (mode_ == Mode::record) {
    store_.recorded.push_back(fresh);
    return std::move(fresh);
  }
  if (cursor_ >= store_.recorded.size())
    throw std::logic_error("SgScope: replay ran past the recorded sequence");
  const Matrix& pinned = store_.recorded[cursor_++];
  if (!pinned.same_shape(fresh))
    throw std::logic_error("SgScope: replayed shape " + pinned.shape_str() +
                           " does not match fresh " + fresh.shape_str());
  return pinned;
}

Tensor frozen(Matrix values) {
  if (SgScope* scope = SgScope::active()) values = scope->intercept(std::move(values));
  return Tensor(std::move(values));
}

Tensor stop_gradient(const Tensor& a) { return frozen(a.values()); }

// ---- op helpers -------------------------------------------------------------

namespace {

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->tracked()) continue;
    if (tape && tape != t->tape())
      throw std::logic_error("op: operands recorded on different tapes");
    tape = t->tape();
  }
  return tape;
}

Tensor attach(Tape* tape, Matrix vals, std::vector<int> parents, Tape::Vjp vjp) {
  if (!tape) return Tensor(std::move(vals));
  return tape->adopt(std::move(vals), std::move(parents), std::move(vjp));
}

enum class Bcast { same, row, col };

Bcast bcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.same_shape(b)) return Bcast::same;
  if (b.rows == 1 && b.cols == a.cols) return Bcast::row;
  if (b.cols == 1 && b.rows == a.rows) return Bcast::col;
  throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                       " do not align");
}

using ValMap = double (*)(double);
using GradMap = double (*)(double x, double y);  // dy/dx as a function of input and output

Tensor unary_op(const Tensor& a, ValMap f, GradMap df) {
  const Matrix& av = a.values();
  Matrix out(av.rows, av.cols);
  for (size_t i = 0; i < av.v.size(); ++i) out.v[i] = f(av.v[i]);
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor(std::move(out));
  auto ap = a.values_ptr();
  auto op = std::make_shared<Matrix>(out);
  int anode = a.node();
  return attach(tape, std::move(out), {anode},
                [ap, op, anode, df](const Matrix& g, BackwardCtx& ctx) {
                  Matrix& ga = ctx.accum(anode);
                  for (size_t i = 0; i < g.v.size(); ++i)
                    ga.v[i] += g.v[i] * df(ap->v[i], op->v[i]);
                });
}

}  // namespace

// ---- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Matrix out = matmul_values(a.values(), b.values());
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Tensor(std::move(out));
  auto ap = a.values_ptr();
  auto bp = b.values_ptr();
  int an = a.node(), bn = b.node();
  bool at = a.tracked(), bt = b.tracked();
  std::vector<int> parents;
  if (at) parents.push_back(an);
  if (bt) parents.push_back(bn);
  return attach(tape, std::move(out), std::move(parents),
                [ap, bp, an, bn, at, bt](const Matrix& g, BackwardCtx& ctx) {
                  if (at) gemm(false, true, 1.0, g, *bp, 1.0, ctx.accum(an));
                  if (bt) gemm(true, false, 1.0, *ap, g, 1.0, ctx.accum(bn));
                });
}

namespace {

Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, bool is_mul, double bsign) {
  const Matrix& av = a.values();
  const Matrix& bv = b.values();
  Bcast kind = bcast_kind(av, bv, name);
  Matrix out(av.rows, av.cols);
  for (size_t i = 0; i < av.rows; ++i)
    for (size_t j = 0; j < av.cols; ++j) {
      double bx = kind == Bcast::same ? bv.at(i, j) : (kind == Bcast::row ? bv.at(0, j) : bv.at(i, 0));
      out.at(i, j) = is_mul ? av.at(i, j) * bx : av.at(i, j) + bsign * bx;
    }
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Tensor(std::move(out));
  auto ap = a.values_ptr();
  auto bp = b.values_ptr();
  int an = a.node(), bn = b.node();
  bool at = a.tracked(), bt = b.tracked();
  std::vector<int> parents;
  if (at) parents.push_back(an);
  if (bt) parents.push_back(bn);
  return attach(
      tape, std::move(out), std::move(parents),
      [ap, bp, an, bn, at, bt, kind, is_mul, bsign](const Matrix& g, BackwardCtx& ctx) {
        if (at) {
          Matrix& ga = ctx.accum(an);
          if (is_mul) {
            for (size_t i = 0; i < g.rows; ++i)
              for (size_t j = 0; j < g.cols; ++j) {
                double bx = kind == Bcast::same ? bp->at(i, j)
                                                : (kind == Bcast::row ? bp->at(0, j) : bp->at(i, 0));
                ga.at(i, j) += g.at(i, j) * bx;
              }
          } else {
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
          }
        }
        if (bt) {
          Matrix& gb = ctx.accum(bn);
          for (size_t i = 0; i < g.rows; ++i)
            for (size_t j = 0; j < g.cols; ++j) {
              double contrib = is_mul ? g.at(i, j) * ap->at(i, j) : bsign * g.at(i, j);
              if (kind == Bcast::same)
                gb.at(i, j) += contrib;
              else if (kind == Bcast::row)
                gb.at(0, j) += contrib;
              else
                gb.at(i, 0) += contrib;
            }
        }
      });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, "add", false, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, "sub", false, -1.0); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, "mul", true, 1.0); }

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor log(const Tensor& a) {
  const Matrix& av = a.values();
  size_t hits = 0;
  Matrix out(av.rows, av.cols);
  for (size_t i = 0; i < av.v.size(); ++i) {
    double x = av.v[i];
    if (std::isnan(x)) throw NumericError("log: NaN input");
    if (x < kLogFloor) {
      x = kLogFloor;
      ++hits;
    }
    out.v[i] = std::log(x);
  }
  Tape* tape = common_tape({&a});
  if (tape && hits) tape->note_log_floor(hits);
  if (!tape) return Tensor(std::move(out));
  auto ap = a.values_ptr();
  int an = a.node();
  return attach(tape, std::move(out), {an}, [ap, an](const Matrix& g, BackwardCtx& ctx) {
    Matrix& ga = ctx.accum(an);
    for (size_t i = 0; i < g.v.size(); ++i)
      if (ap->v[i] >= kLogFloor) ga.v[i] += g.v[i] / ap->v[i];
  });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        if (x > 35.0) return x;
        if (x < -35.0) return std::exp(x);
        return std::log1p(std::exp(x));
      },
      [](double x, double) { return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Tensor scale(const Tensor& a, double c) {
  const Matrix& av = a.values();
  Matrix out(av.rows, av.cols);
  for (size_t i = 0; i < av.v.size(); ++i) out.v[i] = av.v[i] * c;
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor(std::move(out));
  int an = a.node();
  return attach(tape, std::move(out), {an}, [an, c](const Matrix& g, BackwardCtx& ctx) {
    Matrix& ga = ctx.accum(an);
    for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += c * g.v[i];
  });
}

Tensor shift(const Tensor& a, double c) {
  const Matrix& av = a.values();
  Matrix out(av.rows, av.cols);
  for (size_t i = 0; i < av.v.size(); ++i) out.v[i] = av.v[i] + c;
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor(std::move(out));
  int an = a.node();
  return attach(tape, std::move(out), {an}, [an](const Matrix& g, BackwardCtx& ctx) {
    Matrix& ga = ctx.accum(an);
    for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
  });
}

Tensor min_const(const Tensor& a, double c) {
  const Matrix& av = a.values();
  Matrix out(av.rows, av.cols);
  for (size_t i = 0; i < av.v.size(); ++i) out.v[i] = av.v[i] < c ? av.v[i] : c;
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor(std::move(out));
  auto ap = a.values_ptr();
  int an = a.node();
  return attach(tape, std::move(out), {an}, [ap, an, c](const Matrix& g, BackwardCtx& ctx) {
    Matrix& ga = ctx.accum(an);
    for (size_t i = 0; i < g.v.size(); ++i)
      if (ap->v[i] <= c) ga.v[i] += g.v[i];
  });
}

Tensor sum(const Tensor& a) {
  const Matrix& av = a.values();
  double s = 0.0;
  for (double x : av.v) s += x;
  Matrix out(1, 1);
  out.v[0] = s;
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor(std::move(out));
  int an = a.node();
  return attach(tape, std::move(out), {an}, [an](const Matrix& g, BackwardCtx& ctx) {
    Matrix& ga = ctx.accum(an);
    for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += g.v[0];
  });
}

Tensor mean(const Tensor& a) {
  const Matrix& av = a.values();
  if (av.numel() == 0) throw DimensionError("mean: empty tensor");
  double s = 0.0;
  for (double x : av.v) s += x;
  const double inv = 1.0 / static_cast<double>(av.numel());
  Matrix out(1, 1);
  out.v[0] = s * inv;
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor(std::move(out));
  int an = a.node();
  return attach(tape, std::move(out), {an}, [an, inv](const Matrix& g, BackwardCtx& ctx) {
    Matrix& ga = ctx.accum(an);
    for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += g.v[0] * inv;
  });
}

Tensor sum_sq_rows(const Tensor& a) {
  const Matrix& av = a.values();
  Matrix out(av.rows, 1);
  for (size_t i = 0; i < av.rows; ++i) {
    double s = 0.0;
    for (size_t j = 0; j < av.cols; ++j) s += av.at(i, j) * av.at(i, j);
    out.at(i, 0) = s;
  }
  Tape* tape = common_tape({&a});
  if (!tape) return Tensor(std::move(out));
  auto ap = a.values_ptr();
  int an = a.node();
  return attach(tape, std::move(out), {an}, [ap, an](const Matrix& g, BackwardCtx& ctx) {
    Matrix& ga = ctx.accum(an);
    for (size_t i = 0; i < ap->rows; ++i)
      for (size_t j = 0; j < ap->cols; ++j) ga.at(i, j) += 2.0 * ap->at(i, j) * g.at(i, 0);
  });
}

}  // namespace pga
