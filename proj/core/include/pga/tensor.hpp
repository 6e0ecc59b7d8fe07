#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pga/errors.hpp"

namespace pga {

// Dense row-major 2-D array of doubles. Scalars are 1x1, vectors 1xn or nx1.
struct Matrix {
  size_t rows = 0, cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  Matrix(size_t r, size_t c, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows_init);

  static Matrix full(size_t r, size_t c, double value);

  size_t numel() const { return rows * cols; }
  double& at(size_t i, size_t j) { return v[i * cols + j]; }
  double at(size_t i, size_t j) const { return v[i * cols + j]; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const;
  bool all_finite() const;
};

// Value-level helpers (no autodiff): used by oracles, evaluation paths and
// the backward kernels themselves. matmul_values runs on BLAS.
Matrix matmul_values(const Matrix& a, const Matrix& b);
Matrix transpose_values(const Matrix& a);

class Tape;

// Handle to an immutable value plus (optionally) a node on a tape. Ops on
// untracked tensors stay untracked, which doubles as the gradient-free
// evaluation mode.
class Tensor {
 public:
  Tensor() = default;
  // Untracked constant.
  explicit Tensor(Matrix m) : vals_(std::make_shared<Matrix>(std::move(m))) {}

  const Matrix& values() const { return *vals_; }
  std::shared_ptr<const Matrix> values_ptr() const { return vals_; }
  size_t rows() const { return vals_ ? vals_->rows : 0; }
  size_t cols() const { return vals_ ? vals_->cols : 0; }
  size_t numel() const { return vals_ ? vals_->numel() : 0; }
  double scalar() const;  // value of a 1-element tensor

  bool tracked() const { return node_ >= 0; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape;
  std::shared_ptr<const Matrix> vals_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Accumulated gradients of one backward pass, addressable by the tensors
// that produced them. Tensors never touched by the pass read as exact zero.
class Gradients {
 public:
  Matrix wrt(const Tensor& t) const;

 private:
  friend class Tape;
  std::vector<std::optional<Matrix>> by_node_;
  const Tape* tape_ = nullptr;
};

class BackwardCtx {
 public:
  Matrix& accum(int node);

 private:
  friend class Tape;
  explicit BackwardCtx(size_t n) : grads_(n) {}
  std::vector<std::optional<Matrix>> grads_;
  std::vector<std::pair<size_t, size_t>> shapes_;
};

// Reverse-mode tape. Nodes are recorded in construction order, which is a
// topological order by definition; backward walks it once in reverse, so
// fan-out accumulates additively and every node is visited exactly once.
// Single-threaded per tape.
class Tape {
 public:
  using Vjp = std::function<void(const Matrix& gout, BackwardCtx& ctx)>;

  Tensor leaf(Matrix values);

  // Gradient of a 1-element tensor w.r.t. everything on the tape.
  Gradients backward(const Tensor& scalar) const;

  size_t size() const { return nodes_.size(); }
  // Times the log floor at 1e-20 engaged since construction.
  size_t log_floor_hits() const { return log_floor_hits_; }

  // Internal: used by the op layer.
  int record(std::vector<int> parents, size_t rows, size_t cols, Vjp vjp);
  Tensor adopt(Matrix values, std::vector<int> parents, Vjp vjp);
  void note_log_floor(size_t hits) { log_floor_hits_ += hits; }

 private:
  struct Node {
    std::vector<int> parents;
    size_t rows, cols;
    Vjp vjp;  // empty for leaves
  };
  std::vector<Node> nodes_;
  size_t log_floor_hits_ = 0;
  friend class Gradients;
};

// Record/replay store for stop-gradient outputs. The finite-difference
// harness records every frozen value during a reference evaluation, then
// replays them while parameters are perturbed, so the function under test
// is exactly the one backward differentiates. Off by default.
class SgStore {
 public:
  std::vector<Matrix> recorded;
};

class SgScope {
 public:
  enum class Mode { record, replay };
  SgScope(Mode mode, SgStore& store);
  ~SgScope();
  SgScope(const SgScope&) = delete;
  SgScope& operator=(const SgScope&) = delete;

  static SgScope* active();
  Matrix intercept(Matrix&& fresh);

 private:
  Mode mode_;
  SgStore& store_;
  size_t cursor_ = 0;
};

// ---- op layer -------------------------------------------------------------

// Values pass through unchanged; no gradient reaches any ancestor.
Tensor stop_gradient(const Tensor& a);
// Externally computed values injected as a frozen constant (same pinning
// semantics as stop_gradient under an active SgScope).
Tensor frozen(Matrix values);

Tensor matmul(const Tensor& a, const Tensor& b);

// Binary elementwise; shapes must match, or b may be 1xN (row broadcast)
// or Mx1 (column broadcast) against an MxN a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Unary elementwise.
Tensor square(const Tensor& a);
Tensor log(const Tensor& a);  // inputs floored at 1e-20; NaN input throws
Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor shift(const Tensor& a, double c);
Tensor min_const(const Tensor& a, double c);

// Reductions.
Tensor sum(const Tensor& a);          // 1x1
Tensor mean(const Tensor& a);         // 1x1
Tensor sum_sq_rows(const Tensor& a);  // Mx1 of per-row squared 2-norms

constexpr double kLogFloor = 1e-20;

}  // namespace pga
