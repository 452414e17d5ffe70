#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// Every op records a node holding its value, its inputs, and a backward rule.
// Backward rules are written in terms of the same ops, so running grad() with
// create_graph = true yields gradients that are themselves differentiable.
// That is what the gradient penalty and the energy-based generator need: the
// parameter gradient of an input gradient.
//
// Rows are samples throughout: a batch of inputs is a (batch x features) matrix.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace fprior::diffnet {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Var;

namespace detail {

using BackwardFn = std::function<void(const Var& self, const Var& grad, std::span<const Var> inputs,
                                      std::span<const char> need, std::span<Var> out)>;

struct Node {
  Matrix value;
  bool requires_grad = false;
  std::uint64_t order = 0;
  const char* op = "leaf";
  std::vector<Var> inputs;
  BackwardFn backward;
};

}  // namespace detail

class Var {
 public:
  Var() = default;

  static Var constant(Matrix value);
  static Var parameter(Matrix value);
  static Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  /// Leaves only; used by optimizers and checkpoint loading.
  Matrix& mutable_value();
  double item() const;

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_ && !node_->backward; }
  const char* op() const { return node_->op; }
  /// Leaves only.
  void set_requires_grad(bool on);

  /// A constant leaf holding this value; cuts the graph.
  Var detach() const { return constant(value()); }

  const detail::Node* node() const { return node_.get(); }

 private:
  friend Var make_op(Matrix value, std::vector<Var> inputs, detail::BackwardFn fn, const char* op);
  friend std::vector<Var> grad(const Var& output, std::span<const Var> wrt, bool create_graph);
  explicit Var(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var make_op(Matrix value, std::vector<Var> inputs, detail::BackwardFn fn, const char* op);

/// Gradients of a 1x1 output with respect to each entry of wrt. Entries the
/// output does not depend on get zero matrices. With create_graph the returned
/// gradients carry their own graph and can be differentiated again.
std::vector<Var> grad(const Var& output, std::span<const Var> wrt, bool create_graph = false);

// --- ops -------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
/// a * b^T without materializing the transpose.
Var matmul_nt(const Var& a, const Var& b);
/// a^T * b without materializing the transpose.
Var matmul_tn(const Var& a, const Var& b);
Var transpose(const Var& a);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
/// Elementwise product.
Var hadamard(const Var& a, const Var& b);
Var operator*(const Var& a, double c);
Var operator*(double c, const Var& a);
Var operator+(const Var& a, double c);
Var operator-(const Var& a, double c);

/// a (m x n) + row (1 x n) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// Column sums of a (m x n) as a 1 x n row.
Var sum_rows(const Var& a);
/// Row sums of a (m x n) as an m x 1 column.
Var sum_cols(const Var& a);
Var repeat_rows(const Var& row, Index m);
Var repeat_cols(const Var& col, Index n);
/// 1x1 -> r x c.
Var broadcast(const Var& s, Index r, Index c);
Var sum(const Var& a);
Var mean(const Var& a);

Var tanh(const Var& a);
/// Vectorized elementwise tanh (absolute error below 2e-16).
Matrix tanh_values(const Matrix& a);
Var exp(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var reciprocal(const Var& a);

Var slice_cols(const Var& a, Index start, Index n);
Var pad_cols(const Var& a, Index start, Index total);
Var concat_cols(const Var& a, const Var& b);

}  // namespace fprior::diffnet
