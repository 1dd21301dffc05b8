#pragma once

// Reverse-mode differentiation over row-major double grids.
//
// A Var is a handle to a graph node. Graphs are built eagerly by the free
// functions below and discarded when the last handle goes away. Every node
// stores a 2-D value; scalars are 1x1. Binary elementwise ops broadcast the
// second operand when it is 1x1 or a single row matching the column count.

#include "depthforge/errors.hpp"
#include "depthforge/tensor.hpp"

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace depthforge::ad {

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  Shift,
  Neg,
  MatMul,
  Relu,
  Sigmoid,
  Abs,
  Sum,
  Mean,
  Median,
  Minimum,
  Maximum,
  Concat,
  Slice,
  Gather,
  L2NormalizeRows,
  CosineRows,
};

std::string_view op_name(Op op);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Node {
  GridXd value;
  GridXd grad;  // allocated on first accumulation during backward
  Op op = Op::Leaf;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents

  void accumulate(const GridXd& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  /// Trainable leaf: collects a gradient on backward().
  static Var parameter(GridXd value);
  /// Constant leaf: never receives a gradient.
  static Var constant(GridXd value);
  static Var scalar(double v) { return constant(GridXd::Constant(1, 1, v)); }

  const GridXd& value() const { return node_->value; }
  /// Gradient after backward(); zeros if nothing flowed here.
  GridXd grad() const;
  double item() const;

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  Op op() const { return node_->op; }
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
/// Each node is visited once in reverse topological order.
void backward(const Var& root);

/// Clears gradients on every node reachable from root.
void zero_grad(const Var& root);

/// Same value, cut from the graph.
Var detach(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);  // throws DomainError on a zero divisor
Var scale(const Var& a, double k);
Var shift(const Var& a, double k);
Var neg(const Var& a);
Var matmul(const Var& a, const Var& b);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var abs(const Var& a);  // subgradient 0 at 0
Var sum(const Var& a);
Var mean(const Var& a);
/// Median of all elements; even counts average the two middle order
/// statistics and split the gradient half/half between them.
Var median_even_avg(const Var& a);
Var minimum(const Var& a, const Var& b);  // ties route gradient to a
Var maximum(const Var& a, const Var& b);  // ties route gradient to a
/// Stacks along rows (axis 0) or columns (axis 1).
Var concat(std::span<const Var> parts, int axis = 0);
Var slice(const Var& a, Index row, Index col, Index rows, Index cols);
/// out.flat[k] = a.flat[index[k]], reshaped to rows x cols. Gradient is a
/// scatter-add, so repeated indices are allowed.
Var gather(const Var& a, std::span<const Index> index, Index rows, Index cols);
Var l2_normalize_rows(const Var& a);  // zero-norm row -> DomainError
/// Per-row cosine similarity, G x 1.
Var cosine_rows(const Var& a, const Var& b);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double k) { return scale(a, k); }
inline Var operator*(double k, const Var& a) { return scale(a, k); }
inline Var operator+(const Var& a, double k) { return shift(a, k); }
inline Var operator-(const Var& a, double k) { return shift(a, -k); }

/// Median of a span with the even-count averaging rule, for plain doubles.
double median_even_avg(std::span<const double> values);

}  // namespace depthforge::ad
