#include "depthforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace depthforge::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::Neg: return "neg";
    case Op::MatMul: return "matmul";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Abs: return "abs";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Median: return "median_even_avg";
    case Op::Minimum: return "minimum";
    case Op::Maximum: return "maximum";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Gather: return "gather";
    case Op::L2NormalizeRows: return "l2_normalize_rows";
    case Op::CosineRows: return "cosine_rows";
  }
  return "unknown";
}

void Node::accumulate(const GridXd& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var Var::parameter(GridXd value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var Var::constant(GridXd value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

GridXd Var::grad() const {
  if (node_->grad.size() == 0) return GridXd::Zero(rows(), cols());
  return node_->grad;
}

double Var::item() const {
  if (size() != 1) throw ShapeError("item() on a " + shape_string(rows(), cols()) + " value");
  return node_->value(0, 0);
}

namespace {

using NodePtr = std::shared_ptr<Node>;

Var make(Op op, GridXd value, std::vector<NodePtr> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  n->requires_grad = std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

enum class Broadcast { Same, Scalar, Row };

Broadcast broadcast_kind(const Var& a, const Var& b, std::string_view what) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  throw ShapeError(std::string(what) + ": cannot combine " + shape_string(a.rows(), a.cols()) + " with " +
                   shape_string(b.rows(), b.cols()));
}

GridXd expand(const GridXd& b, Broadcast kind, Index rows, Index cols) {
  switch (kind) {
    case Broadcast::Same: return b;
    case Broadcast::Scalar: return GridXd::Constant(rows, cols, b(0, 0));
    case Broadcast::Row: return b.replicate(rows, 1);
  }
  return b;
}

GridXd reduce(const GridXd& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::Same: return g;
    case Broadcast::Scalar: return GridXd::Constant(1, 1, g.sum());
    case Broadcast::Row: return g.colwise().sum();
  }
  return g;
}

void push(const NodePtr& p, const GridXd& g) {
  if (p->requires_grad) p->accumulate(g);
}

// Order statistics of a flat array: positions of the lower and upper middle
// elements under (value, index) ordering, so ties resolve deterministically.
std::pair<Index, Index> middle_positions(const double* v, Index n) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  auto less = [v](Index a, Index b) { return v[a] < v[b] || (v[a] == v[b] && a < b); };
  const auto mid = static_cast<std::size_t>(n / 2);
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(mid), idx.end(), less);
  const Index upper = idx[mid];
  if (n % 2 == 1) return {upper, upper};
  const Index lower = *std::max_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(mid), less);
  return {lower, upper};
}

}  // namespace

double median_even_avg(std::span<const double> values) {
  if (values.empty()) throw DomainError("median of an empty set");
  const auto [lo, hi] = middle_positions(values.data(), static_cast<Index>(values.size()));
  return lo == hi ? values[static_cast<std::size_t>(lo)]
                  : 0.5 * (values[static_cast<std::size_t>(lo)] + values[static_cast<std::size_t>(hi)]);
}

void backward(const Var& root) {
  if (!root) throw std::invalid_argument("backward on an empty Var");
  if (root.size() != 1) {
    throw ShapeError("backward: root must be scalar, got " + shape_string(root.rows(), root.cols()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; reversed it is a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(GridXd::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

void zero_grad(const Var& root) {
  std::vector<Node*> stack{root.node().get()};
  std::unordered_set<Node*> seen{root.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    n->grad.resize(0, 0);
    for (const auto& p : n->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
}

Var detach(const Var& x) { return Var::constant(x.value()); }

Var add(const Var& a, const Var& b) {
  const auto kind = broadcast_kind(a, b, "add");
  GridXd out = a.value() + expand(b.value(), kind, a.rows(), a.cols());
  return make(Op::Add, std::move(out), {a.node(), b.node()}, [kind](Node& n) {
    push(n.parents[0], n.grad);
    push(n.parents[1], reduce(n.grad, kind));
  });
}

Var sub(const Var& a, const Var& b) {
  const auto kind = broadcast_kind(a, b, "sub");
  GridXd out = a.value() - expand(b.value(), kind, a.rows(), a.cols());
  return make(Op::Sub, std::move(out), {a.node(), b.node()}, [kind](Node& n) {
    push(n.parents[0], n.grad);
    push(n.parents[1], reduce(-n.grad, kind));
  });
}

Var mul(const Var& a, const Var& b) {
  const auto kind = broadcast_kind(a, b, "mul");
  GridXd bx = expand(b.value(), kind, a.rows(), a.cols());
  GridXd out = a.value().cwiseProduct(bx);
  return make(Op::Mul, std::move(out), {a.node(), b.node()}, [kind, bx = std::move(bx)](Node& n) {
    push(n.parents[0], n.grad.cwiseProduct(bx));
    if (n.parents[1]->requires_grad) push(n.parents[1], reduce(n.grad.cwiseProduct(n.parents[0]->value), kind));
  });
}

Var div(const Var& a, const Var& b) {
  const auto kind = broadcast_kind(a, b, "div");
  if ((b.value().array() == 0.0).any()) throw DomainError("div: zero divisor");
  GridXd bx = expand(b.value(), kind, a.rows(), a.cols());
  GridXd out = a.value().cwiseQuotient(bx);
  return make(Op::Div, out, {a.node(), b.node()}, [kind, bx = std::move(bx), out](Node& n) {
    push(n.parents[0], n.grad.cwiseQuotient(bx));
    if (n.parents[1]->requires_grad) {
      push(n.parents[1], reduce(-(n.grad.cwiseProduct(out)).cwiseQuotient(bx), kind));
    }
  });
}

Var scale(const Var& a, double k) {
  return make(Op::Scale, a.value() * k, {a.node()}, [k](Node& n) { push(n.parents[0], n.grad * k); });
}

Var shift(const Var& a, double k) {
  return make(Op::Shift, a.value().array() + k, {a.node()}, [](Node& n) { push(n.parents[0], n.grad); });
}

Var neg(const Var& a) {
  return make(Op::Neg, -a.value(), {a.node()}, [](Node& n) { push(n.parents[0], -n.grad); });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a.rows(), a.cols()) + " @ " + shape_string(b.rows(), b.cols()));
  }
  GridXd out = a.value() * b.value();
  return make(Op::MatMul, std::move(out), {a.node(), b.node()}, [](Node& n) {
    const auto& pa = n.parents[0];
    const auto& pb = n.parents[1];
    if (pa->requires_grad) push(pa, n.grad * pb->value.transpose());
    if (pb->requires_grad) push(pb, pa->value.transpose() * n.grad);
  });
}

Var relu(const Var& a) {
  GridXd out = a.value().cwiseMax(0.0);
  return make(Op::Relu, std::move(out), {a.node()}, [](Node& n) {
    push(n.parents[0], (n.parents[0]->value.array() > 0.0).select(n.grad, 0.0));
  });
}

Var sigmoid(const Var& a) {
  GridXd out = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  return make(Op::Sigmoid, out, {a.node()}, [out](Node& n) {
    push(n.parents[0], (n.grad.array() * out.array() * (1.0 - out.array())).matrix());
  });
}

Var abs(const Var& a) {
  return make(Op::Abs, a.value().cwiseAbs(), {a.node()}, [](Node& n) {
    const auto& x = n.parents[0]->value.array();
    GridXd sign = (x > 0.0).cast<double>() - (x < 0.0).cast<double>();
    push(n.parents[0], n.grad.cwiseProduct(sign));
  });
}

Var sum(const Var& a) {
  const Index r = a.rows();
  const Index c = a.cols();
  return make(Op::Sum, GridXd::Constant(1, 1, a.value().sum()), {a.node()},
              [r, c](Node& n) { push(n.parents[0], GridXd::Constant(r, c, n.grad(0, 0))); });
}

Var mean(const Var& a) {
  if (a.size() == 0) throw DomainError("mean of an empty set");
  const Index r = a.rows();
  const Index c = a.cols();
  const double inv = 1.0 / static_cast<double>(a.size());
  return make(Op::Mean, GridXd::Constant(1, 1, a.value().sum() * inv), {a.node()},
              [r, c, inv](Node& n) { push(n.parents[0], GridXd::Constant(r, c, n.grad(0, 0) * inv)); });
}

Var median_even_avg(const Var& a) {
  if (a.size() == 0) throw DomainError("median of an empty set");
  const double* v = a.value().data();
  const auto [lo, hi] = middle_positions(v, a.size());
  const double m = lo == hi ? v[lo] : 0.5 * (v[lo] + v[hi]);
  const Index r = a.rows();
  const Index c = a.cols();
  return make(Op::Median, GridXd::Constant(1, 1, m), {a.node()}, [r, c, lo = lo, hi = hi](Node& n) {
    GridXd g = GridXd::Zero(r, c);
    const double up = n.grad(0, 0);
    if (lo == hi) {
      g.data()[lo] = up;
    } else {
      g.data()[lo] = 0.5 * up;
      g.data()[hi] = 0.5 * up;
    }
    push(n.parents[0], g);
  });
}

namespace {

Var select_binary(Op op, const Var& a, const Var& b, bool take_min) {
  const auto kind = broadcast_kind(a, b, op_name(op));
  GridXd bx = expand(b.value(), kind, a.rows(), a.cols());
  Mask pick_a = take_min ? Mask((a.value().array() <= bx.array()).matrix())
                         : Mask((a.value().array() >= bx.array()).matrix());
  GridXd out = pick_a.select(a.value(), bx);
  return make(op, std::move(out), {a.node(), b.node()}, [kind, pick_a = std::move(pick_a)](Node& n) {
    push(n.parents[0], pick_a.select(n.grad, 0.0));
    push(n.parents[1], reduce(pick_a.select(0.0, n.grad), kind));
  });
}

}  // namespace

Var minimum(const Var& a, const Var& b) { return select_binary(Op::Minimum, a, b, true); }
Var maximum(const Var& a, const Var& b) { return select_binary(Op::Maximum, a, b, false); }

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Index rows = 0;
  Index cols = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    if (axis == 0) {
      if (!parents.empty() && p.cols() != cols) throw ShapeError("concat: column count mismatch");
      cols = p.cols();
      rows += p.rows();
    } else {
      if (!parents.empty() && p.rows() != rows) throw ShapeError("concat: row count mismatch");
      rows = p.rows();
      cols += p.cols();
    }
    parents.push_back(p.node());
  }
  GridXd out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    if (axis == 0) {
      out.middleRows(offset, p.rows()) = p.value();
      offset += p.rows();
    } else {
      out.middleCols(offset, p.cols()) = p.value();
      offset += p.cols();
    }
  }
  return make(Op::Concat, std::move(out), std::move(parents), [axis](Node& n) {
    Index off = 0;
    for (const auto& p : n.parents) {
      if (axis == 0) {
        push(p, n.grad.middleRows(off, p->value.rows()));
        off += p->value.rows();
      } else {
        push(p, n.grad.middleCols(off, p->value.cols()));
        off += p->value.cols();
      }
    }
  });
}

Var slice(const Var& a, Index row, Index col, Index rows, Index cols) {
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() || col + cols > a.cols()) {
    throw ShapeError("slice: block out of range of " + shape_string(a.rows(), a.cols()));
  }
  GridXd out = a.value().block(row, col, rows, cols);
  const Index r = a.rows();
  const Index c = a.cols();
  return make(Op::Slice, std::move(out), {a.node()}, [=](Node& n) {
    GridXd g = GridXd::Zero(r, c);
    g.block(row, col, rows, cols) = n.grad;
    push(n.parents[0], g);
  });
}

Var gather(const Var& a, std::span<const Index> index, Index rows, Index cols) {
  if (rows * cols != static_cast<Index>(index.size())) throw ShapeError("gather: index count does not match output shape");
  GridXd out(rows, cols);
  const Index n_in = a.size();
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= n_in) throw ShapeError("gather: index out of range");
    out.data()[k] = a.value().data()[index[k]];
  }
  std::vector<Index> idx(index.begin(), index.end());
  const Index r = a.rows();
  const Index c = a.cols();
  return make(Op::Gather, std::move(out), {a.node()}, [r, c, idx = std::move(idx)](Node& n) {
    GridXd g = GridXd::Zero(r, c);
    for (std::size_t k = 0; k < idx.size(); ++k) g.data()[idx[k]] += n.grad.data()[k];
    push(n.parents[0], g);
  });
}

Var l2_normalize_rows(const Var& a) {
  Eigen::VectorXd norms = a.value().rowwise().norm();
  if ((norms.array() == 0.0).any()) throw DomainError("l2_normalize_rows: zero-norm row");
  GridXd out = norms.cwiseInverse().asDiagonal() * a.value();
  return make(Op::L2NormalizeRows, out, {a.node()}, [norms = std::move(norms), out](Node& n) {
    // d(x/|x|) = (g - y (y.g)) / |x|
    Eigen::VectorXd dots = out.cwiseProduct(n.grad).rowwise().sum();
    GridXd g = norms.cwiseInverse().asDiagonal() * (n.grad - dots.asDiagonal() * out);
    push(n.parents[0], g);
  });
}

Var cosine_rows(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("cosine_rows: " + shape_string(a.rows(), a.cols()) + " vs " + shape_string(b.rows(), b.cols()));
  }
  const Var ua = l2_normalize_rows(a);
  const Var ub = l2_normalize_rows(b);
  GridXd out = ua.value().cwiseProduct(ub.value()).rowwise().sum();
  return make(Op::CosineRows, std::move(out), {ua.node(), ub.node()}, [](Node& n) {
    const auto& pa = n.parents[0];
    const auto& pb = n.parents[1];
    push(pa, n.grad.col(0).asDiagonal() * pb->value);
    push(pb, n.grad.col(0).asDiagonal() * pa->value);
  });
}

}  // namespace depthforge::ad
