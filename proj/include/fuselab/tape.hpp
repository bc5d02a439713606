#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fuselab/core.hpp"
#include "fuselab/error.hpp"
#include "fuselab/fusion.hpp"

namespace fuselab {

/// Append-only reverse-mode record over matrix-valued nodes. Templated on the
/// scalar so that running it with a forward-mode scalar yields
/// Hessian-vector products (forward-over-reverse).
///
/// Topological order is insertion order; `backward` walks the nodes once in
/// reverse.
template <typename Scalar>
class Tape {
 public:
  using Matrix = MatrixX<Scalar>;
  using NodeId = int;

  enum class Op {
    Leaf,
    Add,
    Sub,
    Mul,              // elementwise
    MatMul,
    Scale,            // by a constant
    Exp,
    MaxSubtract,      // per column: x - max(x)
    ColSum,           // -> 1 x cols
    Reciprocal,
    MulRowBroadcast,  // a (r x c) times row (1 x c), broadcast over rows
    Sum,              // -> 1 x 1
    Warp,             // bilinear-sample: base (|Z| x 1), thetas (n x 6) -> n x |Z|
  };

  struct Gradients {
    std::vector<Matrix> adjoint;  // per node; empty where no gradient flows
    int visited = 0;
  };

  NodeId leaf(Matrix value, bool requires_grad = false) {
    return push({Op::Leaf, -1, -1, std::move(value), Scalar(0.0), {}, requires_grad});
  }

  NodeId add(NodeId a, NodeId b) {
    check_same(a, b);
    return push_binary(Op::Add, a, b, value(a) + value(b));
  }
  NodeId sub(NodeId a, NodeId b) {
    check_same(a, b);
    return push_binary(Op::Sub, a, b, value(a) - value(b));
  }
  NodeId mul(NodeId a, NodeId b) {
    check_same(a, b);
    return push_binary(Op::Mul, a, b, value(a).cwiseProduct(value(b)));
  }
  NodeId matmul(NodeId a, NodeId b) {
    require(value(a).cols() == value(b).rows(), ErrorKind::ShapeError, "matmul shape mismatch");
    Matrix v = value(a) * value(b);
    return push_binary(Op::MatMul, a, b, std::move(v));
  }
  NodeId scale(NodeId a, Scalar s) {
    Node n{Op::Scale, a, -1, value(a) * s, s, {}, node(a).requires_grad};
    return push(std::move(n));
  }
  NodeId exp(NodeId a) {
    Matrix v = value(a).unaryExpr([](const Scalar& x) -> Scalar { using std::exp; return exp(x); });
    return push_unary(Op::Exp, a, std::move(v));
  }
  NodeId max_subtract(NodeId a) {
    const Matrix& x = value(a);
    Matrix v(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const Eigen::Index m = argmax_col(x, c);
      const Scalar mx = x(m, c);
      for (Eigen::Index r = 0; r < x.rows(); ++r) v(r, c) = x(r, c) - mx;
    }
    return push_unary(Op::MaxSubtract, a, std::move(v));
  }
  NodeId col_sum(NodeId a) { return push_unary(Op::ColSum, a, value(a).colwise().sum()); }
  NodeId reciprocal(NodeId a) {
    Matrix v = value(a).unaryExpr([](const Scalar& x) -> Scalar { return Scalar(1.0) / x; });
    return push_unary(Op::Reciprocal, a, std::move(v));
  }
  NodeId mul_row_broadcast(NodeId a, NodeId row) {
    require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), ErrorKind::ShapeError,
            "broadcast row shape mismatch");
    Matrix v = value(a);
    for (Eigen::Index c = 0; c < v.cols(); ++c) v.col(c) *= value(row)(0, c);
    return push_binary(Op::MulRowBroadcast, a, row, std::move(v));
  }
  NodeId sum(NodeId a) {
    Matrix v(1, 1);
    v(0, 0) = value(a).sum();
    return push_unary(Op::Sum, a, std::move(v));
  }
  NodeId warp(NodeId base, NodeId thetas, const GridShape& grid) {
    require(value(base).size() == grid.cells() && value(base).cols() == 1, ErrorKind::ShapeError,
            "warp base must be a |Z| x 1 column");
    require(value(thetas).cols() == 6, ErrorKind::ShapeError, "thetas must be n x 6");
    Matrix v = warp_rows<Scalar>(value(base).data(), value(thetas), grid);
    Node n{Op::Warp, base, thetas, std::move(v), Scalar(0.0), grid,
           node(base).requires_grad || node(thetas).requires_grad};
    return push(std::move(n));
  }

  /// Column-wise temperature softmax composed from primitives.
  NodeId softmax(NodeId a, double temperature) {
    if (!(temperature > 0.0)) fail(ErrorKind::InvalidTemperature, "temperature must be positive");
    const NodeId e = exp(scale(max_subtract(a), Scalar(1.0 / temperature)));
    return mul_row_broadcast(e, reciprocal(col_sum(e)));
  }

  const Matrix& value(NodeId id) const { return node(id).value; }
  Op op(NodeId id) const { return node(id).op; }
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Adjoints of the 1 x 1 node `output` with respect to every node.
  Gradients backward(NodeId output) const {
    require(value(output).size() == 1, ErrorKind::ShapeError, "backward needs a scalar output");
    Gradients g;
    g.adjoint.resize(nodes_.size());
    g.adjoint[output] = Matrix::Constant(1, 1, Scalar(1.0));
    for (NodeId k = output; k >= 0; --k) {
      const Node& n = nodes_[k];
      if (!n.requires_grad || g.adjoint[k].size() == 0) continue;
      ++g.visited;
      propagate(k, n, g.adjoint);
    }
    return g;
  }

 private:
  struct Node {
    Op op;
    NodeId a;
    NodeId b;
    Matrix value;
    Scalar factor;
    GridShape grid;
    bool requires_grad;
  };

  const Node& node(NodeId id) const {
    require(id >= 0 && id < size(), ErrorKind::InvalidArgument, "bad tape node id");
    return nodes_[id];
  }

  void check_same(NodeId a, NodeId b) const {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
            ErrorKind::ShapeError, "elementwise shape mismatch");
  }

  static Eigen::Index argmax_col(const Matrix& x, Eigen::Index c) {
    Eigen::Index m = 0;
    for (Eigen::Index r = 1; r < x.rows(); ++r) {
      if (scalar_value(x(r, c)) > scalar_value(x(m, c))) m = r;
    }
    return m;
  }

  NodeId push_unary(Op op, NodeId a, Matrix v) {
    return push({op, a, -1, std::move(v), Scalar(0.0), {}, node(a).requires_grad});
  }
  NodeId push_binary(Op op, NodeId a, NodeId b, Matrix v) {
    return push({op, a, b, std::move(v), Scalar(0.0), {}, node(a).requires_grad || node(b).requires_grad});
  }

  NodeId push(Node n) {
    const NodeId id = size();
    for (Eigen::Index k = 0; k < n.value.size(); ++k) {
      if (!std::isfinite(scalar_value(n.value.data()[k]))) {
        fail(ErrorKind::NumericalOverflow, "non-finite value at tape node " + std::to_string(id));
      }
    }
    nodes_.push_back(std::move(n));
    return id;
  }

  void accumulate(std::vector<Matrix>& adj, NodeId id, Matrix g) const {
    if (!nodes_[id].requires_grad) return;
    if (adj[id].size() == 0) {
      adj[id] = std::move(g);
    } else {
      adj[id] += g;
    }
  }

  bool wants(NodeId id) const { return id >= 0 && nodes_[id].requires_grad; }

  void propagate(NodeId k, const Node& n, std::vector<Matrix>& adj) const {
    const Matrix& g = adj[k];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        accumulate(adj, n.a, g);
        accumulate(adj, n.b, g);
        break;
      case Op::Sub:
        accumulate(adj, n.a, g);
        if (wants(n.b)) accumulate(adj, n.b, -g);
        break;
      case Op::Mul:
        if (wants(n.a)) accumulate(adj, n.a, g.cwiseProduct(value(n.b)));
        if (wants(n.b)) accumulate(adj, n.b, g.cwiseProduct(value(n.a)));
        break;
      case Op::MatMul:
        if (wants(n.a)) accumulate(adj, n.a, g * value(n.b).transpose());
        if (wants(n.b)) accumulate(adj, n.b, value(n.a).transpose() * g);
        break;
      case Op::Scale:
        accumulate(adj, n.a, g * n.factor);
        break;
      case Op::Exp:
        accumulate(adj, n.a, g.cwiseProduct(n.value));
        break;
      case Op::MaxSubtract: {
        const Matrix& x = value(n.a);
        Matrix ga = g;
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
          ga(argmax_col(x, c), c) -= g.col(c).sum();
        }
        accumulate(adj, n.a, std::move(ga));
        break;
      }
      case Op::ColSum: {
        const Eigen::Index rows = value(n.a).rows();
        accumulate(adj, n.a, g.replicate(rows, 1));
        break;
      }
      case Op::Reciprocal:
        accumulate(adj, n.a, -g.cwiseProduct(n.value).cwiseProduct(n.value));
        break;
      case Op::MulRowBroadcast: {
        const Matrix& a = value(n.a);
        const Matrix& row = value(n.b);
        if (wants(n.a)) {
          Matrix ga = g;
          for (Eigen::Index c = 0; c < ga.cols(); ++c) ga.col(c) *= row(0, c);
          accumulate(adj, n.a, std::move(ga));
        }
        if (wants(n.b)) accumulate(adj, n.b, g.cwiseProduct(a).colwise().sum());
        break;
      }
      case Op::Sum: {
        const Matrix& a = value(n.a);
        accumulate(adj, n.a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
        break;
      }
      case Op::Warp: {
        const Matrix& base = value(n.a);
        const Matrix& thetas = value(n.b);
        Matrix gb, gt;
        if (wants(n.a)) gb = Matrix::Zero(base.rows(), 1);
        if (wants(n.b)) gt = Matrix::Zero(thetas.rows(), 6);
        warp_rows_backward<Scalar>(base.data(), thetas, n.grid, g, wants(n.a) ? gb.data() : nullptr,
                                   wants(n.b) ? &gt : nullptr);
        if (wants(n.a)) accumulate(adj, n.a, std::move(gb));
        if (wants(n.b)) accumulate(adj, n.b, std::move(gt));
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace fuselab
