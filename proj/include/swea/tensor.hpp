#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "swea/error.hpp"
#include "swea/rng.hpp"

namespace swea::ad {

/// Dense row-major matrix. All tape values are rank-2; scalars are 1x1 and
/// vectors are 1xN.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
class Tape;

/// Lightweight handle to a node owned by a Tape. Copying a Tensor aliases the
/// node; values are read through the tape.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  const Mat<Scalar>& value() const;
  const Mat<Scalar>& grad() const;
  bool requires_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::vector<Eigen::Index> shape() const { return {rows(), cols()}; }
  bool valid() const { return tape_ != nullptr; }
  int index() const { return index_; }
  Tape<Scalar>* tape() const { return tape_; }

 private:
  friend class Tape<Scalar>;
  Tensor(Tape<Scalar>* tape, int index) : tape_(tape), index_(index) {}

  Tape<Scalar>* tape_ = nullptr;
  int index_ = -1;
};

/// Ordered record of primitive operations. Nodes are appended in execution
/// order, so creation order is a topological order of the graph and the
/// backward sweep visits each node exactly once by walking the record in
/// reverse. A tape and its tensors belong to a single thread.
template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  struct Node {
    Mat<Scalar> value;
    Mat<Scalar> grad;  // allocated on backward() for nodes that require grad
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tensor<Scalar> leaf(Mat<Scalar> value, bool requires_grad) {
    return record(std::move(value), requires_grad, nullptr);
  }

  Tensor<Scalar> constant(Mat<Scalar> value) {
    return leaf(std::move(value), false);
  }

  Tensor<Scalar> scalar(Scalar v, bool requires_grad = false) {
    Mat<Scalar> m(1, 1);
    m(0, 0) = v;
    return leaf(std::move(m), requires_grad);
  }

  /// Appends an op result. `backward` may be null for leaves.
  Tensor<Scalar> record(Mat<Scalar> value, bool requires_grad,
                        BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Mat<Scalar>(), requires_grad,
                          std::move(backward)});
    return Tensor<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  Node& node_mut(int i) { return nodes_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `g` into node i's gradient if it participates in differentiation.
  template <typename Expr>
  void accumulate(int i, const Expr& g) {
    Node& n = node_mut(i);
    if (n.requires_grad) n.grad += g;
  }

  /// Reverse sweep from a scalar loss. Every leaf that requires grad ends up
  /// with its derivative in grad(). One backward pass per tape.
  void backward(const Tensor<Scalar>& loss) {
    if (loss.tape() != this) throw Error("backward: tensor from another tape");
    const Node& ln = node(loss.index());
    if (ln.value.rows() != 1 || ln.value.cols() != 1) {
      throw ShapeError("backward: loss must be a scalar (1x1), got " +
                       std::to_string(ln.value.rows()) + "x" +
                       std::to_string(ln.value.cols()));
    }
    for (auto& n : nodes_) {
      if (n.requires_grad) {
        n.grad = Mat<Scalar>::Zero(n.value.rows(), n.value.cols());
      }
    }
    Node& seed = node_mut(loss.index());
    if (!seed.requires_grad) return;  // loss depends on no differentiable leaf
    seed.grad(0, 0) = Scalar(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.backward) n.backward(*this, i);
    }
  }

 private:
  std::vector<Node> nodes_;
};

template <typename Scalar>
const Mat<Scalar>& Tensor<Scalar>::value() const {
  return tape_->node(index_).value;
}

template <typename Scalar>
const Mat<Scalar>& Tensor<Scalar>::grad() const {
  return tape_->node(index_).grad;
}

template <typename Scalar>
bool Tensor<Scalar>::requires_grad() const {
  return tape_->node(index_).requires_grad;
}

/// Matrix filled with N(0, stddev^2) draws in row-major order.
template <typename Scalar>
Mat<Scalar> randn(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                  double stddev = 1.0) {
  Mat<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = static_cast<Scalar>(rng.normal(0.0, stddev));
    }
  }
  return m;
}

}  // namespace swea::ad
