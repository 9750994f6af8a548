//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_AUTODIFF_H_
#define CANONDIFF_AUTODIFF_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace canondiff::ad {

/**
 * @brief Dense row-major matrix of 64-bit reals.
 *
 * Every value flowing through a tape is a Tensor of rank two; scalars are 1x1
 * and vectors are 1xn or nx1. The invariant rows() * cols() == size() always
 * holds.
 */
class Tensor {
public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::array<std::size_t, 2> shape() const noexcept { return { rows_, cols_ }; }
  bool same_shape(const Tensor &o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  double *data() noexcept { return values_.data(); }
  const double *data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double &operator()(std::size_t r, std::size_t c) {
    return values_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return { values_.data() + r * cols_, cols_ };
  }
  std::span<const double> row(std::size_t r) const {
    return { values_.data() + r * cols_, cols_ };
  }

  // Value of a 1x1 tensor.
  double item() const;

  void fill(double v);
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor &, const Tensor &) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

using NodeId = std::uint32_t;
using IndexList = std::shared_ptr<const std::vector<std::uint32_t>>;

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
  Var() = default;

  const Tensor &value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

  Tape *tape() const noexcept { return tape_; }
  NodeId id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

private:
  friend class Tape;
  Var(Tape *tape, NodeId id): tape_(tape), id_(id) { }

  Tape *tape_ = nullptr;
  NodeId id_ = 0;
};

// Parameter gradients keyed by the address of the parameter tensor.
class GradMap {
public:
  // Gradient for the parameter; zeros of the parameter's shape when the loss
  // does not depend on it.
  Tensor get(const Tensor &param) const;
  const Tensor *find(const Tensor &param) const;
  bool contains(const Tensor &param) const { return find(param) != nullptr; }
  std::size_t size() const noexcept { return grads_.size(); }

private:
  friend class Tape;
  std::unordered_map<const Tensor *, Tensor> grads_;
};

/**
 * @brief Define-by-run record of primitive operations.
 *
 * Nodes are appended in evaluation order, so every node's inputs precede it.
 * backward() walks the record once in reverse and may be called only once per
 * tape. A tape built with grad disabled records values only and is the path
 * used for sampling and evaluation.
 */
class Tape {
public:
  using BackwardFn = std::function<void(Tape &, NodeId)>;

  explicit Tape(bool grad_enabled = true): grad_enabled_(grad_enabled) { }
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  // Untracked leaf.
  Var constant(Tensor value);
  // Tracked leaf referring to an external parameter tensor, which must stay
  // alive and unmodified until backward() returns.
  Var param(const Tensor &p);
  // Leaf that reads an external tensor but is never differentiated.
  Var frozen(const Tensor &p);

  GradMap backward(Var loss);

  bool grad_enabled() const noexcept { return grad_enabled_; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Primitive-author interface.
  Var push(Tensor value, std::initializer_list<Var> inputs, const char *op,
           BackwardFn fn);
  Var push(Tensor value, const std::vector<Var> &inputs, const char *op,
           BackwardFn fn);
  const Tensor &value(NodeId id) const;
  bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }
  NodeId input(NodeId id, std::size_t k) const { return nodes_[id].inputs[k]; }
  std::size_t num_inputs(NodeId id) const { return nodes_[id].inputs.size(); }
  const Tensor &grad(NodeId id) const { return nodes_[id].grad; }
  // Grad buffer of a node, allocated as zeros on first use.
  Tensor &grad_buffer(NodeId id);
  const char *op(NodeId id) const { return nodes_[id].op; }

private:
  struct Node {
    Tensor value;
    const Tensor *external = nullptr;
    bool is_param = false;
    bool needs_grad = false;
    const char *op = "";
    std::vector<NodeId> inputs;
    BackwardFn backward;
    Tensor grad;
  };

  bool grad_enabled_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

// Elementwise arithmetic with broadcasting: each dimension of each operand
// must equal the output dimension or be 1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }

Var matmul(Var a, Var b);

Var sum(Var a);         // 1x1
Var sum_axis0(Var a);   // 1 x cols
Var sum_axis1(Var a);   // rows x 1
Var mean(Var a);
Var mean_axis0(Var a);
Var mean_axis1(Var a);

Var concat_cols(const std::vector<Var> &parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var broadcast_to(Var a, std::size_t rows, std::size_t cols);

Var relu(Var a);
Var silu(Var a);
Var tanh(Var a);
Var sqrt(Var a);
Var square(Var a);

// Per-row Euclidean norm, sqrt(sum_j a_ij^2 + eps^2); rows x 1.
Var row_norm(Var a, double eps);
Var softmax_rows(Var a);

// out[e] = a[index[e]]
Var gather_rows(Var a, const IndexList &index);
// out[index[e]] += a[e], out has `rows` rows.
Var scatter_add_rows(Var a, const IndexList &index, std::size_t rows);

}  // namespace canondiff::ad

#endif  // CANONDIFF_AUTODIFF_H_
