//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/autodiff.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "canondiff/errors.h"
#include "canondiff/kernels.h"

namespace canondiff::ad {

/* Tensor */

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) { }

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols)
    throw ContractViolation("tensor value count does not match shape");
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1)
    throw ContractViolation("item() requires a 1x1 tensor");
  return values_[0];
}

void Tensor::fill(double v) {
  std::fill(values_.begin(), values_.end(), v);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double x) { return std::isfinite(x); });
}

/* Var, GradMap */

const Tensor &Var::value() const {
  return tape_->value(id_);
}

const Tensor *GradMap::find(const Tensor &param) const {
  auto it = grads_.find(&param);
  return it == grads_.end() ? nullptr : &it->second;
}

Tensor GradMap::get(const Tensor &param) const {
  if (const Tensor *g = find(param); g != nullptr)
    return *g;
  return Tensor(param.rows(), param.cols(), 0.0);
}

/* Tape */

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::param(const Tensor &p) {
  Node n;
  n.external = &p;
  n.is_param = grad_enabled_;
  n.needs_grad = grad_enabled_;
  n.op = "param";
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::frozen(const Tensor &p) {
  Node n;
  n.external = &p;
  n.op = "frozen";
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

const Tensor &Tape::value(NodeId id) const {
  const Node &n = nodes_[id];
  return n.external != nullptr ? *n.external : n.value;
}

Tensor &Tape::grad_buffer(NodeId id) {
  Node &n = nodes_[id];
  if (n.grad.size() == 0 && value(id).size() != 0) {
    const Tensor &v = value(id);
    n.grad = Tensor(v.rows(), v.cols(), 0.0);
  }
  return n.grad;
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, const char *op,
               BackwardFn fn) {
  return push(std::move(value), std::vector<Var>(inputs), op, std::move(fn));
}

Var Tape::push(Tensor value, const std::vector<Var> &inputs, const char *op,
               BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  if (grad_enabled_) {
    n.inputs.reserve(inputs.size());
    for (const Var &v: inputs) {
      if (v.tape() != this)
        throw ContractViolation(std::string("operands of ") + op
                                + " live on a different tape");
      n.inputs.push_back(v.id());
      n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
    }
    if (n.needs_grad)
      n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

GradMap Tape::backward(Var loss) {
  if (!grad_enabled_)
    throw ContractViolation("backward() on a tape recorded without gradients");
  if (consumed_)
    throw ContractViolation("tape already consumed by a previous backward()");
  if (loss.tape() != this)
    throw ContractViolation("loss does not belong to this tape");
  const Tensor &lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ContractViolation("backward() requires a scalar loss");
  consumed_ = true;

  GradMap out;
  if (!nodes_[loss.id()].needs_grad)
    return out;

  grad_buffer(loss.id()).fill(1.0);
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    const auto id = static_cast<NodeId>(i);
    Node &n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0)
      continue;
    if (!n.grad.all_finite()) {
      throw NumericFailure("non-finite gradient at node " + std::to_string(id)
                               + " (" + n.op + ")",
                           id, n.op);
    }
    if (n.is_param) {
      auto [it, inserted] = out.grads_.try_emplace(n.external, n.grad);
      if (!inserted)
        kernels::active().axpy(it->second.size(), 1.0, n.grad.data(),
                               it->second.data());
      continue;
    }
    if (n.backward)
      n.backward(*this, id);
    // Interior values and grads are dead past this point.
    nodes_[id].grad = Tensor();
  }
  return out;
}

namespace {

const kernels::KernelTable &K() {
  return kernels::active();
}

std::size_t bdim(std::size_t x, std::size_t y, const char *op) {
  if (x == y)
    return x;
  if (x == 1)
    return y;
  if (y == 1)
    return x;
  throw ContractViolation(std::string("incompatible shapes for ") + op);
}

// out[r,c] = f(a[r',c'], b[r'',c'']) with broadcasting of unit dimensions.
template <class F>
Tensor bcast(const Tensor &a, const Tensor &b, const char *op, F f) {
  const std::size_t rows = bdim(a.rows(), b.rows(), op);
  const std::size_t cols = bdim(a.cols(), b.cols(), op);
  Tensor out(rows, cols);
  const bool a_row1 = a.rows() == 1, b_row1 = b.rows() == 1;
  const bool a_col1 = a.cols() == 1, b_col1 = b.cols() == 1;
  for (std::size_t r = 0; r < rows; ++r) {
    const double *ap = a.data() + (a_row1 ? 0 : r * a.cols());
    const double *bp = b.data() + (b_row1 ? 0 : r * b.cols());
    double *op_ = out.data() + r * cols;
    if (!a_col1 && !b_col1) {
      for (std::size_t c = 0; c < cols; ++c)
        op_[c] = f(ap[c], bp[c]);
    } else if (a_col1 && !b_col1) {
      const double av = ap[0];
      for (std::size_t c = 0; c < cols; ++c)
        op_[c] = f(av, bp[c]);
    } else if (!a_col1 && b_col1) {
      const double bv = bp[0];
      for (std::size_t c = 0; c < cols; ++c)
        op_[c] = f(ap[c], bv);
    } else {
      for (std::size_t c = 0; c < cols; ++c)
        op_[c] = f(ap[0], bp[0]);
    }
  }
  return out;
}

// dst += g summed down to dst's shape.
void accumulate_reduced(Tensor &dst, const Tensor &g) {
  if (dst.same_shape(g)) {
    K().axpy(g.size(), 1.0, g.data(), dst.data());
    return;
  }
  const bool row1 = dst.rows() == 1, col1 = dst.cols() == 1;
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const double *gp = g.data() + r * g.cols();
    double *dp = dst.data() + (row1 ? 0 : r * dst.cols());
    if (col1) {
      double s = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c)
        s += gp[c];
      dp[0] += s;
    } else {
      K().axpy(g.cols(), 1.0, gp, dp);
    }
  }
}

Tape &tape_of(Var a) {
  if (!a.valid())
    throw ContractViolation("operation on an empty Var");
  return *a.tape();
}

template <class F>
Var unary(Var a, const char *op, F f, Tape::BackwardFn fn) {
  const Tensor &av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i)
    out.data()[i] = f(av.data()[i]);
  return tape_of(a).push(std::move(out), { a }, op, std::move(fn));
}

}  // namespace

/* Elementwise */

Var add(Var a, Var b) {
  const Tensor &av = a.value(), &bv = b.value();
  Tensor out;
  if (av.same_shape(bv)) {
    out = Tensor(av.rows(), av.cols());
    K().add(av.size(), av.data(), bv.data(), out.data());
  } else {
    out = bcast(av, bv, "add", [](double x, double y) { return x + y; });
  }
  return tape_of(a).push(std::move(out), { a, b }, "add",
                         [](Tape &t, NodeId self) {
    const Tensor &g = t.grad(self);
    for (std::size_t k = 0; k < 2; ++k) {
      NodeId in = t.input(self, k);
      if (t.needs_grad(in))
        accumulate_reduced(t.grad_buffer(in), g);
    }
  });
}

Var sub(Var a, Var b) {
  const Tensor &av = a.value(), &bv = b.value();
  Tensor out;
  if (av.same_shape(bv)) {
    out = Tensor(av.rows(), av.cols());
    K().sub(av.size(), av.data(), bv.data(), out.data());
  } else {
    out = bcast(av, bv, "sub", [](double x, double y) { return x - y; });
  }
  return tape_of(a).push(std::move(out), { a, b }, "sub",
                         [](Tape &t, NodeId self) {
    const Tensor &g = t.grad(self);
    NodeId ia = t.input(self, 0), ib = t.input(self, 1);
    if (t.needs_grad(ia))
      accumulate_reduced(t.grad_buffer(ia), g);
    if (t.needs_grad(ib)) {
      Tensor ng = g;
      for (double &x: ng.values())
        x = -x;
      accumulate_reduced(t.grad_buffer(ib), ng);
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor &av = a.value(), &bv = b.value();
  Tensor out;
  if (av.same_shape(bv)) {
    out = Tensor(av.rows(), av.cols());
    K().mul(av.size(), av.data(), bv.data(), out.data());
  } else {
    out = bcast(av, bv, "mul", [](double x, double y) { return x * y; });
  }
  return tape_of(a).push(std::move(out), { a, b }, "mul",
                         [](Tape &t, NodeId self) {
    const Tensor &g = t.grad(self);
    NodeId ia = t.input(self, 0), ib = t.input(self, 1);
    const Tensor &av = t.value(ia), &bv = t.value(ib);
    auto times = [](double x, double y) { return x * y; };
    if (t.needs_grad(ia)) {
      Tensor &ga = t.grad_buffer(ia);
      if (ga.same_shape(g) && bv.same_shape(g))
        K().fma_acc(g.size(), g.data(), bv.data(), ga.data());
      else
        accumulate_reduced(ga, bcast(g, bv, "mul", times));
    }
    if (t.needs_grad(ib)) {
      Tensor &gb = t.grad_buffer(ib);
      if (gb.same_shape(g) && av.same_shape(g))
        K().fma_acc(g.size(), g.data(), av.data(), gb.data());
      else
        accumulate_reduced(gb, bcast(g, av, "mul", times));
    }
  });
}

Var div(Var a, Var b) {
  Tensor out = bcast(a.value(), b.value(), "div",
                     [](double x, double y) { return x / y; });
  return tape_of(a).push(std::move(out), { a, b }, "div",
                         [](Tape &t, NodeId self) {
    const Tensor &g = t.grad(self);
    NodeId ia = t.input(self, 0), ib = t.input(self, 1);
    const Tensor &bv = t.value(ib);
    if (t.needs_grad(ia)) {
      accumulate_reduced(t.grad_buffer(ia),
                         bcast(g, bv, "div",
                               [](double x, double y) { return x / y; }));
    }
    if (t.needs_grad(ib)) {
      // d(a/b)/db = -(a/b)/b
      const Tensor &q = t.value(self);
      Tensor gq = bcast(g, q, "div", [](double x, double y) { return x * y; });
      accumulate_reduced(t.grad_buffer(ib),
                         bcast(gq, bv, "div",
                               [](double x, double y) { return -x / y; }));
    }
  });
}

Var neg(Var a) {
  return scale(a, -1.0);
}

Var scale(Var a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; },
               [s](Tape &t, NodeId self) {
    K().axpy(t.grad(self).size(), s, t.grad(self).data(),
             t.grad_buffer(t.input(self, 0)).data());
  });
}

Var add_scalar(Var a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; },
               [](Tape &t, NodeId self) {
    accumulate_reduced(t.grad_buffer(t.input(self, 0)), t.grad(self));
  });
}

/* Linear algebra */

Var matmul(Var a, Var b) {
  const Tensor &av = a.value(), &bv = b.value();
  if (av.cols() != bv.rows())
    throw ContractViolation("matmul inner dimensions differ");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(m, n);
  K().gemm_nn(m, n, k, av.data(), bv.data(), out.data(), false);
  return tape_of(a).push(std::move(out), { a, b }, "matmul",
                         [m, k, n](Tape &t, NodeId self) {
    const Tensor &g = t.grad(self);
    NodeId ia = t.input(self, 0), ib = t.input(self, 1);
    if (t.needs_grad(ia)) {
      K().gemm_nt(m, k, n, g.data(), t.value(ib).data(),
                  t.grad_buffer(ia).data(), true);
    }
    if (t.needs_grad(ib)) {
      K().gemm_tn(k, n, m, t.value(ia).data(), g.data(),
                  t.grad_buffer(ib).data(), true);
    }
  });
}

/* Reductions */

Var sum(Var a) {
  const Tensor &av = a.value();
  double s = 0.0;
  for (double x: av.values())
    s += x;
  return tape_of(a).push(Tensor::scalar(s), { a }, "sum",
                         [](Tape &t, NodeId self) {
    const double g = t.grad(self).item();
    for (double &x: t.grad_buffer(t.input(self, 0)).values())
      x += g;
  });
}

Var sum_axis0(Var a) {
  const Tensor &av = a.value();
  Tensor out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    K().axpy(av.cols(), 1.0, av.data() + r * av.cols(), out.data());
  return tape_of(a).push(std::move(out), { a }, "sum_axis0",
                         [](Tape &t, NodeId self) {
    accumulate_reduced(t.grad_buffer(t.input(self, 0)),
                       bcast(t.grad(self), t.value(t.input(self, 0)),
                             "sum_axis0", [](double g, double) { return g; }));
  });
}

Var sum_axis1(Var a) {
  const Tensor &av = a.value();
  Tensor out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (double x: av.row(r))
      s += x;
    out(r, 0) = s;
  }
  return tape_of(a).push(std::move(out), { a }, "sum_axis1",
                         [](Tape &t, NodeId self) {
    const Tensor &g = t.grad(self);
    Tensor &ga = t.grad_buffer(t.input(self, 0));
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (double &x: ga.row(r))
        x += g(r, 0);
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var mean_axis0(Var a) {
  return scale(sum_axis0(a), 1.0 / static_cast<double>(a.rows()));
}

Var mean_axis1(Var a) {
  return scale(sum_axis1(a), 1.0 / static_cast<double>(a.cols()));
}

/* Shape */

Var concat_cols(const std::vector<Var> &parts) {
  if (parts.empty())
    throw ContractViolation("concat_cols of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var &p: parts) {
    if (p.rows() != rows)
      throw ContractViolation("concat_cols row counts differ");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (const Var &p: parts) {
    const Tensor &pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.data() + r * pv.cols(), pv.cols(),
                  out.data() + r * cols + off);
    off += pv.cols();
  }
  return tape_of(parts.front())
      .push(std::move(out), parts, "concat_cols", [](Tape &t, NodeId self) {
    const Tensor &g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < t.num_inputs(self); ++k) {
      NodeId in = t.input(self, k);
      const std::size_t w = t.value(in).cols();
      if (t.needs_grad(in)) {
        Tensor &gi = t.grad_buffer(in);
        for (std::size_t r = 0; r < g.rows(); ++r)
          K().axpy(w, 1.0, g.data() + r * g.cols() + off, gi.data() + r * w);
      }
      off += w;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor &av = a.value();
  if (begin >= end || end > av.cols())
    throw ContractViolation("slice_cols range out of bounds");
  const std::size_t w = end - begin;
  Tensor out(av.rows(), w);
  for (std::size_t r = 0; r < av.rows(); ++r)
    std::copy_n(av.data() + r * av.cols() + begin, w, out.data() + r * w);
  return tape_of(a).push(std::move(out), { a }, "slice_cols",
                         [begin, w](Tape &t, NodeId self) {
    const Tensor &g = t.grad(self);
    Tensor &ga = t.grad_buffer(t.input(self, 0));
    for (std::size_t r = 0; r < g.rows(); ++r)
      K().axpy(w, 1.0, g.data() + r * w, ga.data() + r * ga.cols() + begin);
  });
}

Var broadcast_to(Var a, std::size_t rows, std::size_t cols) {
  const Tensor &av = a.value();
  if ((av.rows() != rows && av.rows() != 1)
      || (av.cols() != cols && av.cols() != 1))
    throw ContractViolation("broadcast_to: incompatible target shape");
  Tensor target(rows, cols);
  Tensor out = bcast(av, target, "broadcast_to",
                     [](double x, double) { return x; });
  return tape_of(a).push(std::move(out), { a }, "broadcast_to",
                         [](Tape &t, NodeId self) {
    accumulate_reduced(t.grad_buffer(t.input(self, 0)), t.grad(self));
  });
}

/* Nonlinearities */

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](Tape &t, NodeId self) {
    NodeId in = t.input(self, 0);
    const Tensor &x = t.value(in), &g = t.grad(self);
    Tensor &gi = t.grad_buffer(in);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.data()[i] > 0.0)
        gi.data()[i] += g.data()[i];
  });
}

namespace {
double sigmoid(double x) {
  return 1.0 / (1.0 + std::exp(-x));
}
}  // namespace

Var silu(Var a) {
  return unary(a, "silu", [](double x) { return x * sigmoid(x); },
               [](Tape &t, NodeId self) {
    NodeId in = t.input(self, 0);
    const Tensor &x = t.value(in), &g = t.grad(self);
    Tensor &gi = t.grad_buffer(in);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double xv = x.data()[i];
      const double s = sigmoid(xv);
      gi.data()[i] += g.data()[i] * s * (1.0 + xv * (1.0 - s));
    }
  });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](Tape &t, NodeId self) {
    const Tensor &y = t.value(self), &g = t.grad(self);
    Tensor &gi = t.grad_buffer(t.input(self, 0));
    for (std::size_t i = 0; i < g.size(); ++i)
      gi.data()[i] += g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
  });
}

Var sqrt(Var a) {
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
               [](Tape &t, NodeId self) {
    const Tensor &y = t.value(self), &g = t.grad(self);
    Tensor &gi = t.grad_buffer(t.input(self, 0));
    for (std::size_t i = 0; i < g.size(); ++i)
      gi.data()[i] += g.data()[i] * 0.5 / y.data()[i];
  });
}

Var square(Var a) {
  return unary(a, "square", [](double x) { return x * x; },
               [](Tape &t, NodeId self) {
    NodeId in = t.input(self, 0);
    const Tensor &x = t.value(in), &g = t.grad(self);
    Tensor &gi = t.grad_buffer(in);
    for (std::size_t i = 0; i < g.size(); ++i)
      gi.data()[i] += 2.0 * g.data()[i] * x.data()[i];
  });
}

Var row_norm(Var a, double eps) {
  const Tensor &av = a.value();
  Tensor out(av.rows(), 1);
  const double eps2 = eps * eps;
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const double *p = av.data() + r * av.cols();
    out(r, 0) = std::sqrt(K().dot(av.cols(), p, p) + eps2);
  }
  return tape_of(a).push(std::move(out), { a }, "row_norm",
                         [](Tape &t, NodeId self) {
    NodeId in = t.input(self, 0);
    const Tensor &x = t.value(in), &y = t.value(self), &g = t.grad(self);
    Tensor &gi = t.grad_buffer(in);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      K().axpy(x.cols(), g(r, 0) / y(r, 0), x.data() + r * x.cols(),
               gi.data() + r * x.cols());
    }
  });
}

Var softmax_rows(Var a) {
  const Tensor &av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto in = av.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      s += o[c];
    }
    for (double &x: o)
      x /= s;
  }
  return tape_of(a).push(std::move(out), { a }, "softmax_rows",
                         [](Tape &t, NodeId self) {
    const Tensor &y = t.value(self), &g = t.grad(self);
    Tensor &gi = t.grad_buffer(t.input(self, 0));
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double gy = K().dot(y.cols(), g.data() + r * y.cols(),
                                y.data() + r * y.cols());
      for (std::size_t c = 0; c < y.cols(); ++c)
        gi(r, c) += y(r, c) * (g(r, c) - gy);
    }
  });
}

/* Indexing */

Var gather_rows(Var a, const IndexList &index) {
  const Tensor &av = a.value();
  const std::size_t w = av.cols();
  Tensor out(index->size(), w);
  for (std::size_t e = 0; e < index->size(); ++e) {
    const std::uint32_t src = (*index)[e];
    if (src >= av.rows())
      throw ContractViolation("gather_rows index out of range");
    std::copy_n(av.data() + src * w, w, out.data() + e * w);
  }
  return tape_of(a).push(std::move(out), { a }, "gather_rows",
                         [index, w](Tape &t, NodeId self) {
    const Tensor &g = t.grad(self);
    Tensor &gi = t.grad_buffer(t.input(self, 0));
    for (std::size_t e = 0; e < index->size(); ++e)
      K().axpy(w, 1.0, g.data() + e * w, gi.data() + (*index)[e] * w);
  });
}

Var scatter_add_rows(Var a, const IndexList &index, std::size_t rows) {
  const Tensor &av = a.value();
  if (index->size() != av.rows())
    throw ContractViolation("scatter_add_rows index length != rows");
  const std::size_t w = av.cols();
  Tensor out(rows, w);
  for (std::size_t e = 0; e < index->size(); ++e) {
    const std::uint32_t dst = (*index)[e];
    if (dst >= rows)
      throw ContractViolation("scatter_add_rows index out of range");
    K().axpy(w, 1.0, av.data() + e * w, out.data() + dst * w);
  }
  return tape_of(a).push(std::move(out), { a }, "scatter_add_rows",
                         [index, w](Tape &t, NodeId self) {
    const Tensor &g = t.grad(self);
    Tensor &gi = t.grad_buffer(t.input(self, 0));
    for (std::size_t e = 0; e < index->size(); ++e)
      K().axpy(w, 1.0, g.data() + (*index)[e] * w, gi.data() + e * w);
  });
}

}  // namespace canondiff::ad
