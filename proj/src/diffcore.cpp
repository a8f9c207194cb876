// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/diffcore.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace mrvm::diff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

MapC view(const Tensor& t) { return MapC(t.data(), t.rows(), t.cols()); }
MapM view(Tensor& t) { return MapM(t.data(), t.rows(), t.cols()); }

[[noreturn]] void shape_error(std::string_view op, const Tensor& a,
                              const Tensor& b) {
  throw InvalidArgument(std::string(op) + ": shape mismatch " +
                        a.shape_string() + " vs " + b.shape_string());
}

[[noreturn]] void shape_error(std::string_view op, const Tensor& a,
                              const std::string& why) {
  throw InvalidArgument(std::string(op) + ": bad shape " + a.shape_string() +
                        " (" + why + ")");
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Node make(OpKind op, Var a) {
  Node n;
  n.op = op;
  n.in0 = a.id();
  return n;
}

Node make(OpKind op, Var a, Var b) {
  if (&a.tape() != &b.tape())
    throw InvalidArgument(std::string(op_name(op)) + ": operands on different tapes");
  Node n = make(op, a);
  n.in1 = b.id();
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw InvalidArgument("Tensor: " + std::to_string(data_.size()) +
                          " values for shape (" + std::to_string(rows) + "x" +
                          std::to_string(cols) + ")");
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Tensor::reshape(std::size_t rows, std::size_t cols) {
  if (rows * cols != data_.size())
    throw InvalidArgument("reshape: cannot view " + shape_string() + " as (" +
                          std::to_string(rows) + "x" + std::to_string(cols) + ")");
  rows_ = rows;
  cols_ = cols;
}

std::string Tensor::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::matvec: return "matvec";
    case OpKind::matmul: return "matmul";
    case OpKind::relu: return "relu";
    case OpKind::softplus: return "softplus";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::l2norm: return "l2norm";
    case OpKind::normalize: return "normalize";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::broadcast: return "broadcast";
    case OpKind::dot: return "dot";
    case OpKind::scale: return "scale";
    case OpKind::reshape: return "reshape";
    case OpKind::row_sum: return "row_sum";
    case OpKind::group_sum: return "group_sum";
    case OpKind::cumsum: return "cumsum";
    case OpKind::replace_rows: return "replace_rows";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::im2col3x3: return "im2col3x3";
    case OpKind::bilinear: return "bilinear";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(*this); }
const Tensor& Var::grad() const { return tape_->grad(*this); }

std::size_t Tape::check(Var v) const {
  if (!v.valid() || &v.tape() != this ||
      static_cast<std::size_t>(v.id()) >= nodes_.size())
    throw InvalidArgument("Var does not belong to this tape");
  return static_cast<std::size_t>(v.id());
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = OpKind::leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::push(Node node) {
  if (node.op != OpKind::leaf) {
    node.requires_grad = false;
    for (int in : {node.in0, node.in1})
      if (in >= 0 && nodes_[static_cast<std::size_t>(in)].requires_grad)
        node.requires_grad = true;
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_[check(v)];
  if (n.grad.size() == n.value.size() && n.grad.size() != 0) return n.grad;
  empty_grad_ = Tensor(n.value.rows(), n.value.cols());
  return empty_grad_;
}

void Tape::backward(Var root) {
  const std::size_t r = check(root);
  if (!nodes_[r].value.is_scalar())
    throw InvalidArgument("backward: root must be scalar, got " +
                          nodes_[r].value.shape_string());
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[r].requires_grad) return;
  nodes_[r].grad = Tensor::scalar(1.0);
  for (std::size_t i = r + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || n.op == OpKind::leaf) continue;
    backward_node(n);
  }
}

namespace {

Tensor& grad_of(std::vector<Node>& nodes, int id) {
  Node& n = nodes[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

}  // namespace

void Tape::backward_node(Node& n) {
  const Tensor& g = n.grad;
  const bool need0 = n.in0 >= 0 && nodes_[static_cast<std::size_t>(n.in0)].requires_grad;
  const bool need1 = n.in1 >= 0 && nodes_[static_cast<std::size_t>(n.in1)].requires_grad;
  const Tensor* a = n.in0 >= 0 ? &nodes_[static_cast<std::size_t>(n.in0)].value : nullptr;
  const Tensor* b = n.in1 >= 0 ? &nodes_[static_cast<std::size_t>(n.in1)].value : nullptr;
  const std::size_t count = g.size();

  switch (n.op) {
    case OpKind::leaf:
      break;
    case OpKind::add:
    case OpKind::sub: {
      if (need0) {
        Tensor& ga = grad_of(nodes_, n.in0);
        for (std::size_t i = 0; i < count; ++i) ga[i] += g[i];
      }
      if (need1) {
        Tensor& gb = grad_of(nodes_, n.in1);
        const double s = n.op == OpKind::add ? 1.0 : -1.0;
        for (std::size_t i = 0; i < count; ++i) gb[i] += s * g[i];
      }
      break;
    }
    case OpKind::mul: {
      if (need0) {
        Tensor& ga = grad_of(nodes_, n.in0);
        for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * (*b)[i];
      }
      if (need1) {
        Tensor& gb = grad_of(nodes_, n.in1);
        for (std::size_t i = 0; i < count; ++i) gb[i] += g[i] * (*a)[i];
      }
      break;
    }
    case OpKind::matvec: {
      // y (m x 1) = A (m x k) x; x stored as 1xk or kx1.
      const std::size_t m = a->rows(), k = a->cols();
      if (need0) {
        Tensor& ga = grad_of(nodes_, n.in0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) ga(i, j) += g[i] * (*b)[j];
      }
      if (need1) {
        Tensor& gb = grad_of(nodes_, n.in1);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) gb[j] += g[i] * (*a)(i, j);
      }
      break;
    }
    case OpKind::matmul: {
      if (need0) view(grad_of(nodes_, n.in0)).noalias() += view(g) * view(*b).transpose();
      if (need1) view(grad_of(nodes_, n.in1)).noalias() += view(*a).transpose() * view(g);
      break;
    }
    case OpKind::relu: {
      Tensor& ga = grad_of(nodes_, n.in0);
      for (std::size_t i = 0; i < count; ++i)
        if ((*a)[i] > 0.0) ga[i] += g[i];
      break;
    }
    case OpKind::softplus: {
      Tensor& ga = grad_of(nodes_, n.in0);
      for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * stable_sigmoid((*a)[i]);
      break;
    }
    case OpKind::sigmoid: {
      Tensor& ga = grad_of(nodes_, n.in0);
      for (std::size_t i = 0; i < count; ++i) {
        const double y = n.value[i];
        ga[i] += g[i] * y * (1.0 - y);
      }
      break;
    }
    case OpKind::exp: {
      Tensor& ga = grad_of(nodes_, n.in0);
      for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] * n.value[i];
      break;
    }
    case OpKind::log: {
      Tensor& ga = grad_of(nodes_, n.in0);
      for (std::size_t i = 0; i < count; ++i) ga[i] += g[i] / (*a)[i];
      break;
    }
    case OpKind::sum:
    case OpKind::mean: {
      Tensor& ga = grad_of(nodes_, n.in0);
      const double s = n.op == OpKind::sum ? g[0] : g[0] / static_cast<double>(a->size());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s;
      break;
    }
    case OpKind::l2norm: {
      Tensor& ga = grad_of(nodes_, n.in0);
      for (std::size_t r = 0; r < a->rows(); ++r) {
        const double norm = n.value[r];
        if (norm == 0.0) continue;
        for (std::size_t c = 0; c < a->cols(); ++c) ga(r, c) += g[r] * (*a)(r, c) / norm;
      }
      break;
    }
    case OpKind::normalize: {
      Tensor& ga = grad_of(nodes_, n.in0);
      const std::size_t cols = a->cols();
      for (std::size_t r = 0; r < a->rows(); ++r) {
        double norm2 = 0.0;
        for (std::size_t c = 0; c < cols; ++c) norm2 += (*a)(r, c) * (*a)(r, c);
        const double norm = std::sqrt(norm2);
        if (norm <= kNormalizeEps) continue;
        double yg = 0.0;
        for (std::size_t c = 0; c < cols; ++c) yg += n.value(r, c) * g(r, c);
        for (std::size_t c = 0; c < cols; ++c)
          ga(r, c) += (g(r, c) - n.value(r, c) * yg) / norm;
      }
      break;
    }
    case OpKind::concat: {
      const std::size_t ca = a->cols(), cb = b->cols();
      if (need0) {
        Tensor& ga = grad_of(nodes_, n.in0);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < ca; ++c) ga(r, c) += g(r, c);
      }
      if (need1) {
        Tensor& gb = grad_of(nodes_, n.in1);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < cb; ++c) gb(r, c) += g(r, ca + c);
      }
      break;
    }
    case OpKind::slice: {
      Tensor& ga = grad_of(nodes_, n.in0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, n.p0 + c) += g(r, c);
      break;
    }
    case OpKind::broadcast: {
      Tensor& ga = grad_of(nodes_, n.in0);
      const bool row_b = a->rows() == 1, col_b = a->cols() == 1;
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c)
          ga(row_b ? 0 : r, col_b ? 0 : c) += g(r, c);
      break;
    }
    case OpKind::dot: {
      const std::size_t cols = a->cols();
      if (need0) {
        Tensor& ga = grad_of(nodes_, n.in0);
        for (std::size_t r = 0; r < a->rows(); ++r)
          for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g[r] * (*b)(r, c);
      }
      if (need1) {
        Tensor& gb = grad_of(nodes_, n.in1);
        for (std::size_t r = 0; r < a->rows(); ++r)
          for (std::size_t c = 0; c < cols; ++c) gb(r, c) += g[r] * (*a)(r, c);
      }
      break;
    }
    case OpKind::scale: {
      Tensor& ga = grad_of(nodes_, n.in0);
      for (std::size_t i = 0; i < count; ++i) ga[i] += n.factor * g[i];
      break;
    }
    case OpKind::reshape: {
      Tensor& ga = grad_of(nodes_, n.in0);
      for (std::size_t i = 0; i < count; ++i) ga[i] += g[i];
      break;
    }
    case OpKind::row_sum: {
      Tensor& ga = grad_of(nodes_, n.in0);
      for (std::size_t r = 0; r < a->rows(); ++r)
        for (std::size_t c = 0; c < a->cols(); ++c) ga(r, c) += g[r];
      break;
    }
    case OpKind::group_sum: {
      Tensor& ga = grad_of(nodes_, n.in0);
      const std::size_t group = n.p0, cols = a->cols();
      for (std::size_t r = 0; r < a->rows(); ++r) {
        const double* src = g.data() + (r / group) * cols;
        double* dst = ga.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
      break;
    }
    case OpKind::cumsum: {
      Tensor& ga = grad_of(nodes_, n.in0);
      const std::size_t cols = a->cols();
      for (std::size_t r = 0; r < a->rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = cols; c-- > 0;) {
          ga(r, c) += acc;
          acc += g(r, c);
        }
      }
      break;
    }
    case OpKind::replace_rows: {
      const std::size_t cols = g.cols();
      if (need0) {
        Tensor& ga = grad_of(nodes_, n.in0);
        for (std::size_t r = 0; r < g.rows(); ++r)
          if (!n.index[r])
            for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g(r, c);
      }
      if (need1) {
        Tensor& gb = grad_of(nodes_, n.in1);
        for (std::size_t r = 0; r < g.rows(); ++r)
          if (n.index[r])
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
      }
      break;
    }
    case OpKind::gather_rows: {
      Tensor& ga = grad_of(nodes_, n.in0);
      const std::size_t cols = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double* dst = ga.data() + n.index[r] * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += g(r, c);
      }
      break;
    }
    case OpKind::im2col3x3: {
      Tensor& ga = grad_of(nodes_, n.in0);
      const std::size_t h = n.p0, w = n.p1, ch = a->cols(), plane = h * w;
      for (std::size_t img = 0; img < a->rows() / plane; ++img)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double* src = g.data() + (img * plane + y * w + x) * 9 * ch;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx, src += ch) {
              const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w))
                continue;
              double* dst = ga.data() + (img * plane + static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)) * ch;
              for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c];
            }
        }
      break;
    }
    case OpKind::bilinear: {
      Tensor& ga = grad_of(nodes_, n.in0);
      const std::size_t cols = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const BilinearTap& t = n.taps[r];
        for (int k = 0; k < 4; ++k) {
          if (t.weight[k] == 0.0) continue;
          double* dst = ga.data() + t.index[k] * cols;
          for (std::size_t c = 0; c < cols; ++c) dst[c] += t.weight[k] * g(r, c);
        }
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

Var add(Var a, Var b) {
  const Tensor &va = a.value(), &vb = b.value();
  if (!va.same_shape(vb)) shape_error("add", va, vb);
  Node n = make(OpKind::add, a, b);
  n.value = va;
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] += vb[i];
  return a.tape().push(std::move(n));
}

Var sub(Var a, Var b) {
  const Tensor &va = a.value(), &vb = b.value();
  if (!va.same_shape(vb)) shape_error("sub", va, vb);
  Node n = make(OpKind::sub, a, b);
  n.value = va;
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] -= vb[i];
  return a.tape().push(std::move(n));
}

Var mul(Var a, Var b) {
  const Tensor &va = a.value(), &vb = b.value();
  if (!va.same_shape(vb)) shape_error("mul", va, vb);
  Node n = make(OpKind::mul, a, b);
  n.value = va;
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] *= vb[i];
  return a.tape().push(std::move(n));
}

Var matvec(Var a, Var x) {
  const Tensor &va = a.value(), &vx = x.value();
  if (!(vx.rows() == 1 || vx.cols() == 1) || vx.size() != va.cols())
    shape_error("matvec", va, vx);
  Node n = make(OpKind::matvec, a, x);
  n.value = Tensor(va.rows(), 1);
  for (std::size_t i = 0; i < va.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < va.cols(); ++j) acc += va(i, j) * vx[j];
    n.value[i] = acc;
  }
  return a.tape().push(std::move(n));
}

Var matmul(Var a, Var b) {
  const Tensor &va = a.value(), &vb = b.value();
  if (va.cols() != vb.rows()) shape_error("matmul", va, vb);
  Node n = make(OpKind::matmul, a, b);
  n.value = Tensor(va.rows(), vb.cols());
  view(n.value).noalias() = view(va) * view(vb);
  return a.tape().push(std::move(n));
}

namespace {

template <class F>
Var unary(OpKind op, Var a, F&& f) {
  Node n = make(op, a);
  n.value = a.value();
  for (auto& v : n.value.values()) v = f(v);
  return a.tape().push(std::move(n));
}

}  // namespace

Var relu(Var a) {
  return unary(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}
Var softplus(Var a) { return unary(OpKind::softplus, a, stable_softplus); }
Var sigmoid(Var a) { return unary(OpKind::sigmoid, a, stable_sigmoid); }
Var exp(Var a) { return unary(OpKind::exp, a, [](double x) { return std::exp(x); }); }
Var log(Var a) { return unary(OpKind::log, a, [](double x) { return std::log(x); }); }

Var sum(Var a) {
  Node n = make(OpKind::sum, a);
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  n.value = Tensor::scalar(acc);
  return a.tape().push(std::move(n));
}

Var mean(Var a) {
  const Tensor& va = a.value();
  if (va.size() == 0) shape_error("mean", va, "empty");
  Node n = make(OpKind::mean, a);
  double acc = 0.0;
  for (double v : va.values()) acc += v;
  n.value = Tensor::scalar(acc / static_cast<double>(va.size()));
  return a.tape().push(std::move(n));
}

Var l2norm(Var a) {
  const Tensor& va = a.value();
  Node n = make(OpKind::l2norm, a);
  n.value = Tensor(va.rows(), 1);
  for (std::size_t r = 0; r < va.rows(); ++r) {
    double acc = 0.0;
    for (double v : va.row_span(r)) acc += v * v;
    n.value[r] = std::sqrt(acc);
  }
  return a.tape().push(std::move(n));
}

Var normalize(Var a) {
  const Tensor& va = a.value();
  Node n = make(OpKind::normalize, a);
  n.value = Tensor(va.rows(), va.cols());
  for (std::size_t r = 0; r < va.rows(); ++r) {
    double acc = 0.0;
    for (double v : va.row_span(r)) acc += v * v;
    const double norm = std::sqrt(acc);
    if (norm <= kNormalizeEps) continue;
    for (std::size_t c = 0; c < va.cols(); ++c) n.value(r, c) = va(r, c) / norm;
  }
  return a.tape().push(std::move(n));
}

Var concat(Var a, Var b) {
  const Tensor &va = a.value(), &vb = b.value();
  if (va.rows() != vb.rows()) shape_error("concat", va, vb);
  Node n = make(OpKind::concat, a, b);
  n.value = Tensor(va.rows(), va.cols() + vb.cols());
  for (std::size_t r = 0; r < va.rows(); ++r) {
    std::copy_n(va.data() + r * va.cols(), va.cols(), n.value.data() + r * n.value.cols());
    std::copy_n(vb.data() + r * vb.cols(), vb.cols(),
                n.value.data() + r * n.value.cols() + va.cols());
  }
  return a.tape().push(std::move(n));
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  const Tensor& va = a.value();
  if (begin >= end || end > va.cols())
    shape_error("slice", va, "columns [" + std::to_string(begin) + "," + std::to_string(end) + ")");
  Node n = make(OpKind::slice, a);
  n.p0 = begin;
  n.value = Tensor(va.rows(), end - begin);
  for (std::size_t r = 0; r < va.rows(); ++r)
    std::copy_n(va.data() + r * va.cols() + begin, end - begin,
                n.value.data() + r * (end - begin));
  return a.tape().push(std::move(n));
}

Var broadcast(Var a, std::size_t rows, std::size_t cols) {
  const Tensor& va = a.value();
  const bool ok = (va.rows() == 1 || va.rows() == rows) && (va.cols() == 1 || va.cols() == cols);
  if (!ok) shape_error("broadcast", va, "target (" + std::to_string(rows) + "x" + std::to_string(cols) + ")");
  Node n = make(OpKind::broadcast, a);
  n.value = Tensor(rows, cols);
  const bool row_b = va.rows() == 1, col_b = va.cols() == 1;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) n.value(r, c) = va(row_b ? 0 : r, col_b ? 0 : c);
  return a.tape().push(std::move(n));
}

Var dot(Var a, Var b) {
  const Tensor &va = a.value(), &vb = b.value();
  if (!va.same_shape(vb)) shape_error("dot", va, vb);
  Node n = make(OpKind::dot, a, b);
  n.value = Tensor(va.rows(), 1);
  for (std::size_t r = 0; r < va.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < va.cols(); ++c) acc += va(r, c) * vb(r, c);
    n.value[r] = acc;
  }
  return a.tape().push(std::move(n));
}

Var scale(Var a, double k) {
  Node n = make(OpKind::scale, a);
  n.factor = k;
  n.value = a.value();
  for (auto& v : n.value.values()) v *= k;
  return a.tape().push(std::move(n));
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Node n = make(OpKind::reshape, a);
  n.value = a.value();
  n.value.reshape(rows, cols);
  return a.tape().push(std::move(n));
}

Var row_sum(Var a) {
  const Tensor& va = a.value();
  Node n = make(OpKind::row_sum, a);
  n.value = Tensor(va.rows(), 1);
  for (std::size_t r = 0; r < va.rows(); ++r) {
    double acc = 0.0;
    for (double v : va.row_span(r)) acc += v;
    n.value[r] = acc;
  }
  return a.tape().push(std::move(n));
}

Var group_sum(Var a, std::size_t group) {
  const Tensor& va = a.value();
  if (group == 0 || va.rows() % group != 0)
    shape_error("group_sum", va, "rows not divisible by group " + std::to_string(group));
  Node n = make(OpKind::group_sum, a);
  n.p0 = group;
  n.value = Tensor(va.rows() / group, va.cols());
  const std::size_t cols = va.cols();
  for (std::size_t r = 0; r < va.rows(); ++r) {
    double* dst = n.value.data() + (r / group) * cols;
    const double* src = va.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
  }
  return a.tape().push(std::move(n));
}

Var cumsum_exclusive(Var a) {
  const Tensor& va = a.value();
  Node n = make(OpKind::cumsum, a);
  n.value = Tensor(va.rows(), va.cols());
  for (std::size_t r = 0; r < va.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < va.cols(); ++c) {
      n.value(r, c) = acc;
      acc += va(r, c);
    }
  }
  return a.tape().push(std::move(n));
}

Var replace_rows(Var a, Var replacement, const std::vector<std::uint8_t>& flags) {
  const Tensor &va = a.value(), &vr = replacement.value();
  if (vr.rows() != 1 || vr.cols() != va.cols()) shape_error("replace_rows", va, vr);
  if (flags.size() != va.rows())
    shape_error("replace_rows", va, std::to_string(flags.size()) + " flags");
  Node n = make(OpKind::replace_rows, a, replacement);
  n.value = va;
  n.index.assign(flags.begin(), flags.end());
  for (std::size_t r = 0; r < va.rows(); ++r)
    if (flags[r]) std::copy_n(vr.data(), vr.cols(), n.value.data() + r * va.cols());
  return a.tape().push(std::move(n));
}

Var gather_rows(Var a, std::vector<std::size_t> indices) {
  const Tensor& va = a.value();
  for (std::size_t i : indices)
    if (i >= va.rows()) shape_error("gather_rows", va, "row index " + std::to_string(i));
  Node n = make(OpKind::gather_rows, a);
  n.value = Tensor(indices.size(), va.cols());
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy_n(va.data() + indices[r] * va.cols(), va.cols(), n.value.data() + r * va.cols());
  n.index = std::move(indices);
  return a.tape().push(std::move(n));
}

Var im2col3x3(Var image, std::size_t height, std::size_t width) {
  const Tensor& va = image.value();
  if (height == 0 || width == 0 || va.rows() == 0 || va.rows() % (height * width) != 0)
    shape_error("im2col3x3", va, "rows not a multiple of " + std::to_string(height * width));
  const std::size_t ch = va.cols();
  const std::size_t plane = height * width;
  Node n = make(OpKind::im2col3x3, image);
  n.p0 = height;
  n.p1 = width;
  n.value = Tensor(va.rows(), 9 * ch);
  for (std::size_t img = 0; img < va.rows() / plane; ++img)
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double* base = va.data() + img * plane * ch;
      double* dst = n.value.data() + (img * plane + y * width + x) * 9 * ch;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx, dst += ch) {
          const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(height) || xx >= static_cast<long>(width))
            continue;
          std::copy_n(base + (static_cast<std::size_t>(yy) * width + static_cast<std::size_t>(xx)) * ch,
                      ch, dst);
        }
    }
  return image.tape().push(std::move(n));
}

Var bilinear(Var grid, std::vector<BilinearTap> taps) {
  const Tensor& va = grid.value();
  for (const auto& t : taps)
    for (std::size_t k : t.index)
      if (k >= va.rows()) shape_error("bilinear", va, "tap index " + std::to_string(k));
  Node n = make(OpKind::bilinear, grid);
  const std::size_t cols = va.cols();
  n.value = Tensor(taps.size(), cols);
  for (std::size_t r = 0; r < taps.size(); ++r) {
    double* dst = n.value.data() + r * cols;
    for (int k = 0; k < 4; ++k) {
      const double w = taps[r].weight[k];
      if (w == 0.0) continue;
      const double* src = va.data() + taps[r].index[k] * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
    }
  }
  n.taps = std::move(taps);
  return grid.tape().push(std::move(n));
}

// ---------------------------------------------------------------------------
// Parameters

Param& ParamStore::add(const std::string& name, std::size_t rows, std::size_t cols, double fill) {
  return add(name, Param{rows, cols, std::vector<double>(rows * cols, fill)});
}

Param& ParamStore::add(const std::string& name, Param p) {
  if (p.data.size() != p.rows * p.cols)
    throw InvalidArgument("ParamStore: inconsistent shape for '" + name + "'");
  if (contains(name)) throw InvalidArgument("ParamStore: duplicate name '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(name);
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("ParamStore: no parameter '" + name + "'");
  return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("ParamStore: no parameter '" + name + "'");
  return params_[it->second];
}

void ParamStore::erase_prefix(std::string_view prefix) {
  std::vector<std::string> names;
  std::vector<Param> params;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (std::string_view(names_[i]).substr(0, prefix.size()) == prefix) continue;
    names.push_back(std::move(names_[i]));
    params.push_back(std::move(params_[i]));
  }
  names_ = std::move(names);
  params_ = std::move(params);
  index_.clear();
  for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.data.size();
  return n;
}

Tensor to_tensor(const Param& p) { return Tensor(p.rows, p.cols, p.data); }

Bindings::Bindings(Tape& tape, const ParamStore& store, bool requires_grad) {
  bind(tape, store, "", requires_grad);
}

void Bindings::bind(Tape& tape, const ParamStore& store, std::string_view prefix,
                    bool requires_grad) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& name = store.name(i);
    if (std::string_view(name).substr(0, prefix.size()) != prefix) continue;
    vars_[name] = tape.leaf(to_tensor(store.param(i)), requires_grad);
  }
}

Var Bindings::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw InvalidArgument("Bindings: parameter '" + name + "' not bound");
  return it->second;
}

// ---------------------------------------------------------------------------
// Finite differences

namespace {

double eval_loss(const LossFn& fn, const ParamStore& params, const std::string& name,
                 std::size_t index) {
  Tape tape;
  Bindings b(tape, params, false);
  Var loss = fn(tape, b);
  if (!loss.value().is_scalar())
    throw InvalidArgument("finite_diff_check: loss is not scalar");
  const double v = loss.value()[0];
  if (!std::isfinite(v))
    throw NumericError("finite_diff_check: non-finite loss at " + name + "[" +
                       std::to_string(index) + "]");
  return v;
}

}  // namespace

FdReport finite_diff_check(const LossFn& loss_fn, const ParamStore& params, double step, FdScheme scheme) {
  if (!(step > 0.0) || !std::isfinite(step))
    throw InvalidArgument("finite_diff_check: step must be positive and finite");

  std::vector<std::vector<double>> analytic(params.size());
  {
    Tape tape;
    Bindings b(tape, params, true);
    Var loss = loss_fn(tape, b);
    if (!std::isfinite(loss.value()[0]))
      throw NumericError("finite_diff_check: non-finite loss at base point");
    tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i)
      analytic[i] = b[params.name(i)].grad().values();
  }

  FdReport report;
  ParamStore probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    auto& data = probe.param(i).data;
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double orig = data[k];
      auto central = [&](double h) {
        data[k] = orig + h;
        const double up = eval_loss(loss_fn, probe, name, k);
        data[k] = orig - h;
        const double down = eval_loss(loss_fn, probe, name, k);
        data[k] = orig;
        return (up - down) / (2.0 * h);
      };
      const double fd = scheme == FdScheme::central ? central(step)
                                                    : (4.0 * central(0.5 * step) - central(step)) / 3.0;
      const double ad = analytic[i][k];
      const double denom = std::max({std::abs(fd), std::abs(ad), 1e-8});
      const double rel = std::abs(fd - ad) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = k;
        report.worst_ad = ad;
        report.worst_fd = fd;
      }
    }
  }
  return report;
}

}  // namespace mrvm::diff
