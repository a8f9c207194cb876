// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mrvm/error.hpp"

/// Reverse-mode automatic differentiation over dense row-major matrices.
///
/// Every value is a 2-D array; vectors are 1xN rows unless an op says
/// otherwise. A Tape records nodes in creation order, which is already a
/// topological order, and backward() walks it in reverse.
namespace mrvm::diff {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row(std::initializer_list<double> values);
  static Tensor row(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  std::span<double> row_span(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  /// Same data, new shape; element count must match.
  void reshape(std::size_t rows, std::size_t cols);
  std::string shape_string() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class OpKind : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  matvec,
  matmul,
  relu,
  softplus,
  sigmoid,
  exp,
  log,
  sum,
  mean,
  l2norm,
  normalize,
  concat,
  slice,
  broadcast,
  dot,
  // Structural ops used by the rendering pipeline.
  scale,
  reshape,
  row_sum,
  group_sum,
  cumsum,
  replace_rows,
  gather_rows,
  im2col3x3,
  bilinear,
};

std::string_view op_name(OpKind op);

/// Rows with L2 norm at or below this are treated as degenerate by
/// normalize(): output and gradient are zero.
inline constexpr double kNormalizeEps = 1e-12;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  int id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }
  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Four-tap bilinear stencil into a flattened (rows = pixels) grid.
struct BilinearTap {
  std::size_t index[4];
  double weight[4];
};

struct Node {
  OpKind op = OpKind::leaf;
  int in0 = -1;
  int in1 = -1;
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  double factor = 0.0;
  std::size_t p0 = 0;
  std::size_t p1 = 0;
  std::size_t p2 = 0;
  std::vector<std::size_t> index;
  std::vector<BilinearTap> taps;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }
  /// Gradient of the last backward() root w.r.t. v (zeros if unreached).
  const Tensor& grad(Var v) const;
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }

  /// Accumulates d(root)/d(node) into every requires_grad node. root must be
  /// 1x1. Gradients from an earlier backward() are cleared first.
  void backward(Var root);

  // Recording primitive used by the op functions below.
  Var push(Node node);

 private:
  friend class Var;
  std::size_t check(Var v) const;
  void backward_node(Node& n);

  std::vector<Node> nodes_;
  mutable Tensor empty_grad_;
};

// Elementwise, equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// (m x n) * (n x 1 or 1 x n) -> (m x 1)
Var matvec(Var a, Var x);
Var matmul(Var a, Var b);
Var relu(Var a);
/// max(x,0) + log(1 + exp(-|x|)).
Var softplus(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
/// Sum of all entries -> 1x1.
Var sum(Var a);
Var mean(Var a);
/// Row-wise L2 norms -> (rows x 1).
Var l2norm(Var a);
/// Row-wise unit normalization; rows with norm <= kNormalizeEps map to 0.
Var normalize(Var a);
/// Column-wise concatenation of equal-row inputs.
Var concat(Var a, Var b);
/// Columns [begin, end).
Var slice(Var a, std::size_t begin, std::size_t end);
/// Expands a 1x1, 1xC or Rx1 input to rows x cols.
Var broadcast(Var a, std::size_t rows, std::size_t cols);
/// Row-wise dot product -> (rows x 1).
Var dot(Var a, Var b);

Var scale(Var a, double k);
Var reshape(Var a, std::size_t rows, std::size_t cols);
/// Sum over columns -> (rows x 1).
Var row_sum(Var a);
/// Sums consecutive blocks of `group` rows: (G*group x C) -> (G x C).
Var group_sum(Var a, std::size_t group);
/// Exclusive prefix sum along each row: y_j = sum_{k<j} x_k.
Var cumsum_exclusive(Var a);
/// Row i becomes `replacement` (1 x C) where flags[i] != 0.
Var replace_rows(Var a, Var replacement, const std::vector<std::uint8_t>& flags);
Var gather_rows(Var a, std::vector<std::size_t> indices);
/// 3x3 zero-padded patch extraction of one or more stacked (H*W x C)
/// images; columns are ordered (dy, dx, channel) with dy, dx in {-1, 0, 1}.
Var im2col3x3(Var image, std::size_t height, std::size_t width);
/// y_i = sum_k taps[i].weight[k] * grid[taps[i].index[k]].
Var bilinear(Var grid, std::vector<BilinearTap> taps);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Parameters

struct Param {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
};

/// Named parameter arrays in insertion order.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

  Param& add(const std::string& name, std::size_t rows, std::size_t cols,
             double fill = 0.0);
  Param& add(const std::string& name, Param p);
  bool contains(const std::string& name) const {
    return index_.count(name) != 0;
  }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  void erase_prefix(std::string_view prefix);

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Param& param(std::size_t i) { return params_[i]; }
  const Param& param(std::size_t i) const { return params_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t total_size() const;
  std::uint64_t rng_seed() const { return rng_seed_; }
  void set_rng_seed(std::uint64_t s) { rng_seed_ = s; }

 private:
  std::uint64_t rng_seed_;
  std::vector<std::string> names_;
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Tape leaves for a ParamStore, looked up by name.
class Bindings {
 public:
  Bindings() = default;
  Bindings(Tape& tape, const ParamStore& store, bool requires_grad = true);

  /// Binds `store` entries whose names start with `prefix`.
  void bind(Tape& tape, const ParamStore& store, std::string_view prefix,
            bool requires_grad);
  Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const {
    return vars_.count(name) != 0;
  }
  const std::unordered_map<std::string, Var>& vars() const { return vars_; }

 private:
  std::unordered_map<std::string, Var> vars_;
};

Tensor to_tensor(const Param& p);

// ---------------------------------------------------------------------------
// Finite-difference verification

using LossFn = std::function<Var(Tape&, const Bindings&)>;

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_ad = 0.0;
  double worst_fd = 0.0;
  std::size_t coords_checked = 0;
};

enum class FdScheme {
  central,
  /// Central differences at h and h/2 combined to cancel the h^2 term.
  richardson
};

/// Compares backward() against finite differences for every coordinate
/// of every parameter in `params`. Relative error per coordinate is
/// |fd - ad| / max(|fd|, |ad|, 1e-8).
FdReport finite_diff_check(const LossFn& loss_fn, const ParamStore& params,
                           double step, FdScheme scheme = FdScheme::central);

}  // namespace mrvm::diff
