// Copyright 2026 The StylePrompt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Leaves are created with
// parameter() (trainable) or constant(); every operation below returns a
// fresh node whose value is computed eagerly. Nodes whose inputs carry no
// gradient are plain constants, so forward passes through frozen weights
// build no graph at all.
//
// Operands are viewed as matrices: a rank-1 tensor of length n is a 1×n row.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "styleprompt/tensor.hpp"

namespace styleprompt {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

}  // namespace detail

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const&;
  /// Rvalue overload copies so that `f().value()` never dangles.
  Tensor value() && { return static_cast<const Var&>(*this).value(); }
  /// Empty tensor when no gradient has reached this node.
  const Tensor& grad() const&;
  Tensor grad() && { return static_cast<const Var&>(*this).grad(); }
  bool requires_grad() const;
  bool defined() const noexcept { return static_cast<bool>(node_); }

  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t numel() const { return value().numel(); }
  double item() const { return value().item(); }

  /// Leaf-only mutators, used by optimizers and checkpoint loading.
  void set_requires_grad(bool on);
  void zero_grad();
  void assign(Tensor value);

  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }
  static Var from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

inline Var parameter(Tensor value) { return Var(std::move(value), true); }
inline Var constant(Tensor value) { return Var(std::move(value), false); }

/// Populates grad on every requires_grad node reachable from the scalar
/// loss. Leaf gradients accumulate across calls; call zero_grad() between
/// steps.
void backward(const Var& loss);

// --- linear algebra -------------------------------------------------------
Var matmul(const Var& a, const Var& b);
/// a · bᵀ
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

// --- elementwise, same shape ---------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

// --- broadcasting against a 1×n row or an m×1 column ----------------------
Var add_row(const Var& x, const Var& row);
Var sub_row(const Var& x, const Var& row);
Var mul_row(const Var& x, const Var& row);
Var div_row(const Var& x, const Var& row);
Var sub_col(const Var& x, const Var& col);
Var mul_col(const Var& x, const Var& col);
Var div_col(const Var& x, const Var& col);

// --- scalars --------------------------------------------------------------
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
Var neg(const Var& x);
/// x · s for a one-element Var s.
Var mul_scalar(const Var& x, const Var& s);

// --- unary ----------------------------------------------------------------
Var exp(const Var& x);
Var log(const Var& x);
/// Subgradient 0 at exactly zero input.
Var sqrt(const Var& x);
Var square(const Var& x);
Var abs(const Var& x);
/// max(x, lo); gradient passes only where x > lo.
Var clamp_min(const Var& x, double lo);
Var tanh(const Var& x);
Var gelu(const Var& x);
Var softplus(const Var& x);
Var reciprocal(const Var& x);

// --- reductions -----------------------------------------------------------
Var sum(const Var& x);
Var mean(const Var& x);
/// Reduce over rows (axis 0): m×n → 1×n.
Var sum_rows(const Var& x);
Var mean_rows(const Var& x);
/// Reduce over columns (axis 1): m×n → m×1.
Var sum_cols(const Var& x);
Var mean_cols(const Var& x);

// --- normalization --------------------------------------------------------
/// Max-subtracted softmax along axis 0 (per column) or 1 (per row).
Var softmax(const Var& x, int axis);
Var log_softmax(const Var& x, int axis);
/// Row softmax where entries with allowed[i*cols+j] == 0 get exactly zero
/// probability. Every row needs at least one allowed entry.
Var masked_softmax_rows(const Var& x, std::span<const std::uint8_t> allowed);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps);

// --- structure ------------------------------------------------------------
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var pick(const Var& x, std::size_t r, std::size_t c);
Var reshape(const Var& x, Shape shape);
Var detach(const Var& x);

// --- composites -----------------------------------------------------------
struct Moments {
  Var mean;
  Var std;
};

/// Mean and sqrt(population variance + epsilon) along axis (0 or 1).
Moments moments(const Var& x, int axis, double epsilon);

/// Each row divided by its L2 norm.
Var l2_normalize_rows(const Var& x);

/// Cosine similarity of two equal-length vectors, as a one-element Var.
Var cosine_similarity(const Var& a, const Var& b);

}  // namespace styleprompt
