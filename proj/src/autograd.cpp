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

#include "styleprompt/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "styleprompt/errors.hpp"
#include "styleprompt/kernels.hpp"

namespace styleprompt {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<detail::Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

const Tensor& Var::value() const& {
  require(defined(), ErrorKind::kContract, "use of an undefined Var");
  return node_->value;
}

const Tensor& Var::grad() const& {
  require(defined(), ErrorKind::kContract, "use of an undefined Var");
  return node_->grad;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

void Var::set_requires_grad(bool on) {
  require(defined() && !node_->backward, ErrorKind::kContract, "set_requires_grad on a non-leaf Var");
  node_->requires_grad = on;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

void Var::assign(Tensor value) {
  require(defined() && !node_->backward, ErrorKind::kContract, "assign on a non-leaf Var");
  require(value.shape() == node_->value.shape(), ErrorKind::kDimension,
          "assign shape mismatch " + shape_string(value.shape()) + " vs " + shape_string(node_->value.shape()));
  node_->value = std::move(value);
}

namespace {

Var make(Tensor value, std::initializer_list<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const auto& v : inputs) node->parents.push_back(v.node());
    node->backward = std::move(fn);
  }
  return Var::from_node(std::move(node));
}

Var make_n(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const auto& v : inputs) node->parents.push_back(v.node());
    node->backward = std::move(fn);
  }
  return Var::from_node(std::move(node));
}

// Gradient sink of an input, or nullptr when that input is frozen.
Tensor* sink(const NodePtr& n) { return n->requires_grad ? &n->grad_buffer() : nullptr; }

void same_shape(const Var& a, const Var& b, const char* op) {
  const auto& ta = a.value();
  const auto& tb = b.value();
  require(ta.rows() == tb.rows() && ta.cols() == tb.cols(), ErrorKind::kDimension,
          std::string(op) + ": shape mismatch " + shape_string(ta.shape()) + " vs " + shape_string(tb.shape()));
}

Shape mat_shape(std::size_t r, std::size_t c) { return Shape{r, c}; }

template <typename F, typename D>
Var unary(const Var& x, F f, D df_from_xy) {
  const auto& tx = x.value();
  Tensor y(tx.shape());
  for (std::size_t i = 0; i < tx.numel(); ++i) y[i] = f(tx[i]);
  auto xn = x.node();
  return make(std::move(y), {x}, [xn, df_from_xy](Node& self) {
    Tensor& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.numel(); ++i)
      gx[i] += self.grad[i] * df_from_xy(xn->value[i], self.value[i]);
  });
}

}  // namespace

void backward(const Var& loss) {
  require(loss.defined(), ErrorKind::kContract, "backward on an undefined Var");
  require(loss.numel() == 1, ErrorKind::kContract,
          "backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
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

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// --- linear algebra -------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  const auto& ta = a.value();
  const auto& tb = b.value();
  const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  require(tb.rows() == k, ErrorKind::kDimension,
          "matmul: inner dimensions differ: " + shape_string(ta.shape()) + " x " + shape_string(tb.shape()));
  Tensor c(mat_shape(m, n));
  kernels::active().gemm_nn(m, n, k, ta.data().data(), tb.data().data(), c.data().data(), false);
  auto an = a.node(), bn = b.node();
  return make(std::move(c), {a, b}, [an, bn, m, n, k](Node& self) {
    const auto& K = kernels::active();
    const double* g = self.grad.data().data();
    if (auto* da = sink(an)) K.gemm_nt(m, k, n, g, bn->value.data().data(), da->data().data(), true);
    if (auto* db = sink(bn)) K.gemm_tn(k, n, m, an->value.data().data(), g, db->data().data(), true);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const auto& ta = a.value();
  const auto& tb = b.value();
  const std::size_t m = ta.rows(), k = ta.cols(), n = tb.rows();
  require(tb.cols() == k, ErrorKind::kDimension,
          "matmul_nt: inner dimensions differ: " + shape_string(ta.shape()) + " x " + shape_string(tb.shape()) + "^T");
  Tensor c(mat_shape(m, n));
  kernels::active().gemm_nt(m, n, k, ta.data().data(), tb.data().data(), c.data().data(), false);
  auto an = a.node(), bn = b.node();
  return make(std::move(c), {a, b}, [an, bn, m, n, k](Node& self) {
    const auto& K = kernels::active();
    const double* g = self.grad.data().data();
    if (auto* da = sink(an)) K.gemm_nn(m, k, n, g, bn->value.data().data(), da->data().data(), true);
    if (auto* db = sink(bn)) K.gemm_tn(n, k, m, g, an->value.data().data(), db->data().data(), true);
  });
}

Var transpose(const Var& a) {
  const auto& ta = a.value();
  const std::size_t m = ta.rows(), n = ta.cols();
  Tensor t(mat_shape(n, m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = ta[i * n + j];
  auto an = a.node();
  return make(std::move(t), {a}, [an, m, n](Node& self) {
    Tensor& ga = an->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

// --- elementwise ----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] + b.value()[i];
  auto an = a.node(), bn = b.node();
  return make(std::move(y), {a, b}, [an, bn](Node& self) {
    if (auto* ga = sink(an))
      for (std::size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += self.grad[i];
    if (auto* gb = sink(bn))
      for (std::size_t i = 0; i < gb->numel(); ++i) (*gb)[i] += self.grad[i];
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] - b.value()[i];
  auto an = a.node(), bn = b.node();
  return make(std::move(y), {a, b}, [an, bn](Node& self) {
    if (auto* ga = sink(an))
      for (std::size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += self.grad[i];
    if (auto* gb = sink(bn))
      for (std::size_t i = 0; i < gb->numel(); ++i) (*gb)[i] -= self.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * b.value()[i];
  auto an = a.node(), bn = b.node();
  return make(std::move(y), {a, b}, [an, bn](Node& self) {
    if (auto* ga = sink(an))
      for (std::size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += self.grad[i] * bn->value[i];
    if (auto* gb = sink(bn))
      for (std::size_t i = 0; i < gb->numel(); ++i) (*gb)[i] += self.grad[i] * an->value[i];
  });
}

Var div(const Var& a, const Var& b) {
  same_shape(a, b, "div");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] / b.value()[i];
  auto an = a.node(), bn = b.node();
  return make(std::move(y), {a, b}, [an, bn](Node& self) {
    if (auto* ga = sink(an))
      for (std::size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += self.grad[i] / bn->value[i];
    if (auto* gb = sink(bn))
      for (std::size_t i = 0; i < gb->numel(); ++i) (*gb)[i] -= self.grad[i] * self.value[i] / bn->value[i];
  });
}

// --- broadcasting ---------------------------------------------------------

namespace {

enum class Bcast { kAdd, kSub, kMul, kDiv };

Var row_op(const Var& x, const Var& r, Bcast op, const char* name) {
  const auto& tx = x.value();
  const std::size_t m = tx.rows(), n = tx.cols();
  require(r.numel() == n, ErrorKind::kDimension,
          std::string(name) + ": row " + shape_string(r.shape()) + " does not broadcast over " + shape_string(tx.shape()));
  const auto& tr = r.value();
  Tensor y(tx.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = tx[i * n + j], b = tr[j];
      y[i * n + j] = op == Bcast::kAdd ? a + b : op == Bcast::kSub ? a - b : op == Bcast::kMul ? a * b : a / b;
    }
  auto xn = x.node(), rn = r.node();
  return make(std::move(y), {x, r}, [xn, rn, op, m, n](Node& self) {
    const auto& g = self.grad;
    Tensor* gx = sink(xn);
    Tensor* gr = sink(rn);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = i * n + j;
        const double gi = g[idx];
        switch (op) {
          case Bcast::kAdd:
            if (gx) (*gx)[idx] += gi;
            if (gr) (*gr)[j] += gi;
            break;
          case Bcast::kSub:
            if (gx) (*gx)[idx] += gi;
            if (gr) (*gr)[j] -= gi;
            break;
          case Bcast::kMul:
            if (gx) (*gx)[idx] += gi * rn->value[j];
            if (gr) (*gr)[j] += gi * xn->value[idx];
            break;
          case Bcast::kDiv:
            if (gx) (*gx)[idx] += gi / rn->value[j];
            if (gr) (*gr)[j] -= gi * self.value[idx] / rn->value[j];
            break;
        }
      }
  });
}

Var col_op(const Var& x, const Var& c, Bcast op, const char* name) {
  const auto& tx = x.value();
  const std::size_t m = tx.rows(), n = tx.cols();
  require(c.numel() == m, ErrorKind::kDimension,
          std::string(name) + ": column " + shape_string(c.shape()) + " does not broadcast over " +
              shape_string(tx.shape()));
  const auto& tc = c.value();
  Tensor y(tx.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = tx[i * n + j], b = tc[i];
      y[i * n + j] = op == Bcast::kAdd ? a + b : op == Bcast::kSub ? a - b : op == Bcast::kMul ? a * b : a / b;
    }
  auto xn = x.node(), cn = c.node();
  return make(std::move(y), {x, c}, [xn, cn, op, m, n](Node& self) {
    const auto& g = self.grad;
    Tensor* gx = sink(xn);
    Tensor* gc = sink(cn);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = i * n + j;
        const double gi = g[idx];
        switch (op) {
          case Bcast::kAdd:
            if (gx) (*gx)[idx] += gi;
            if (gc) (*gc)[i] += gi;
            break;
          case Bcast::kSub:
            if (gx) (*gx)[idx] += gi;
            if (gc) (*gc)[i] -= gi;
            break;
          case Bcast::kMul:
            if (gx) (*gx)[idx] += gi * cn->value[i];
            if (gc) (*gc)[i] += gi * xn->value[idx];
            break;
          case Bcast::kDiv:
            if (gx) (*gx)[idx] += gi / cn->value[i];
            if (gc) (*gc)[i] -= gi * self.value[idx] / cn->value[i];
            break;
        }
      }
  });
}

}  // namespace

Var add_row(const Var& x, const Var& row) { return row_op(x, row, Bcast::kAdd, "add_row"); }
Var sub_row(const Var& x, const Var& row) { return row_op(x, row, Bcast::kSub, "sub_row"); }
Var mul_row(const Var& x, const Var& row) { return row_op(x, row, Bcast::kMul, "mul_row"); }
Var div_row(const Var& x, const Var& row) { return row_op(x, row, Bcast::kDiv, "div_row"); }
Var sub_col(const Var& x, const Var& col) { return col_op(x, col, Bcast::kSub, "sub_col"); }
Var mul_col(const Var& x, const Var& col) { return col_op(x, col, Bcast::kMul, "mul_col"); }
Var div_col(const Var& x, const Var& col) { return col_op(x, col, Bcast::kDiv, "div_col"); }

// --- scalars --------------------------------------------------------------

Var scale(const Var& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& x) { return scale(x, -1.0); }

Var mul_scalar(const Var& x, const Var& s) {
  require(s.numel() == 1, ErrorKind::kDimension, "mul_scalar: factor must have one element, got " +
                                                     shape_string(s.shape()));
  const double sv = s.value()[0];
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = x.value()[i] * sv;
  auto xn = x.node(), sn = s.node();
  return make(std::move(y), {x, s}, [xn, sn](Node& self) {
    const double sv = sn->value[0];
    if (auto* gx = sink(xn))
      for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += self.grad[i] * sv;
    if (auto* gs = sink(sn)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.numel(); ++i) acc += self.grad[i] * xn->value[i];
      (*gs)[0] += acc;
    }
  });
}

// --- unary ----------------------------------------------------------------

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  for (double v : x.value().data())
    require(v > 0.0, ErrorKind::kNumericDomain, "log of non-positive value " + std::to_string(v));
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sqrt(const Var& x) {
  for (double v : x.value().data())
    require(v >= 0.0, ErrorKind::kNumericDomain, "sqrt of negative value " + std::to_string(v));
  return unary(x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var abs(const Var& x) {
  return unary(x, [](double v) { return std::abs(v); },
               [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var clamp_min(const Var& x, double lo) {
  return unary(x, [lo](double v) { return v > lo ? v : lo; }, [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Var tanh(const Var& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(const Var& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(kC * (v + kA * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      });
}

Var softplus(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Var reciprocal(const Var& x) {
  for (double v : x.value().data()) require(v != 0.0, ErrorKind::kNumericDomain, "reciprocal of zero");
  return unary(x, [](double v) { return 1.0 / v; }, [](double, double y) { return -y * y; });
}

// --- reductions -----------------------------------------------------------

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  auto xn = x.node();
  return make(Tensor::scalar(s), {x}, [xn](Node& self) {
    Tensor& gx = xn->grad_buffer();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Var sum_rows(const Var& x) {
  const auto& tx = x.value();
  const std::size_t m = tx.rows(), n = tx.cols();
  Tensor y(mat_shape(1, n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j] += tx[i * n + j];
  auto xn = x.node();
  return make(std::move(y), {x}, [xn, m, n](Node& self) {
    Tensor& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += self.grad[j];
  });
}

Var mean_rows(const Var& x) { return scale(sum_rows(x), 1.0 / static_cast<double>(x.rows())); }

Var sum_cols(const Var& x) {
  const auto& tx = x.value();
  const std::size_t m = tx.rows(), n = tx.cols();
  Tensor y(mat_shape(m, 1));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i] += tx[i * n + j];
  auto xn = x.node();
  return make(std::move(y), {x}, [xn, m, n](Node& self) {
    Tensor& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += self.grad[i];
  });
}

Var mean_cols(const Var& x) { return scale(sum_cols(x), 1.0 / static_cast<double>(x.cols())); }

// --- normalization --------------------------------------------------------

namespace {

struct Lines {
  std::size_t count, length, outer_stride, inner_stride;
};

Lines lines_for(const Tensor& t, int axis) {
  const std::size_t m = t.rows(), n = t.cols();
  require(axis == 0 || axis == 1, ErrorKind::kDimension, "axis must be 0 or 1, got " + std::to_string(axis));
  return axis == 1 ? Lines{m, n, n, 1} : Lines{n, m, 1, n};
}

}  // namespace

Var softmax(const Var& x, int axis) {
  const auto& tx = x.value();
  require(tx.all_finite(), ErrorKind::kNumericDomain, "softmax: non-finite input");
  const Lines L = lines_for(tx, axis);
  Tensor y(tx.shape());
  for (std::size_t l = 0; l < L.count; ++l) {
    const std::size_t base = l * L.outer_stride;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < L.length; ++i) mx = std::max(mx, tx[base + i * L.inner_stride]);
    double s = 0.0;
    for (std::size_t i = 0; i < L.length; ++i) {
      const double e = std::exp(tx[base + i * L.inner_stride] - mx);
      y[base + i * L.inner_stride] = e;
      s += e;
    }
    for (std::size_t i = 0; i < L.length; ++i) y[base + i * L.inner_stride] /= s;
  }
  auto xn = x.node();
  return make(std::move(y), {x}, [xn, L](Node& self) {
    Tensor& gx = xn->grad_buffer();
    for (std::size_t l = 0; l < L.count; ++l) {
      const std::size_t base = l * L.outer_stride;
      double dotp = 0.0;
      for (std::size_t i = 0; i < L.length; ++i) {
        const std::size_t idx = base + i * L.inner_stride;
        dotp += self.grad[idx] * self.value[idx];
      }
      for (std::size_t i = 0; i < L.length; ++i) {
        const std::size_t idx = base + i * L.inner_stride;
        gx[idx] += self.value[idx] * (self.grad[idx] - dotp);
      }
    }
  });
}

Var log_softmax(const Var& x, int axis) {
  const auto& tx = x.value();
  require(tx.all_finite(), ErrorKind::kNumericDomain, "log_softmax: non-finite input");
  const Lines L = lines_for(tx, axis);
  Tensor y(tx.shape());
  for (std::size_t l = 0; l < L.count; ++l) {
    const std::size_t base = l * L.outer_stride;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < L.length; ++i) mx = std::max(mx, tx[base + i * L.inner_stride]);
    double s = 0.0;
    for (std::size_t i = 0; i < L.length; ++i) s += std::exp(tx[base + i * L.inner_stride] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t i = 0; i < L.length; ++i) y[base + i * L.inner_stride] = tx[base + i * L.inner_stride] - lse;
  }
  auto xn = x.node();
  return make(std::move(y), {x}, [xn, L](Node& self) {
    Tensor& gx = xn->grad_buffer();
    for (std::size_t l = 0; l < L.count; ++l) {
      const std::size_t base = l * L.outer_stride;
      double gsum = 0.0;
      for (std::size_t i = 0; i < L.length; ++i) gsum += self.grad[base + i * L.inner_stride];
      for (std::size_t i = 0; i < L.length; ++i) {
        const std::size_t idx = base + i * L.inner_stride;
        gx[idx] += self.grad[idx] - std::exp(self.value[idx]) * gsum;
      }
    }
  });
}

Var masked_softmax_rows(const Var& x, std::span<const std::uint8_t> allowed) {
  const auto& tx = x.value();
  const std::size_t m = tx.rows(), n = tx.cols();
  require(allowed.size() == m * n, ErrorKind::kDimension, "masked_softmax_rows: mask size mismatch");
  require(tx.all_finite(), ErrorKind::kNumericDomain, "masked_softmax_rows: non-finite input");
  Tensor y(tx.shape());
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (allowed[i * n + j]) mx = std::max(mx, tx[i * n + j]);
    require(std::isfinite(mx), ErrorKind::kContract, "masked_softmax_rows: row " + std::to_string(i) + " fully masked");
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = allowed[i * n + j] ? std::exp(tx[i * n + j] - mx) : 0.0;
      y[i * n + j] = e;
      s += e;
    }
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= s;
  }
  auto xn = x.node();
  return make(std::move(y), {x}, [xn, m, n](Node& self) {
    Tensor& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      double dotp = 0.0;
      for (std::size_t j = 0; j < n; ++j) dotp += self.grad[i * n + j] * self.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += self.value[i * n + j] * (self.grad[i * n + j] - dotp);
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const auto& tx = x.value();
  const std::size_t m = tx.rows(), n = tx.cols();
  require(gamma.numel() == n && beta.numel() == n, ErrorKind::kDimension,
          "layer_norm_rows: affine parameters must have " + std::to_string(n) + " entries");
  Tensor y(tx.shape());
  auto xhat = std::make_shared<Tensor>(tx.shape());
  auto rstd = std::make_shared<std::vector<double>>(m);
  const auto& g = gamma.value();
  const auto& b = beta.value();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += tx[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = tx[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double r = 1.0 / std::sqrt(var + eps);
    (*rstd)[i] = r;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (tx[i * n + j] - mu) * r;
      (*xhat)[i * n + j] = h;
      y[i * n + j] = h * g[j] + b[j];
    }
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make(std::move(y), {x, gamma, beta}, [xn, gn, bn, xhat, rstd, m, n](Node& self) {
    Tensor* gx = sink(xn);
    Tensor* gg = sink(gn);
    Tensor* gb = sink(bn);
    std::vector<double> dh(n);
    for (std::size_t i = 0; i < m; ++i) {
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = i * n + j;
        const double gi = self.grad[idx];
        if (gg) (*gg)[j] += gi * (*xhat)[idx];
        if (gb) (*gb)[j] += gi;
        dh[j] = gi * gn->value[j];
        mean_dh += dh[j];
        mean_dh_h += dh[j] * (*xhat)[idx];
      }
      if (!gx) continue;
      mean_dh /= static_cast<double>(n);
      mean_dh_h /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = i * n + j;
        (*gx)[idx] += (*rstd)[i] * (dh[j] - mean_dh - (*xhat)[idx] * mean_dh_h);
      }
    }
  });
}

// --- structure ------------------------------------------------------------

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::kDimension, "concat_rows of nothing");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    require(p.cols() == n, ErrorKind::kDimension,
            "concat_rows: column mismatch " + shape_string(p.shape()) + " vs " + std::to_string(n));
    m += p.rows();
  }
  Tensor y(mat_shape(m, n));
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), y.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.numel();
  }
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_n(std::move(y), parts, [nodes](Node& self) {
    std::size_t off = 0;
    for (const auto& nd : nodes) {
      const std::size_t len = nd->value.numel();
      if (auto* g = sink(nd))
        for (std::size_t i = 0; i < len; ++i) (*g)[i] += self.grad[off + i];
      off += len;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::kDimension, "concat_cols of nothing");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require(p.rows() == m, ErrorKind::kDimension,
            "concat_cols: row mismatch " + shape_string(p.shape()) + " vs " + std::to_string(m));
    n += p.cols();
  }
  Tensor y(mat_shape(m, n));
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < pc; ++j) y[i * n + c0 + j] = p.value()[i * pc + j];
    c0 += pc;
  }
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_n(std::move(y), parts, [nodes, m, n](Node& self) {
    std::size_t c0 = 0;
    for (const auto& nd : nodes) {
      const std::size_t pc = nd->value.cols();
      if (auto* g = sink(nd))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < pc; ++j) (*g)[i * pc + j] += self.grad[i * n + c0 + j];
      c0 += pc;
    }
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  const auto& tx = x.value();
  const std::size_t n = tx.cols();
  require(begin < end && end <= tx.rows(), ErrorKind::kDimension,
          "slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of " + shape_string(tx.shape()));
  Tensor y(mat_shape(end - begin, n),
           std::vector<double>(tx.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                               tx.data().begin() + static_cast<std::ptrdiff_t>(end * n)));
  auto xn = x.node();
  return make(std::move(y), {x}, [xn, begin, n](Node& self) {
    Tensor& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) gx[begin * n + i] += self.grad[i];
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  const auto& tx = x.value();
  const std::size_t m = tx.rows(), n = tx.cols();
  require(begin < end && end <= n, ErrorKind::kDimension,
          "slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of " + shape_string(tx.shape()));
  const std::size_t w = end - begin;
  Tensor y(mat_shape(m, w));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) y[i * w + j] = tx[i * n + begin + j];
  auto xn = x.node();
  return make(std::move(y), {x}, [xn, begin, m, n, w](Node& self) {
    Tensor& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += self.grad[i * w + j];
  });
}

Var pick(const Var& x, std::size_t r, std::size_t c) {
  const auto& tx = x.value();
  require(r < tx.rows() && c < tx.cols(), ErrorKind::kDimension,
          "pick (" + std::to_string(r) + ", " + std::to_string(c) + ") out of " + shape_string(tx.shape()));
  const std::size_t idx = r * tx.cols() + c;
  auto xn = x.node();
  return make(Tensor::scalar(tx[idx]), {x}, [xn, idx](Node& self) { xn->grad_buffer()[idx] += self.grad[0]; });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  auto xn = x.node();
  return make(std::move(y), {x}, [xn](Node& self) {
    Tensor& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i];
  });
}

Var detach(const Var& x) { return constant(x.value()); }

// --- composites -----------------------------------------------------------

Moments moments(const Var& x, int axis, double epsilon) {
  require(epsilon >= 0.0, ErrorKind::kContract, "moments: epsilon must be non-negative");
  require(axis == 0 || axis == 1, ErrorKind::kDimension, "moments: axis must be 0 or 1");
  if (axis == 0) {
    Var mu = mean_rows(x);
    Var var = mean_rows(square(sub_row(x, mu)));
    return {mu, sqrt(add_scalar(var, epsilon))};
  }
  Var mu = mean_cols(x);
  Var var = mean_cols(square(sub_col(x, mu)));
  return {mu, sqrt(add_scalar(var, epsilon))};
}

Var l2_normalize_rows(const Var& x) {
  Var norm = sqrt(sum_cols(square(x)));
  for (double v : norm.value().data())
    require(v > 0.0, ErrorKind::kNumericDomain, "l2_normalize_rows: zero-norm row");
  return div_col(x, norm);
}

Var cosine_similarity(const Var& a, const Var& b) {
  require(a.numel() == b.numel(), ErrorKind::kDimension,
          "cosine_similarity: length mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Var ar = reshape(a, {1, a.numel()});
  Var br = reshape(b, {1, b.numel()});
  Var na = sqrt(sum(square(ar)));
  Var nb = sqrt(sum(square(br)));
  require(na.item() > 0.0 && nb.item() > 0.0, ErrorKind::kNumericDomain, "cosine_similarity: zero-norm input");
  return div(div(sum(mul(ar, br)), na), nb);
}

}  // namespace styleprompt
