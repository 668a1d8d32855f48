#pragma once

// Dense arrays and a tape-based reverse-mode differentiator.
//
// Parameters live in DiffArray objects outside any tape. A forward pass binds
// them to a Tape with Tape::param(), records primitive ops, and a single call
// to Tape::backward() replays the record in reverse. Every op output is
// checked for NaN/Inf at record time.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cam/error.hpp"

namespace cam {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// A dense row-major array with a gradient buffer of the same size.
///
/// `grad` is written by Tape::backward() for tapes that bound this array via
/// Tape::param(). It is logically an accumulator, not part of the value, so
/// it stays writable through const references. Tapes that share a parameter
/// must not run backward concurrently.
struct DiffArray {
  Shape shape;
  std::vector<double> values;
  mutable std::vector<double> grad;

  DiffArray() = default;
  explicit DiffArray(Shape s)
      : shape(std::move(s)),
        values(shape_size(shape), 0.0),
        grad(values.size(), 0.0) {}
  DiffArray(Shape s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)), grad(values.size(), 0.0) {
    if (values.size() != shape_size(shape))
      fail(ErrorCode::ShapeMismatch,
           "DiffArray: " + std::to_string(values.size()) +
               " values for shape " + shape_string(shape));
  }

  static DiffArray vector(std::size_t n) { return DiffArray(Shape{n}); }
  static DiffArray matrix(std::size_t rows, std::size_t cols) {
    return DiffArray(Shape{rows, cols});
  }

  std::size_t size() const noexcept { return values.size(); }
  std::size_t rows() const noexcept { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const noexcept {
    return shape.size() < 2 ? 1 : shape[1];
  }

  void zero_grad() const { std::fill(grad.begin(), grad.end(), 0.0); }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return std::isfinite(v); });
  }

  /// Throws NonFinite naming `what` if any value is NaN or Inf, and
  /// ShapeMismatch if the buffers disagree with the shape.
  void validate(const std::string& what) const {
    const std::size_t n = shape_size(shape);
    if (values.size() != n || grad.size() != n)
      fail(ErrorCode::ShapeMismatch,
           what + ": buffer size does not match shape " + shape_string(shape));
    if (!all_finite()) fail(ErrorCode::NonFinite, what + ": non-finite value");
  }
};

/// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
  static constexpr std::uint32_t kNone = UINT32_MAX;
  std::uint32_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

enum class Elementwise { Sigmoid, Tanh, Add, Mul, Sub };

template <class Real>
Real stable_sigmoid(Real x) {
  if (x >= 0) return Real{1} / (Real{1} + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real{1} + e);
}

template <class Real>
class BasicTape {
 public:
  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;
  BasicTape(BasicTape&&) = default;
  BasicTape& operator=(BasicTape&&) = default;

  // --- leaves -------------------------------------------------------------

  /// Binds a parameter. Binding the same array twice returns the same node.
  Var param(const DiffArray& p) {
    for (const auto& [array, id] : bindings_)
      if (array == &p) return Var{id};
    Var v = alloc(p.rows(), p.cols());
    std::copy(p.values.begin(), p.values.end(), values_.begin() + node(v).offset);
    bindings_.emplace_back(&p, v.id);
    return v;
  }

  Var constant(std::span<const double> v) { return constant(v, v.size(), 1); }

  Var constant(std::span<const double> v, std::size_t rows, std::size_t cols) {
    if (v.size() != rows * cols)
      fail(ErrorCode::ShapeMismatch, "constant: size does not match shape");
    Var out = alloc(rows, cols);
    std::copy(v.begin(), v.end(), values_.begin() + node(out).offset);
    check_finite(out, "constant");
    return out;
  }

  Var scalar(double x) { return constant(std::span<const double>(&x, 1)); }

  Var zeros(std::size_t n) { return alloc(n, 1); }

  // --- inspection ---------------------------------------------------------

  std::span<const Real> value(Var v) const {
    const Node& n = node(v);
    return {values_.data() + n.offset, n.size()};
  }
  Real scalar_value(Var v) const { return value(v)[0]; }
  std::span<const Real> gradient(Var v) const {
    const Node& n = node(v);
    return {grads_.data() + n.offset, n.size()};
  }
  /// Gradient of a bound parameter, or an empty span if `p` was never bound.
  std::span<const Real> gradient(const DiffArray& p) const {
    for (const auto& [array, id] : bindings_)
      if (array == &p) return gradient(Var{id});
    return {};
  }
  std::size_t size(Var v) const { return node(v).size(); }
  std::size_t rows(Var v) const { return node(v).rows; }
  std::size_t cols(Var v) const { return node(v).cols; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t op_count() const noexcept { return ops_.size(); }
  bool consumed() const noexcept { return consumed_; }

  /// Clears all nodes, ops and bindings so the tape can be reused.
  void reset() {
    values_.clear();
    grads_.clear();
    nodes_.clear();
    ops_.clear();
    lists_.clear();
    bindings_.clear();
    consumed_ = false;
  }

  // --- primitive ops ------------------------------------------------------

  Var sigmoid(Var a) {
    Var out = alloc_like(a);
    Real* y = mut_value(out);
    const Real* x = value_ptr(a);
    for (std::size_t i = 0, n = size(a); i < n; ++i) y[i] = stable_sigmoid<Real>(x[i]);
    return record(OpKind::Sigmoid, out, a);
  }

  Var tanh(Var a) {
    Var out = alloc_like(a);
    Real* y = mut_value(out);
    const Real* x = value_ptr(a);
    for (std::size_t i = 0, n = size(a); i < n; ++i) y[i] = std::tanh(x[i]);
    return record(OpKind::Tanh, out, a);
  }

  Var add(Var a, Var b) { return binary(OpKind::Add, a, b); }
  Var sub(Var a, Var b) { return binary(OpKind::Sub, a, b); }
  Var mul(Var a, Var b) { return binary(OpKind::Mul, a, b); }

  /// Matrix (rows x cols) times vector (cols).
  Var matvec(Var w, Var x) {
    const Node& wn = node(w);
    const std::size_t m = wn.rows, n = wn.cols;
    if (size(x) != n)
      fail(ErrorCode::ShapeMismatch,
           "matvec: matrix " + std::to_string(m) + "x" + std::to_string(n) +
               " times vector of length " + std::to_string(size(x)));
    Var out = alloc(m, 1);
    Real* y = mut_value(out);
    const Real* W = value_ptr(w);
    const Real* xv = value_ptr(x);
    for (std::size_t i = 0; i < m; ++i) {
      Real acc = 0;
      const Real* row = W + i * n;
      for (std::size_t j = 0; j < n; ++j) acc += row[j] * xv[j];
      y[i] = acc;
    }
    return record(OpKind::MatVec, out, w, x);
  }

  /// Inner product of two equal-length vectors; returns a scalar.
  Var dot(Var a, Var b) {
    same_size(a, b, "dot");
    Var out = alloc(1, 1);
    const Real* x = value_ptr(a);
    const Real* y = value_ptr(b);
    Real acc = 0;
    for (std::size_t i = 0, n = size(a); i < n; ++i) acc += x[i] * y[i];
    *mut_value(out) = acc;
    return record(OpKind::Dot, out, a, b);
  }

  /// Vector times a scalar node.
  Var scale(Var a, Var s) {
    if (size(s) != 1) fail(ErrorCode::NotScalar, "scale: factor is not a scalar");
    Var out = alloc_like(a);
    Real* y = mut_value(out);
    const Real* x = value_ptr(a);
    const Real k = value_ptr(s)[0];
    for (std::size_t i = 0, n = size(a); i < n; ++i) y[i] = k * x[i];
    return record(OpKind::Scale, out, a, s);
  }

  /// alpha * a + beta * b with constant coefficients.
  Var axpby(double alpha, Var a, double beta, Var b) {
    same_size(a, b, "axpby");
    Var out = alloc_like(a);
    Real* y = mut_value(out);
    const Real* x = value_ptr(a);
    const Real* z = value_ptr(b);
    for (std::size_t i = 0, n = size(a); i < n; ++i) y[i] = static_cast<Real>(alpha) * x[i] + static_cast<Real>(beta) * z[i];
    Op& op = push_op(OpKind::Axpby, out, a, b);
    op.c0 = static_cast<Real>(alpha);
    op.c1 = static_cast<Real>(beta);
    return finish(out, "axpby");
  }

  /// Softmax over all entries, computed with max subtraction.
  Var softmax(Var a) {
    const std::size_t n = size(a);
    if (n == 0) fail(ErrorCode::EmptyInput, "softmax: empty input");
    Var out = alloc_like(a);
    Real* y = mut_value(out);
    const Real* x = value_ptr(a);
    const Real mx = *std::max_element(x, x + n);
    Real total = 0;
    for (std::size_t i = 0; i < n; ++i) total += (y[i] = std::exp(x[i] - mx));
    for (std::size_t i = 0; i < n; ++i) y[i] /= total;
    return record(OpKind::Softmax, out, a);
  }

  /// Packs scalar nodes into one vector.
  Var stack(std::span<const Var> scalars) {
    if (scalars.empty()) fail(ErrorCode::EmptyInput, "stack: no inputs");
    Var out = alloc(scalars.size(), 1);
    const auto first = static_cast<std::uint32_t>(lists_.size());
    for (std::size_t t = 0; t < scalars.size(); ++t) {
      if (size(scalars[t]) != 1) fail(ErrorCode::NotScalar, "stack: input is not a scalar");
      lists_.push_back(scalars[t].id);
      values_[node(out).offset + t] = value_ptr(scalars[t])[0];
    }
    Op& op = push_op(OpKind::Stack, out, Var{}, Var{});
    op.list_begin = first;
    op.list_size = static_cast<std::uint32_t>(scalars.size());
    return finish(out, "stack");
  }

  /// sum_t weights[t] * items[t], where `weights` is a vector node with one
  /// entry per item.
  Var weighted_sum(std::span<const Var> items, Var weights) {
    if (items.empty()) fail(ErrorCode::EmptyInput, "weighted_sum: no inputs");
    if (size(weights) != items.size())
      fail(ErrorCode::ShapeMismatch,
           "weighted_sum: " + std::to_string(items.size()) + " items but " +
               std::to_string(size(weights)) + " weights");
    const std::size_t n = size(items[0]);
    Var out = alloc(n, 1);
    const auto first = static_cast<std::uint32_t>(lists_.size());
    for (std::size_t t = 0; t < items.size(); ++t) {
      if (size(items[t]) != n)
        fail(ErrorCode::ShapeMismatch, "weighted_sum: items differ in length");
      lists_.push_back(items[t].id);
      const Real z = value_ptr(weights)[t];
      const Real* h = value_ptr(items[t]);
      Real* y = mut_value(out);
      for (std::size_t k = 0; k < n; ++k) y[k] += z * h[k];
    }
    Op& op = push_op(OpKind::WeightedSum, out, weights, Var{});
    op.list_begin = first;
    op.list_size = static_cast<std::uint32_t>(items.size());
    return finish(out, "weighted_sum");
  }

  Var sum(Var a) {
    Var out = alloc(1, 1);
    const Real* x = value_ptr(a);
    *mut_value(out) = std::accumulate(x, x + size(a), Real{0});
    return record(OpKind::Sum, out, a);
  }

  /// Row-major flattening of the outer product a b^T.
  Var outer(Var a, Var b) {
    const std::size_t m = size(a), n = size(b);
    Var out = alloc(m * n, 1);
    Real* y = mut_value(out);
    const Real* x = value_ptr(a);
    const Real* z = value_ptr(b);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[i] * z[j];
    return record(OpKind::Outer, out, a, b);
  }

  /// -log softmax(logits)[label], via log-sum-exp.
  Var cross_entropy(Var logits, std::size_t label) {
    const std::size_t n = size(logits);
    if (label >= n)
      fail(ErrorCode::LabelOutOfRange,
           "cross_entropy: label " + std::to_string(label) + " with " +
               std::to_string(n) + " classes");
    Var out = alloc(1, 1);
    const Real* x = value_ptr(logits);
    const Real mx = *std::max_element(x, x + n);
    Real total = 0;
    for (std::size_t i = 0; i < n; ++i) total += std::exp(x[i] - mx);
    *mut_value(out) = mx + std::log(total) - x[label];
    Op& op = push_op(OpKind::CrossEntropy, out, logits, Var{});
    op.label = static_cast<std::uint32_t>(label);
    return finish(out, "cross_entropy");
  }

  // --- reverse pass -------------------------------------------------------

  /// Replays the tape in reverse from a scalar `loss`, then adds each bound
  /// parameter's gradient into its DiffArray::grad unless `write_back` is
  /// false. Parameters bound but not on the path receive zero.
  void backward(Var loss, bool write_back = true) {
    if (consumed_) fail(ErrorCode::TapeConsumed, "backward: tape already consumed");
    if (size(loss) != 1) fail(ErrorCode::NotScalar, "backward: loss is not a scalar");
    consumed_ = true;
    std::fill(grads_.begin(), grads_.end(), Real{0});
    grads_[node(loss).offset] = Real{1};
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) backprop(*it);
    if (!write_back) return;
    for (const auto& [array, id] : bindings_) {
      const Real* g = grads_.data() + nodes_[id].offset;
      for (std::size_t i = 0; i < array->grad.size(); ++i)
        array->grad[i] += static_cast<double>(g[i]);
    }
  }

 private:
  enum class OpKind : std::uint8_t {
    Sigmoid, Tanh, Add, Sub, Mul, MatVec, Dot, Scale, Axpby, Softmax, Stack,
    WeightedSum, Sum, Outer, CrossEntropy,
  };

  struct Node {
    std::size_t offset;
    std::uint32_t rows, cols;
    std::size_t size() const noexcept { return std::size_t{rows} * cols; }
  };

  struct Op {
    OpKind kind;
    std::uint32_t out, a, b;
    std::uint32_t list_begin = 0, list_size = 0, label = 0;
    Real c0 = 0, c1 = 0;
  };

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) fail(ErrorCode::InvalidArgument, "tape: unknown node");
    return nodes_[v.id];
  }

  Var alloc(std::size_t rows, std::size_t cols) {
    if (consumed_) fail(ErrorCode::TapeConsumed, "tape: recording after backward");
    Node n{values_.size(), static_cast<std::uint32_t>(rows),
           static_cast<std::uint32_t>(cols)};
    values_.resize(values_.size() + n.size(), Real{0});
    grads_.resize(values_.size(), Real{0});
    nodes_.push_back(n);
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Var alloc_like(Var a) {
    const Node n = node(a);
    return alloc(n.rows, n.cols);
  }

  const Real* value_ptr(Var v) const { return values_.data() + node(v).offset; }
  Real* mut_value(Var v) { return values_.data() + nodes_[v.id].offset; }

  void same_size(Var a, Var b, const char* what) const {
    if (size(a) != size(b))
      fail(ErrorCode::ShapeMismatch, std::string(what) + ": operand sizes " +
                                         std::to_string(size(a)) + " and " +
                                         std::to_string(size(b)));
  }

  Var binary(OpKind kind, Var a, Var b) {
    same_size(a, b, "elementwise");
    Var out = alloc_like(a);
    Real* y = mut_value(out);
    const Real* x = value_ptr(a);
    const Real* z = value_ptr(b);
    const std::size_t n = size(a);
    switch (kind) {
      case OpKind::Add: for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + z[i]; break;
      case OpKind::Sub: for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - z[i]; break;
      default:          for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * z[i]; break;
    }
    return record(kind, out, a, b);
  }

  Op& push_op(OpKind kind, Var out, Var a, Var b) {
    ops_.push_back(Op{kind, out.id, a.id, b.id});
    return ops_.back();
  }

  Var record(OpKind kind, Var out, Var a, Var b = {}) {
    push_op(kind, out, a, b);
    return finish(out, "op");
  }

  void check_finite(Var v, const char* what) const {
    const Real* x = value_ptr(v);
    for (std::size_t i = 0, n = size(v); i < n; ++i)
      if (!std::isfinite(x[i]))
        fail(ErrorCode::NonFinite, std::string(what) + ": non-finite output");
  }

  Var finish(Var out, const char* what) {
    check_finite(out, what);
    return out;
  }

  void backprop(const Op& op) {
    const Node& on = nodes_[op.out];
    const Real* g = grads_.data() + on.offset;
    const Real* y = values_.data() + on.offset;
    const std::size_t n = on.size();
    auto grad_of = [&](std::uint32_t id) { return grads_.data() + nodes_[id].offset; };
    auto value_of = [&](std::uint32_t id) { return values_.data() + nodes_[id].offset; };

    switch (op.kind) {
      case OpKind::Sigmoid: {
        Real* ga = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i] * (Real{1} - y[i]);
        break;
      }
      case OpKind::Tanh: {
        Real* ga = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (Real{1} - y[i] * y[i]);
        break;
      }
      case OpKind::Add: {
        Real* ga = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        Real* gb = grad_of(op.b);
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        break;
      }
      case OpKind::Sub: {
        Real* ga = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        Real* gb = grad_of(op.b);
        for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        break;
      }
      case OpKind::Mul: {
        const Real* a = value_of(op.a);
        const Real* b = value_of(op.b);
        Real* ga = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * b[i];
        Real* gb = grad_of(op.b);
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * a[i];
        break;
      }
      case OpKind::MatVec: {
        const Node& wn = nodes_[op.a];
        const std::size_t m = wn.rows, k = wn.cols;
        const Real* W = value_of(op.a);
        const Real* x = value_of(op.b);
        Real* gW = grad_of(op.a);
        Real* gx = grad_of(op.b);
        for (std::size_t i = 0; i < m; ++i) {
          const Real gi = g[i];
          Real* gw_row = gW + i * k;
          const Real* w_row = W + i * k;
          for (std::size_t j = 0; j < k; ++j) {
            gw_row[j] += gi * x[j];
            gx[j] += gi * w_row[j];
          }
        }
        break;
      }
      case OpKind::Dot: {
        const std::size_t k = nodes_[op.a].size();
        const Real* a = value_of(op.a);
        const Real* b = value_of(op.b);
        Real* ga = grad_of(op.a);
        for (std::size_t i = 0; i < k; ++i) ga[i] += g[0] * b[i];
        Real* gb = grad_of(op.b);
        for (std::size_t i = 0; i < k; ++i) gb[i] += g[0] * a[i];
        break;
      }
      case OpKind::Scale: {
        const Real* a = value_of(op.a);
        const Real s = value_of(op.b)[0];
        Real* ga = grad_of(op.a);
        Real gs = 0;
        for (std::size_t i = 0; i < n; ++i) {
          ga[i] += g[i] * s;
          gs += g[i] * a[i];
        }
        grad_of(op.b)[0] += gs;
        break;
      }
      case OpKind::Axpby: {
        Real* ga = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += op.c0 * g[i];
        Real* gb = grad_of(op.b);
        for (std::size_t i = 0; i < n; ++i) gb[i] += op.c1 * g[i];
        break;
      }
      case OpKind::Softmax: {
        Real inner = 0;
        for (std::size_t i = 0; i < n; ++i) inner += g[i] * y[i];
        Real* ga = grad_of(op.a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += y[i] * (g[i] - inner);
        break;
      }
      case OpKind::Stack: {
        for (std::uint32_t t = 0; t < op.list_size; ++t)
          grad_of(lists_[op.list_begin + t])[0] += g[t];
        break;
      }
      case OpKind::WeightedSum: {
        const Real* z = value_of(op.a);
        Real* gz = grad_of(op.a);
        for (std::uint32_t t = 0; t < op.list_size; ++t) {
          const std::uint32_t item = lists_[op.list_begin + t];
          const Real* h = value_of(item);
          Real* gh = grad_of(item);
          Real acc = 0;
          for (std::size_t k = 0; k < n; ++k) {
            gh[k] += z[t] * g[k];
            acc += h[k] * g[k];
          }
          gz[t] += acc;
        }
        break;
      }
      case OpKind::Sum: {
        Real* ga = grad_of(op.a);
        for (std::size_t i = 0, k = nodes_[op.a].size(); i < k; ++i) ga[i] += g[0];
        break;
      }
      case OpKind::Outer: {
        const std::size_t m = nodes_[op.a].size(), k = nodes_[op.b].size();
        const Real* a = value_of(op.a);
        const Real* b = value_of(op.b);
        Real* ga = grad_of(op.a);
        Real* gb = grad_of(op.b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            ga[i] += g[i * k + j] * b[j];
            gb[j] += g[i * k + j] * a[i];
          }
        break;
      }
      case OpKind::CrossEntropy: {
        const std::size_t k = nodes_[op.a].size();
        const Real* x = value_of(op.a);
        Real* ga = grad_of(op.a);
        const Real mx = *std::max_element(x, x + k);
        Real total = 0;
        for (std::size_t i = 0; i < k; ++i) total += std::exp(x[i] - mx);
        for (std::size_t i = 0; i < k; ++i) {
          const Real p = std::exp(x[i] - mx) / total;
          ga[i] += g[0] * (p - (i == op.label ? Real{1} : Real{0}));
        }
        break;
      }
    }
  }

  std::vector<Real> values_;
  std::vector<Real> grads_;
  std::vector<Node> nodes_;
  std::vector<Op> ops_;
  std::vector<std::uint32_t> lists_;
  std::vector<std::pair<const DiffArray*, std::uint32_t>> bindings_;
  bool consumed_ = false;
};

using Tape = BasicTape<double>;

/// Dispatches one of the five pointwise kinds; `b` is ignored for unary ones.
template <class Real>
Var elementwise(BasicTape<Real>& tape, Elementwise kind, Var a, Var b = {}) {
  switch (kind) {
    case Elementwise::Sigmoid: return tape.sigmoid(a);
    case Elementwise::Tanh: return tape.tanh(a);
    case Elementwise::Add: return tape.add(a, b);
    case Elementwise::Mul: return tape.mul(a, b);
    case Elementwise::Sub: return tape.sub(a, b);
  }
  fail(ErrorCode::InvalidArgument, "elementwise: unknown kind");
}

/// Extended precision used by the finite-difference oracle.
using PreciseTape = BasicTape<long double>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t worst_param = 0;  // index into the params span
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

template <class Real, class Builder>
Real evaluate_loss(const Builder& build) {
  thread_local BasicTape<Real> tape;
  tape.reset();
  Var loss = build(tape);
  if (tape.size(loss) != 1) fail(ErrorCode::NotScalar, "loss is not a scalar");
  return tape.scalar_value(loss);
}

/// Compares reverse-mode gradients of `build` against central differences
/// over every entry of every array in `params`.
///
/// `build` is called with a Tape for the analytic pass and with a
/// PreciseTape for the perturbed evaluations, so it must be generic over the
/// tape type. The extended-precision forward pass keeps rounding noise in
/// (f(+) - f(-)) / 2eps near 1e-14 rather than 1e-11, which matters for
/// entries whose gradient is close to the 1e-8 denominator floor.
///
/// Relative error per entry is |a - n| / max(|a|, |n|, 1e-8). Parameter
/// values are restored afterwards; their grad buffers are left untouched.
template <class Builder>
GradCheckResult finite_diff_check(const Builder& build, std::span<DiffArray* const> params,
                                  double epsilon) {
  if (!(epsilon > 0.0)) fail(ErrorCode::InvalidArgument, "finite_diff_check: epsilon must be > 0");

  const long double base1 = evaluate_loss<long double>(build);
  const long double base2 = evaluate_loss<long double>(build);
  if (base1 != base2 || evaluate_loss<double>(build) != evaluate_loss<double>(build))
    fail(ErrorCode::NonDeterministic, "finite_diff_check: loss differs between identical evaluations");

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss, /*write_back=*/false);
    for (DiffArray* p : params) {
      auto g = tape.gradient(*p);
      analytic.emplace_back(p->size(), 0.0);
      std::copy(g.begin(), g.end(), analytic.back().begin());
    }
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    DiffArray& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.values[i];
      const double hi = saved + epsilon;
      const double lo = saved - epsilon;
      p.values[i] = hi;
      const long double up = evaluate_loss<long double>(build);
      p.values[i] = lo;
      const long double down = evaluate_loss<long double>(build);
      p.values[i] = saved;

      // divide by the step actually taken after rounding hi/lo to double
      const auto numeric = static_cast<double>(
          (up - down) / (static_cast<long double>(hi) - static_cast<long double>(lo)));
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_relative_error || result.entries_checked == 1) {
        result.max_relative_error = rel;
        result.worst_param = k;
        result.worst_entry = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace cam
