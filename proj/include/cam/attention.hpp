#pragma once

// Context-vector temporal attention over a sequence of hidden states.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cam/error.hpp"
#include "cam/random.hpp"
#include "cam/tensor.hpp"

namespace cam {

struct AttentionParams {
  DiffArray W_w;  // att x hidden
  DiffArray b_w;  // att
  DiffArray u_w;  // att, the learned context vector

  static AttentionParams zeros(std::size_t hidden, std::size_t att) {
    return {DiffArray::matrix(att, hidden), DiffArray::vector(att), DiffArray::vector(att)};
  }
  static AttentionParams random(std::size_t hidden, std::size_t att, Rng& rng) {
    AttentionParams p = zeros(hidden, att);
    p.W_w = uniform_matrix(att, hidden, rng);
    fill_uniform(p.u_w, 1.0 / std::sqrt(static_cast<double>(att)), rng);
    return p;
  }

  std::size_t hidden_dim() const { return W_w.cols(); }
  std::size_t att_dim() const { return W_w.rows(); }

  template <class F>
  void visit(F&& f) const {
    f("W_w", W_w); f("b_w", b_w); f("u_w", u_w);
  }
  template <class F>
  void visit(F&& f) {
    std::as_const(*this).visit([&](const char* name, const DiffArray& a) {
      f(name, const_cast<DiffArray&>(a));
    });
  }

  void validate(std::size_t hidden) const {
    const std::size_t att = att_dim();
    if (W_w.shape != Shape{att, hidden} || b_w.shape != Shape{att} || u_w.shape != Shape{att})
      fail(ErrorCode::ShapeMismatch, "attention: shapes " + shape_string(W_w.shape) + ", " +
                                         shape_string(b_w.shape) + ", " +
                                         shape_string(u_w.shape) + " for hidden " +
                                         std::to_string(hidden));
    visit([](const char* name, const DiffArray& a) { a.validate(std::string("attention ") + name); });
  }
};

/// A materialized distribution over frames.
struct AttentionTrace {
  std::vector<double> scores;

  std::size_t size() const noexcept { return scores.size(); }

  /// Entries non-negative and summing to one within `tolerance`.
  void validate(double tolerance = 1e-9) const {
    if (scores.empty()) fail(ErrorCode::EmptyInput, "attention trace is empty");
    double total = 0.0;
    for (double z : scores) {
      if (!std::isfinite(z) || z < 0.0)
        fail(ErrorCode::NotNormalized, "attention trace has a negative or non-finite entry");
      total += z;
    }
    if (std::abs(total - 1.0) > tolerance)
      fail(ErrorCode::NotNormalized, "attention trace sums to " + std::to_string(total));
  }

  friend bool operator==(const AttentionTrace&, const AttentionTrace&) = default;
};

/// z_t = softmax_t(tanh(W_w h_t + b_w) . u_w); returns the length-T trace node.
template <class Real>
Var attention_scores(BasicTape<Real>& tape, std::span<const Var> hidden, const AttentionParams& p) {
  if (hidden.empty()) fail(ErrorCode::EmptyInput, "attention_scores: no hidden states");
  Var W = tape.param(p.W_w);
  Var b = tape.param(p.b_w);
  Var u = tape.param(p.u_w);
  std::vector<Var> logits;
  logits.reserve(hidden.size());
  for (Var h : hidden) logits.push_back(tape.dot(tape.tanh(tape.add(tape.matvec(W, h), b)), u));
  return tape.softmax(tape.stack(logits));
}

/// r = sum_t z_t h_t.
template <class Real>
Var attend(BasicTape<Real>& tape, std::span<const Var> hidden, Var trace) {
  if (tape.size(trace) != hidden.size())
    fail(ErrorCode::ShapeMismatch, "attend: " + std::to_string(hidden.size()) +
                                       " hidden states but trace of length " +
                                       std::to_string(tape.size(trace)));
  return tape.weighted_sum(hidden, trace);
}

template <class Real>
AttentionTrace to_trace(const BasicTape<Real>& tape, Var trace) {
  auto v = tape.value(trace);
  return AttentionTrace{{v.begin(), v.end()}};
}

}  // namespace cam
