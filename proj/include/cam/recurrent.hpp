#pragma once

// LSTM cell and the Mutual-Aid RNN step that advances two views jointly.

#include <cmath>
#include <cstddef>
#include <iostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cam/error.hpp"
#include "cam/random.hpp"
#include "cam/tensor.hpp"

namespace cam {

struct LstmParams {
  DiffArray W_f, W_i, W_o, W_c;  // hidden x input
  DiffArray U_f, U_i, U_o, U_c;  // hidden x hidden
  DiffArray b_f, b_i, b_o, b_c;  // hidden

  static LstmParams zeros(std::size_t input, std::size_t hidden) {
    LstmParams p;
    for (DiffArray* w : {&p.W_f, &p.W_i, &p.W_o, &p.W_c}) *w = DiffArray::matrix(hidden, input);
    for (DiffArray* u : {&p.U_f, &p.U_i, &p.U_o, &p.U_c}) *u = DiffArray::matrix(hidden, hidden);
    for (DiffArray* b : {&p.b_f, &p.b_i, &p.b_o, &p.b_c}) *b = DiffArray::vector(hidden);
    return p;
  }

  /// Weights uniform in +-1/sqrt(fan_in), biases zero except the forget
  /// bias, which starts at +1.
  static LstmParams random(std::size_t input, std::size_t hidden, Rng& rng) {
    LstmParams p = zeros(input, hidden);
    for (DiffArray* w : {&p.W_f, &p.W_i, &p.W_o, &p.W_c}) *w = uniform_matrix(hidden, input, rng);
    for (DiffArray* u : {&p.U_f, &p.U_i, &p.U_o, &p.U_c}) *u = uniform_matrix(hidden, hidden, rng);
    std::fill(p.b_f.values.begin(), p.b_f.values.end(), 1.0);
    return p;
  }

  std::size_t input_dim() const { return W_f.cols(); }
  std::size_t hidden_dim() const { return W_f.rows(); }

  template <class F>
  void visit(F&& f) const {
    f("W_f", W_f); f("W_i", W_i); f("W_o", W_o); f("W_c", W_c);
    f("U_f", U_f); f("U_i", U_i); f("U_o", U_o); f("U_c", U_c);
    f("b_f", b_f); f("b_i", b_i); f("b_o", b_o); f("b_c", b_c);
  }
  template <class F>
  void visit(F&& f) {
    std::as_const(*this).visit([&](const char* name, const DiffArray& a) {
      f(name, const_cast<DiffArray&>(a));
    });
  }

  void validate() const {
    const std::size_t h = hidden_dim(), in = input_dim();
    visit([&](const char* name, const DiffArray& a) {
      const char kind = name[0];
      const Shape want = kind == 'W' ? Shape{h, in} : kind == 'U' ? Shape{h, h} : Shape{h};
      if (a.shape != want)
        fail(ErrorCode::ShapeMismatch, std::string("lstm ") + name + ": shape " +
                                           shape_string(a.shape) + ", expected " +
                                           shape_string(want));
      a.validate(std::string("lstm ") + name);
    });
  }
};

struct CellState {
  Var h;
  Var c;
};

template <class Real>
CellState zero_state(BasicTape<Real>& tape, std::size_t hidden) {
  return {tape.zeros(hidden), tape.zeros(hidden)};
}

/// The internal update shared by the plain LSTM and the MAR cell: output
/// gate and new cell state, before the hidden state is formed.
struct CellUpdate {
  Var o;
  Var c;
};

template <class Real>
CellUpdate lstm_cell_update(BasicTape<Real>& tape, Var x, const CellState& prev,
                                   const LstmParams& p) {
  if (tape.size(x) != p.input_dim())
    fail(ErrorCode::ShapeMismatch, "lstm_step: input length " + std::to_string(tape.size(x)) +
                                       ", expected " + std::to_string(p.input_dim()));
  if (tape.size(prev.h) != p.hidden_dim() || tape.size(prev.c) != p.hidden_dim())
    fail(ErrorCode::ShapeMismatch, "lstm_step: state length does not match hidden " +
                                       std::to_string(p.hidden_dim()));
  auto affine = [&](const DiffArray& W, const DiffArray& U, const DiffArray& b) {
    return tape.add(tape.add(tape.matvec(tape.param(W), x), tape.matvec(tape.param(U), prev.h)),
                    tape.param(b));
  };
  Var f = tape.sigmoid(affine(p.W_f, p.U_f, p.b_f));
  Var i = tape.sigmoid(affine(p.W_i, p.U_i, p.b_i));
  Var o = tape.sigmoid(affine(p.W_o, p.U_o, p.b_o));
  Var candidate = tape.tanh(affine(p.W_c, p.U_c, p.b_c));
  Var c = tape.add(tape.mul(f, prev.c), tape.mul(i, candidate));
  return {o, c};
}

template <class Real>
CellState lstm_step(BasicTape<Real>& tape, Var x, const CellState& prev, const LstmParams& p) {
  CellUpdate u = lstm_cell_update(tape, x, prev, p);
  return {tape.mul(u.o, tape.tanh(u.c)), u.c};
}

template <class Real>
std::vector<CellState> lstm_encode(BasicTape<Real>& tape, std::span<const Var> xs,
                                          const LstmParams& p, CellState initial) {
  if (xs.empty()) fail(ErrorCode::EmptyInput, "lstm_encode: empty sequence");
  std::vector<CellState> states;
  states.reserve(xs.size());
  for (Var x : xs) {
    initial = lstm_step(tape, x, initial, p);
    states.push_back(initial);
  }
  return states;
}

template <class Real>
std::vector<CellState> lstm_encode(BasicTape<Real>& tape, std::span<const Var> xs,
                                          const LstmParams& p) {
  if (xs.empty()) fail(ErrorCode::EmptyInput, "lstm_encode: empty sequence");
  return lstm_encode(tape, xs, p, zero_state(tape, p.hidden_dim()));
}

inline std::vector<Var> hidden_states(std::span<const CellState> states) {
  std::vector<Var> hs;
  hs.reserve(states.size());
  for (const CellState& s : states) hs.push_back(s.h);
  return hs;
}

// --- cross-view collaboration ---------------------------------------------

/// The four bias-free projections of the cross-view collaborator.
struct CollaboratorParams {
  DiffArray W_rd;  // hidden x d_rgb, applied to the RGB input
  DiffArray W_d;   // hidden x hidden, applied to the previous depth hidden state
  DiffArray W_dr;  // hidden x d_depth, applied to the depth input
  DiffArray W_r;   // hidden x hidden, applied to the previous RGB hidden state

  static CollaboratorParams zeros(std::size_t d_rgb, std::size_t d_depth, std::size_t hidden) {
    return {DiffArray::matrix(hidden, d_rgb), DiffArray::matrix(hidden, hidden),
            DiffArray::matrix(hidden, d_depth), DiffArray::matrix(hidden, hidden)};
  }
  static CollaboratorParams random(std::size_t d_rgb, std::size_t d_depth, std::size_t hidden,
                                   Rng& rng) {
    CollaboratorParams p;
    p.W_rd = uniform_matrix(hidden, d_rgb, rng);
    p.W_d = uniform_matrix(hidden, hidden, rng);
    p.W_dr = uniform_matrix(hidden, d_depth, rng);
    p.W_r = uniform_matrix(hidden, hidden, rng);
    return p;
  }

  std::size_t hidden_dim() const { return W_d.rows(); }

  template <class F>
  void visit(F&& f) const {
    f("W_rd", W_rd); f("W_d", W_d); f("W_dr", W_dr); f("W_r", W_r);
  }
  template <class F>
  void visit(F&& f) {
    std::as_const(*this).visit([&](const char* name, const DiffArray& a) {
      f(name, const_cast<DiffArray&>(a));
    });
  }

  void validate(std::size_t d_rgb, std::size_t d_depth, std::size_t hidden) const {
    auto check = [](const char* name, const DiffArray& a, Shape want) {
      if (a.shape != want)
        fail(ErrorCode::ShapeMismatch, std::string("collaborator ") + name + ": shape " +
                                           shape_string(a.shape) + ", expected " +
                                           shape_string(want));
      a.validate(std::string("collaborator ") + name);
    };
    check("W_rd", W_rd, {hidden, d_rgb});
    check("W_d", W_d, {hidden, hidden});
    check("W_dr", W_dr, {hidden, d_depth});
    check("W_r", W_r, {hidden, hidden});
  }
};

struct CollaboratorGates {
  Var rgb_to_depth;  // filters the depth cell
  Var depth_to_rgb;  // filters the RGB cell
};

template <class Real>
CollaboratorGates collaborator_gates(BasicTape<Real>& tape, Var x_r, Var x_d, Var h_prev_r,
                                            Var h_prev_d, const CollaboratorParams& p) {
  Var g_rd = tape.sigmoid(tape.add(tape.matvec(tape.param(p.W_rd), x_r),
                                   tape.matvec(tape.param(p.W_d), h_prev_d)));
  Var g_dr = tape.sigmoid(tape.add(tape.matvec(tape.param(p.W_dr), x_d),
                                   tape.matvec(tape.param(p.W_r), h_prev_r)));
  return {g_rd, g_dr};
}

template <class Real>
Var mutual_filter(BasicTape<Real>& tape, Var gate, Var cell) {
  if (tape.size(gate) != tape.size(cell))
    fail(ErrorCode::ShapeMismatch, "mutual_filter: gate length " +
                                       std::to_string(tape.size(gate)) + ", cell length " +
                                       std::to_string(tape.size(cell)));
  return tape.mul(gate, cell);
}

/// Rescales a pair of per-frame attention scores to sum to one. Both-zero
/// input is degenerate and maps to (0.5, 0.5) with a warning on stderr.
inline std::pair<double, double> normalize_attention_pair(double z_r, double z_d) {
  if (!std::isfinite(z_r) || !std::isfinite(z_d) || z_r < 0.0 || z_d < 0.0)
    fail(ErrorCode::InvalidArgument, "normalize_attention_pair: scores must be finite and >= 0");
  const double total = z_r + z_d;
  if (total == 0.0) {
    std::clog << "warning: both attention scores are zero; using (0.5, 0.5)\n";
    return {0.5, 0.5};
  }
  return {z_r / total, z_d / total};
}

struct CollaboratedCells {
  Var rgb;
  Var depth;
};

/// Each view's own normalized score weighs its unfiltered cell; the other
/// view's score weighs the filtered one.
template <class Real>
CollaboratedCells collaborate_cell(BasicTape<Real>& tape, double z_r, double z_d, Var c_r,
                                          Var c_r_filtered, Var c_d, Var c_d_filtered) {
  return {tape.axpby(z_r, c_r, z_d, c_r_filtered), tape.axpby(z_d, c_d, z_r, c_d_filtered)};
}

/// Switches for the ablations. With a view's filter disabled its gate is
/// treated as all ones, which makes its collaborated cell equal the plain
/// LSTM cell for any attention weights.
struct MarOptions {
  bool filter_rgb = true;
  bool filter_depth = true;
  /// Form h_t from the collaborated cell (true) or the raw LSTM cell.
  bool hidden_from_collaborated = true;

  friend bool operator==(const MarOptions&, const MarOptions&) = default;
};

struct MarState {
  CellState rgb;
  CellState depth;
};

template <class Real>
MarState mar_step(BasicTape<Real>& tape, Var x_r, Var x_d, const CellState& prev_r,
                         const CellState& prev_d, double z_r, double z_d,
                         const LstmParams& lstm_r, const LstmParams& lstm_d,
                         const CollaboratorParams& collab, const MarOptions& options = {}) {
  if (lstm_r.hidden_dim() != lstm_d.hidden_dim() || collab.hidden_dim() != lstm_r.hidden_dim())
    fail(ErrorCode::ShapeMismatch, "mar_step: views and collaborator must share the hidden size");

  CellUpdate ur = lstm_cell_update(tape, x_r, prev_r, lstm_r);
  CellUpdate ud = lstm_cell_update(tape, x_d, prev_d, lstm_d);

  Var c_r_filtered = ur.c;
  Var c_d_filtered = ud.c;
  if (options.filter_rgb || options.filter_depth) {
    CollaboratorGates g = collaborator_gates(tape, x_r, x_d, prev_r.h, prev_d.h, collab);
    if (options.filter_rgb) c_r_filtered = mutual_filter(tape, g.depth_to_rgb, ur.c);
    if (options.filter_depth) c_d_filtered = mutual_filter(tape, g.rgb_to_depth, ud.c);
  }

  const auto [zr, zd] = normalize_attention_pair(z_r, z_d);
  CollaboratedCells cc = collaborate_cell(tape, zr, zd, ur.c, c_r_filtered, ud.c, c_d_filtered);

  Var h_r = tape.mul(ur.o, tape.tanh(options.hidden_from_collaborated ? cc.rgb : ur.c));
  Var h_d = tape.mul(ud.o, tape.tanh(options.hidden_from_collaborated ? cc.depth : ud.c));
  return {{h_r, cc.rgb}, {h_d, cc.depth}};
}

struct MarSequence {
  std::vector<CellState> rgb;
  std::vector<CellState> depth;
};

/// Folds mar_step over the sequence from zero states. `trace_r`/`trace_d`
/// are the stage-one attention traces and enter as constants.
template <class Real>
MarSequence mar_encode(BasicTape<Real>& tape, std::span<const Var> xs_r, std::span<const Var> xs_d,
                              std::span<const double> trace_r, std::span<const double> trace_d,
                              const LstmParams& lstm_r, const LstmParams& lstm_d,
                              const CollaboratorParams& collab, const MarOptions& options = {}) {
  const std::size_t T = xs_r.size();
  if (T == 0) fail(ErrorCode::EmptyInput, "mar_encode: empty sequence");
  if (xs_d.size() != T || trace_r.size() != T || trace_d.size() != T)
    fail(ErrorCode::ShapeMismatch,
         "mar_encode: lengths differ (rgb " + std::to_string(T) + ", depth " +
             std::to_string(xs_d.size()) + ", traces " + std::to_string(trace_r.size()) + "/" +
             std::to_string(trace_d.size()) + ")");
  MarSequence seq;
  seq.rgb.reserve(T);
  seq.depth.reserve(T);
  CellState r = zero_state(tape, lstm_r.hidden_dim());
  CellState d = zero_state(tape, lstm_d.hidden_dim());
  for (std::size_t t = 0; t < T; ++t) {
    MarState next = mar_step(tape, xs_r[t], xs_d[t], r, d, trace_r[t], trace_d[t], lstm_r,
                             lstm_d, collab, options);
    r = next.rgb;
    d = next.depth;
    seq.rgb.push_back(r);
    seq.depth.push_back(d);
  }
  return seq;
}

}  // namespace cam
