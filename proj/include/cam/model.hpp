#pragma once

// Stage-one view-specific classifiers, the stage-two MAR classifier pair,
// and the correlative late-fusion head.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cam/attention.hpp"
#include "cam/data.hpp"
#include "cam/error.hpp"
#include "cam/matrix.hpp"
#include "cam/random.hpp"
#include "cam/recurrent.hpp"
#include "cam/tensor.hpp"

namespace cam {

/// Affine map to class logits.
struct LinearHead {
  DiffArray W;  // out x in
  DiffArray b;  // out

  static LinearHead zeros(std::size_t in, std::size_t out) {
    return {DiffArray::matrix(out, in), DiffArray::vector(out)};
  }
  static LinearHead random(std::size_t in, std::size_t out, Rng& rng) {
    return {uniform_matrix(out, in, rng), DiffArray::vector(out)};
  }

  std::size_t in_dim() const { return W.cols(); }
  std::size_t out_dim() const { return W.rows(); }

  template <class Real>
  Var apply(BasicTape<Real>& tape, Var x) const {
    return tape.add(tape.matvec(tape.param(W), x), tape.param(b));
  }

  template <class F>
  void visit(F&& f) const {
    f("W", W); f("b", b);
  }
  template <class F>
  void visit(F&& f) {
    std::as_const(*this).visit([&](const char* name, const DiffArray& a) {
      f(name, const_cast<DiffArray&>(a));
    });
  }

  void validate(std::size_t in, std::size_t out, const std::string& what) const {
    if (W.shape != Shape{out, in} || b.shape != Shape{out})
      fail(ErrorCode::ShapeMismatch, what + ": shapes " + shape_string(W.shape) + ", " +
                                         shape_string(b.shape) + "; expected [" +
                                         std::to_string(out) + "x" + std::to_string(in) + "]");
    W.validate(what + ".W");
    b.validate(what + ".b");
  }
};

namespace detail {
template <class F>
auto prefixed(const std::string& prefix, F& f) {
  return [&f, prefix](const auto& name, auto& a) { f(prefix + std::string(name), a); };
}
}  // namespace detail

struct StageOneView {
  LstmParams lstm;
  AttentionParams att;
  LinearHead classifier;

  static StageOneView random(std::size_t input, std::size_t hidden, std::size_t classes,
                             Rng& rng) {
    StageOneView v;
    v.lstm = LstmParams::random(input, hidden, rng);
    v.att = AttentionParams::random(hidden, hidden, rng);
    v.classifier = LinearHead::random(hidden, classes, rng);
    return v;
  }
  static StageOneView zeros(std::size_t input, std::size_t hidden, std::size_t classes) {
    return {LstmParams::zeros(input, hidden), AttentionParams::zeros(hidden, hidden),
            LinearHead::zeros(hidden, classes)};
  }

  template <class F>
  void visit(F&& f) const {
    lstm.visit(detail::prefixed("lstm.", f));
    att.visit(detail::prefixed("att.", f));
    classifier.visit(detail::prefixed("classifier.", f));
  }
  template <class F>
  void visit(F&& f) {
    lstm.visit(detail::prefixed("lstm.", f));
    att.visit(detail::prefixed("att.", f));
    classifier.visit(detail::prefixed("classifier.", f));
  }

  void validate(std::size_t input, std::size_t hidden, std::size_t classes) const {
    if (lstm.input_dim() != input || lstm.hidden_dim() != hidden)
      fail(ErrorCode::ShapeMismatch,
           "stage-one view: lstm is " + std::to_string(lstm.input_dim()) + "->" +
               std::to_string(lstm.hidden_dim()) + ", expected " + std::to_string(input) + "->" +
               std::to_string(hidden));
    lstm.validate();
    att.validate(hidden);
    classifier.validate(hidden, classes, "stage-one classifier");
  }
};

struct StageOneOutput {
  Var logits;
  Var trace;
};

template <class Real>
StageOneOutput stage1_forward(BasicTape<Real>& tape, const Matrix& x, const StageOneView& view) {
  if (x.cols != view.lstm.input_dim())
    fail(ErrorCode::ShapeMismatch, "stage1_forward: feature dim " + std::to_string(x.cols) +
                                       ", model expects " + std::to_string(view.lstm.input_dim()));
  const std::vector<Var> xs = frames(tape, x);
  const std::vector<Var> hs = hidden_states(lstm_encode(tape, xs, view.lstm));
  Var trace = attention_scores(tape, hs, view.att);
  Var r = attend(tape, hs, trace);
  return {view.classifier.apply(tape, r), trace};
}

struct StageTwoModel {
  LstmParams lstm_r, lstm_d;
  CollaboratorParams collab;
  AttentionParams att_r, att_d;
  LinearHead classifier_r, classifier_d;
  MarOptions options;

  static StageTwoModel random(std::size_t d_rgb, std::size_t d_depth, std::size_t hidden,
                              std::size_t classes, Rng& rng, MarOptions options = {}) {
    StageTwoModel m;
    m.lstm_r = LstmParams::random(d_rgb, hidden, rng);
    m.lstm_d = LstmParams::random(d_depth, hidden, rng);
    m.collab = CollaboratorParams::random(d_rgb, d_depth, hidden, rng);
    m.att_r = AttentionParams::random(hidden, hidden, rng);
    m.att_d = AttentionParams::random(hidden, hidden, rng);
    m.classifier_r = LinearHead::random(hidden, classes, rng);
    m.classifier_d = LinearHead::random(hidden, classes, rng);
    m.options = options;
    return m;
  }
  static StageTwoModel zeros(std::size_t d_rgb, std::size_t d_depth, std::size_t hidden,
                             std::size_t classes, MarOptions options = {}) {
    return {LstmParams::zeros(d_rgb, hidden),
            LstmParams::zeros(d_depth, hidden),
            CollaboratorParams::zeros(d_rgb, d_depth, hidden),
            AttentionParams::zeros(hidden, hidden),
            AttentionParams::zeros(hidden, hidden),
            LinearHead::zeros(hidden, classes),
            LinearHead::zeros(hidden, classes),
            options};
  }

  template <class F>
  void visit(F&& f) const {
    lstm_r.visit(detail::prefixed("lstm_r.", f));
    lstm_d.visit(detail::prefixed("lstm_d.", f));
    collab.visit(detail::prefixed("collab.", f));
    att_r.visit(detail::prefixed("att_r.", f));
    att_d.visit(detail::prefixed("att_d.", f));
    classifier_r.visit(detail::prefixed("classifier_r.", f));
    classifier_d.visit(detail::prefixed("classifier_d.", f));
  }
  template <class F>
  void visit(F&& f) {
    lstm_r.visit(detail::prefixed("lstm_r.", f));
    lstm_d.visit(detail::prefixed("lstm_d.", f));
    collab.visit(detail::prefixed("collab.", f));
    att_r.visit(detail::prefixed("att_r.", f));
    att_d.visit(detail::prefixed("att_d.", f));
    classifier_r.visit(detail::prefixed("classifier_r.", f));
    classifier_d.visit(detail::prefixed("classifier_d.", f));
  }

  void validate(std::size_t d_rgb, std::size_t d_depth, std::size_t hidden,
                std::size_t classes) const {
    for (const LstmParams* l : {&lstm_r, &lstm_d}) {
      const std::size_t want = l == &lstm_r ? d_rgb : d_depth;
      if (l->input_dim() != want || l->hidden_dim() != hidden)
        fail(ErrorCode::ShapeMismatch,
             "stage-two lstm is " + std::to_string(l->input_dim()) + "->" +
                 std::to_string(l->hidden_dim()) + ", expected " + std::to_string(want) + "->" +
                 std::to_string(hidden));
      l->validate();
    }
    collab.validate(d_rgb, d_depth, hidden);
    att_r.validate(hidden);
    att_d.validate(hidden);
    classifier_r.validate(hidden, classes, "stage-two rgb classifier");
    classifier_d.validate(hidden, classes, "stage-two depth classifier");
  }
};

struct StageTwoOutput {
  Var logits_r, logits_d;
  Var trace_r, trace_d;
};

/// `trace_r`/`trace_d` are the stage-one traces of the same sample; they are
/// constants here.
template <class Real>
StageTwoOutput stage2_forward(BasicTape<Real>& tape, const ViewSample& sample,
                                     const AttentionTrace& trace_r,
                                     const AttentionTrace& trace_d, const StageTwoModel& m) {
  if (sample.x_r.cols != m.lstm_r.input_dim() || sample.x_d.cols != m.lstm_d.input_dim())
    fail(ErrorCode::ShapeMismatch, "stage2_forward: feature dims do not match the model");
  if (trace_r.size() != sample.x_r.rows || trace_d.size() != sample.x_d.rows)
    fail(ErrorCode::ShapeMismatch,
         "stage2_forward: sample '" + sample.id + "' has " + std::to_string(sample.x_r.rows) +
             " frames but traces of length " + std::to_string(trace_r.size()) + "/" +
             std::to_string(trace_d.size()));
  const std::vector<Var> xr = frames(tape, sample.x_r);
  const std::vector<Var> xd = frames(tape, sample.x_d);
  const MarSequence seq = mar_encode(tape, xr, xd, trace_r.scores, trace_d.scores, m.lstm_r,
                                     m.lstm_d, m.collab, m.options);
  const std::vector<Var> hr = hidden_states(seq.rgb);
  const std::vector<Var> hd = hidden_states(seq.depth);
  StageTwoOutput out;
  out.trace_r = attention_scores(tape, hr, m.att_r);
  out.trace_d = attention_scores(tape, hd, m.att_d);
  out.logits_r = m.classifier_r.apply(tape, attend(tape, hr, out.trace_r));
  out.logits_d = m.classifier_d.apply(tape, attend(tape, hd, out.trace_d));
  return out;
}

/// Linear classifier over the flattened C x C correlative matrix.
struct FusionHead {
  LinearHead classifier;

  static FusionHead random(std::size_t classes, Rng& rng) {
    return {LinearHead::random(classes * classes, classes, rng)};
  }
  static FusionHead zeros(std::size_t classes) {
    return {LinearHead::zeros(classes * classes, classes)};
  }

  std::size_t classes() const { return classifier.out_dim(); }

  template <class F>
  void visit(F&& f) const {
    classifier.visit(detail::prefixed("classifier.", f));
  }
  template <class F>
  void visit(F&& f) {
    classifier.visit(detail::prefixed("classifier.", f));
  }

  void validate(std::size_t classes) const {
    classifier.validate(classes * classes, classes, "fusion classifier");
  }
};

/// Row-major flattening of D = p_r p_d^T, RGB indexing rows.
template <class Real>
Var correlative_matrix(BasicTape<Real>& tape, Var p_r, Var p_d) {
  if (tape.size(p_r) != tape.size(p_d))
    fail(ErrorCode::ShapeMismatch, "correlative_fusion: probability vectors differ in length");
  for (Var p : {p_r, p_d}) {
    double total = 0.0;
    for (double v : tape.value(p)) total += v;
    if (std::abs(total - 1.0) > 1e-6)
      fail(ErrorCode::NotNormalized,
           "correlative_fusion: input probabilities sum to " + std::to_string(total));
  }
  return tape.outer(p_r, p_d);
}

template <class Real>
Var correlative_fusion(BasicTape<Real>& tape, Var p_r, Var p_d, const FusionHead& head) {
  if (tape.size(p_r) != head.classes())
    fail(ErrorCode::ShapeMismatch, "correlative_fusion: " + std::to_string(tape.size(p_r)) +
                                       " probabilities for a " +
                                       std::to_string(head.classes()) + "-class head");
  return head.classifier.apply(tape, correlative_matrix(tape, p_r, p_d));
}

struct ModelDims {
  std::size_t dim_r = 0;
  std::size_t dim_d = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// The full learnable set.
struct CamParams {
  StageOneView stage1_r, stage1_d;
  StageTwoModel stage2;
  FusionHead fusion;

  static CamParams zeros(const ModelDims& d, MarOptions options = {}) {
    return {StageOneView::zeros(d.dim_r, d.hidden, d.classes),
            StageOneView::zeros(d.dim_d, d.hidden, d.classes),
            StageTwoModel::zeros(d.dim_r, d.dim_d, d.hidden, d.classes, options),
            FusionHead::zeros(d.classes)};
  }

  ModelDims dims() const {
    return {stage1_r.lstm.input_dim(), stage1_d.lstm.input_dim(), stage1_r.lstm.hidden_dim(),
            stage1_r.classifier.out_dim()};
  }

  template <class F>
  void visit(F&& f) const {
    stage1_r.visit(detail::prefixed("stage1_r.", f));
    stage1_d.visit(detail::prefixed("stage1_d.", f));
    stage2.visit(detail::prefixed("stage2.", f));
    fusion.visit(detail::prefixed("fusion.", f));
  }
  template <class F>
  void visit(F&& f) {
    stage1_r.visit(detail::prefixed("stage1_r.", f));
    stage1_d.visit(detail::prefixed("stage1_d.", f));
    stage2.visit(detail::prefixed("stage2.", f));
    fusion.visit(detail::prefixed("fusion.", f));
  }

  void validate(const ModelDims& d) const {
    stage1_r.validate(d.dim_r, d.hidden, d.classes);
    stage1_d.validate(d.dim_d, d.hidden, d.classes);
    stage2.validate(d.dim_r, d.dim_d, d.hidden, d.classes);
    fusion.validate(d.classes);
  }
};

/// Lowest index among maximal entries.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::vector<double> softmax_values(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (double& v : p) total += (v = std::exp(v - mx));
  for (double& v : p) v /= total;
  return p;
}

struct StageOneTraces {
  AttentionTrace rgb;
  AttentionTrace depth;
};

struct StageOneResult {
  StageOneTraces traces;
  std::vector<double> logits_r, logits_d;
};

inline StageOneResult run_stage1(const ViewSample& s, const StageOneView& r,
                                 const StageOneView& d) {
  Tape tape;
  StageOneOutput a = stage1_forward(tape, s.x_r, r);
  StageOneOutput b = stage1_forward(tape, s.x_d, d);
  StageOneResult out;
  out.traces = {to_trace(tape, a.trace), to_trace(tape, b.trace)};
  auto lr = tape.value(a.logits);
  auto ld = tape.value(b.logits);
  out.logits_r.assign(lr.begin(), lr.end());
  out.logits_d.assign(ld.begin(), ld.end());
  return out;
}

struct StageTwoResult {
  std::vector<double> logits_r, logits_d;
  std::vector<double> probs_r, probs_d;
  AttentionTrace trace_r, trace_d;
};

inline StageTwoResult run_stage2(const ViewSample& s, const StageOneTraces& z,
                                 const StageTwoModel& m) {
  Tape tape;
  StageTwoOutput o = stage2_forward(tape, s, z.rgb, z.depth, m);
  auto lr = tape.value(o.logits_r);
  auto ld = tape.value(o.logits_d);
  return {{lr.begin(), lr.end()}, {ld.begin(), ld.end()},
          softmax_values(lr),     softmax_values(ld),
          to_trace(tape, o.trace_r), to_trace(tape, o.trace_d)};
}

inline std::vector<double> run_fusion(std::span<const double> probs_r,
                                      std::span<const double> probs_d, const FusionHead& head) {
  Tape tape;
  Var logits = correlative_fusion(tape, tape.constant(probs_r), tape.constant(probs_d), head);
  auto v = tape.value(logits);
  return {v.begin(), v.end()};
}

struct Prediction {
  std::size_t class_r = 0;
  std::size_t class_d = 0;
  std::size_t class_fused = 0;
  std::size_t stage1_class_r = 0;
  std::size_t stage1_class_d = 0;
  StageOneTraces stage1_traces;
  AttentionTrace stage2_trace_r, stage2_trace_d;
};

/// Stage one (for its traces), then stage two, then fusion; argmax per head.
inline Prediction predict(const ViewSample& sample, const CamParams& params) {
  const StageOneResult s1 = run_stage1(sample, params.stage1_r, params.stage1_d);
  const StageTwoResult s2 = run_stage2(sample, s1.traces, params.stage2);
  const std::vector<double> fused = run_fusion(s2.probs_r, s2.probs_d, params.fusion);
  Prediction p;
  p.stage1_class_r = argmax(s1.logits_r);
  p.stage1_class_d = argmax(s1.logits_d);
  p.class_r = argmax(s2.logits_r);
  p.class_d = argmax(s2.logits_d);
  p.class_fused = argmax(fused);
  p.stage1_traces = s1.traces;
  p.stage2_trace_r = s2.trace_r;
  p.stage2_trace_d = s2.trace_d;
  return p;
}

}  // namespace cam
