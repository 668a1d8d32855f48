#pragma once

// Three-phase optimization (stage one per view, joint stage two, fusion),
// evaluation with confusion matrices, and the ablation suite.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cam/config.hpp"
#include "cam/data.hpp"
#include "cam/error.hpp"
#include "cam/model.hpp"
#include "cam/parallel.hpp"
#include "cam/random.hpp"
#include "cam/tensor.hpp"

namespace cam {

// RNG streams under the run seed; one per consumer so that phases can be
// rerun individually and still see the same draws.
inline constexpr std::uint64_t kStreamInitStage1Rgb = 1;
inline constexpr std::uint64_t kStreamInitStage1Depth = 2;
inline constexpr std::uint64_t kStreamInitStage2 = 3;
inline constexpr std::uint64_t kStreamInitFusion = 4;
inline constexpr std::uint64_t kStreamShuffleStage1Rgb = 101;
inline constexpr std::uint64_t kStreamShuffleStage1Depth = 102;
inline constexpr std::uint64_t kStreamShuffleStage2 = 103;
inline constexpr std::uint64_t kStreamShuffleFusion = 104;

// --- optimizer --------------------------------------------------------------

struct ParamRef {
  std::string name;
  DiffArray* array = nullptr;
};

template <class Model>
std::vector<ParamRef> param_refs(Model& model, const std::string& prefix = "") {
  std::vector<ParamRef> out;
  model.visit([&](const auto& name, DiffArray& a) {
    out.push_back({prefix + std::string(name), &a});
  });
  return out;
}

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;

  static AdamState for_params(std::span<const ParamRef> params) {
    AdamState s;
    for (const ParamRef& p : params) {
      s.m.emplace_back(p.array->size(), 0.0);
      s.v.emplace_back(p.array->size(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update from the gradients held in each array's
/// grad buffer. Nothing is modified if any gradient is non-finite.
inline void optimizer_step(std::span<const ParamRef> params, AdamState& state, double lr,
                           const AdamConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    fail(ErrorCode::ShapeMismatch, "optimizer_step: state holds " +
                                       std::to_string(state.m.size()) + " blocks for " +
                                       std::to_string(params.size()) + " parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const DiffArray& p = *params[k].array;
    if (p.grad.size() != p.values.size() || state.m[k].size() != p.size() ||
        state.v[k].size() != p.size())
      fail(ErrorCode::ShapeMismatch, "optimizer_step: size mismatch in '" + params[k].name + "'");
    for (double g : p.grad)
      if (!std::isfinite(g))
        fail(ErrorCode::NonFinite, "optimizer_step: non-finite gradient in '" + params[k].name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    DiffArray& p = *params[k].array;
    std::vector<double>& m = state.m[k];
    std::vector<double>& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

// --- generic mini-batch loop ------------------------------------------------

struct PhaseLog {
  std::string name;
  double initial_loss = 0.0;        // mean train loss before the first update
  std::vector<double> epoch_loss;  // mean train loss seen during each epoch
  double seconds = 0.0;
};

struct PhaseSchedule {
  std::size_t epochs = 0;
  double lr = 0.0;
  std::size_t batch_size = 1;
  AdamConfig adam;
};

namespace detail {

template <class LossFn>
double sample_loss(Tape& tape, const LossFn& loss_fn, const ViewSample& s, std::size_t k,
                   bool backward) {
  tape.reset();
  Var loss = loss_fn(tape, s, k);
  if (backward) tape.backward(loss, /*write_back=*/false);
  return tape.scalar_value(loss);
}

inline void add_gradients(const Tape& tape, std::span<const ParamRef> params, double* out) {
  for (const ParamRef& p : params) {
    auto g = tape.gradient(*p.array);
    if (!g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) out[i] += g[i];
    out += p.array->size();
  }
}

template <class LossFn>
std::vector<double> losses(const std::vector<const ViewSample*>& samples, const LossFn& loss_fn) {
  std::vector<double> out(samples.size());
  parallel_chunks(samples.size(), thread_count(), [&](std::size_t, std::size_t b, std::size_t e) {
    Tape tape;
    for (std::size_t k = b; k < e; ++k) out[k] = sample_loss(tape, loss_fn, *samples[k], k, false);
  });
  return out;
}

inline Error annotate(const Error& e, const std::string& where) {
  return Error(e.code(), where + ": " + e.what());
}

}  // namespace detail

/// Minimizes the mean per-sample loss over `samples` with Adam. `loss_fn`
/// is called as loss_fn(tape, sample, index_in_samples) and returns a scalar.
///
/// Per-sample gradients are summed in sample order before scaling, whatever
/// the thread count, so results are bit-identical across CAM_THREADS values.
template <class LossFn>
PhaseLog train_phase(const std::string& name, std::span<const ParamRef> params,
                     const std::vector<const ViewSample*>& samples, const LossFn& loss_fn,
                     const PhaseSchedule& schedule, Rng shuffle_rng) {
  if (samples.empty()) fail(ErrorCode::EmptyInput, name + ": no training samples");
  if (schedule.batch_size == 0) fail(ErrorCode::InvalidArgument, name + ": batch size is zero");
  const auto start = std::chrono::steady_clock::now();

  PhaseLog log;
  log.name = name;
  const std::size_t n = samples.size();
  const std::size_t workers = thread_count();
  std::size_t total_size = 0;
  for (const ParamRef& p : params) total_size += p.array->size();

  try {
    const std::vector<double> first = detail::losses(samples, loss_fn);
    log.initial_loss = std::accumulate(first.begin(), first.end(), 0.0) / static_cast<double>(n);
  } catch (const Error& e) {
    throw detail::annotate(e, name + " before training");
  }

  AdamState state = AdamState::for_params(params);
  std::vector<std::size_t> order(n);
  std::vector<double> flat(total_size);
  Tape tape;
  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_total = 0.0;
    for (std::size_t b = 0; b < n; b += schedule.batch_size) {
      const std::size_t m = std::min(schedule.batch_size, n - b);
      std::vector<double> batch_loss(m);
      std::fill(flat.begin(), flat.end(), 0.0);
      auto where = [&](std::size_t k) {
        return name + " epoch " + std::to_string(epoch) + " sample '" + samples[k]->id + "'";
      };
      if (workers == 1) {
        for (std::size_t j = 0; j < m; ++j) {
          const std::size_t k = order[b + j];
          try {
            batch_loss[j] = detail::sample_loss(tape, loss_fn, *samples[k], k, true);
          } catch (const Error& e) {
            throw detail::annotate(e, where(k));
          }
          detail::add_gradients(tape, params, flat.data());
        }
      } else {
        std::vector<std::vector<double>> per(m, std::vector<double>(total_size, 0.0));
        parallel_chunks(m, workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
          Tape local;
          for (std::size_t j = lo; j < hi; ++j) {
            const std::size_t k = order[b + j];
            try {
              batch_loss[j] = detail::sample_loss(local, loss_fn, *samples[k], k, true);
            } catch (const Error& e) {
              throw detail::annotate(e, where(k));
            }
            detail::add_gradients(local, params, per[j].data());
          }
        });
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t i = 0; i < total_size; ++i) flat[i] += per[j][i];
      }
      for (double l : batch_loss) epoch_total += l;

      const double scale = 1.0 / static_cast<double>(m);
      std::size_t offset = 0;
      for (const ParamRef& p : params) {
        for (std::size_t i = 0; i < p.array->size(); ++i) p.array->grad[i] = flat[offset + i] * scale;
        offset += p.array->size();
      }
      try {
        optimizer_step(params, state, schedule.lr, schedule.adam);
      } catch (const Error& e) {
        throw detail::annotate(e, name + " epoch " + std::to_string(epoch));
      }
    }
    log.epoch_loss.push_back(epoch_total / static_cast<double>(n));
  }
  for (const ParamRef& p : params) p.array->zero_grad();
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

// --- data preparation -------------------------------------------------------

struct PreparedData {
  Dataset data;
  FeatureStats stats;  // empty when standardization is off
};

inline void require_train_coverage(const Dataset& data) {
  std::vector<std::size_t> count(data.classes, 0);
  for (const ViewSample& s : data.samples)
    if (s.split == Split::Train) ++count[s.label];
  for (std::size_t c = 0; c < data.classes; ++c)
    if (count[c] == 0)
      fail(ErrorCode::InvalidArgument,
           "dataset: class " + std::to_string(c) + " has no training sample");
}

/// Validates `raw` and applies train-split standardization when enabled.
inline PreparedData prepare(const Dataset& raw, const RunConfig& cfg) {
  raw.validate();
  require_train_coverage(raw);
  if (!cfg.standardize) return {raw, {}};
  FeatureStats stats = fit_feature_stats(raw);
  return {standardize(raw, stats), std::move(stats)};
}

/// Applies stored statistics (if any) to a dataset loaded for evaluation.
inline Dataset apply_stats(const Dataset& raw, const FeatureStats& stats) {
  raw.validate();
  return stats.empty() ? raw : standardize(raw, stats);
}

// --- the three phases -------------------------------------------------------

using TraceTable = std::map<std::string, StageOneTraces>;

/// Frozen stage-one forward over every sample.
inline TraceTable stage1_traces(const Dataset& data, const StageOneView& rgb,
                                const StageOneView& depth) {
  std::vector<StageOneTraces> out(data.samples.size());
  parallel_chunks(out.size(), thread_count(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k)
      out[k] = run_stage1(data.samples[k], rgb, depth).traces;
  });
  TraceTable table;
  for (std::size_t k = 0; k < out.size(); ++k) table.emplace(data.samples[k].id, std::move(out[k]));
  return table;
}

struct StageOneRun {
  StageOneView rgb, depth;
  TraceTable traces;
  PhaseLog log_rgb, log_depth;
};

/// Trains the two view-specific models separately, then materializes the
/// stage-one traces of every train and test sample.
inline StageOneRun train_stage1(const Dataset& data, const RunConfig& cfg) {
  cfg.validate();
  const std::vector<const ViewSample*> train = data.split(Split::Train);
  const PhaseSchedule schedule{cfg.epochs_stage1, cfg.lr_stage1, cfg.batch_size, cfg.adam};
  StageOneRun run;
  Rng init_r = make_rng(cfg.seed, kStreamInitStage1Rgb);
  Rng init_d = make_rng(cfg.seed, kStreamInitStage1Depth);
  run.rgb = StageOneView::random(data.dim_r, cfg.hidden, data.classes, init_r);
  run.depth = StageOneView::random(data.dim_d, cfg.hidden, data.classes, init_d);

  const std::vector<ParamRef> pr = param_refs(run.rgb, "stage1_r.");
  run.log_rgb = train_phase(
      "stage1_r", pr, train,
      [&](Tape& tape, const ViewSample& s, std::size_t) {
        return tape.cross_entropy(stage1_forward(tape, s.x_r, run.rgb).logits, s.label);
      },
      schedule, make_rng(cfg.seed, kStreamShuffleStage1Rgb));

  const std::vector<ParamRef> pd = param_refs(run.depth, "stage1_d.");
  run.log_depth = train_phase(
      "stage1_d", pd, train,
      [&](Tape& tape, const ViewSample& s, std::size_t) {
        return tape.cross_entropy(stage1_forward(tape, s.x_d, run.depth).logits, s.label);
      },
      schedule, make_rng(cfg.seed, kStreamShuffleStage1Depth));

  run.traces = stage1_traces(data, run.rgb, run.depth);
  return run;
}

inline const StageOneTraces& lookup_traces(const TraceTable& traces, const std::string& id) {
  auto it = traces.find(id);
  if (it == traces.end())
    fail(ErrorCode::MissingPrerequisite, "no stage-one trace for sample '" + id + "'");
  return it->second;
}

struct StageTwoRun {
  StageTwoModel model;
  PhaseLog log;
};

/// Trains the MAR model on L_r + L_d per sample; the stage-one traces are
/// constants.
inline StageTwoRun train_stage2(const Dataset& data, const TraceTable& traces,
                                const RunConfig& cfg) {
  cfg.validate();
  const std::vector<const ViewSample*> train = data.split(Split::Train);
  for (const ViewSample* s : train) lookup_traces(traces, s->id);
  StageTwoRun run;
  Rng init = make_rng(cfg.seed, kStreamInitStage2);
  run.model = StageTwoModel::random(data.dim_r, data.dim_d, cfg.hidden, data.classes, init, cfg.mar);
  const std::vector<ParamRef> params = param_refs(run.model, "stage2.");
  run.log = train_phase(
      "stage2", params, train,
      [&](Tape& tape, const ViewSample& s, std::size_t) {
        const StageOneTraces& z = traces.at(s.id);
        StageTwoOutput o = stage2_forward(tape, s, z.rgb, z.depth, run.model);
        return tape.add(tape.cross_entropy(o.logits_r, s.label),
                        tape.cross_entropy(o.logits_d, s.label));
      },
      {cfg.epochs_stage2, cfg.lr_stage2, cfg.batch_size, cfg.adam},
      make_rng(cfg.seed, kStreamShuffleStage2));
  return run;
}

struct FusionRun {
  FusionHead head;
  PhaseLog log;
};

/// Trains only the fusion head on the frozen stage-two probabilities.
inline FusionRun train_fusion(const Dataset& data, const StageTwoModel& stage2,
                              const TraceTable& traces, const RunConfig& cfg) {
  cfg.validate();
  const std::vector<const ViewSample*> train = data.split(Split::Train);
  std::vector<StageTwoResult> frozen(train.size());
  for (const ViewSample* s : train) lookup_traces(traces, s->id);
  parallel_chunks(train.size(), thread_count(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) frozen[k] = run_stage2(*train[k], traces.at(train[k]->id), stage2);
  });

  FusionRun run;
  Rng init = make_rng(cfg.seed, kStreamInitFusion);
  run.head = FusionHead::random(data.classes, init);
  const std::vector<ParamRef> params = param_refs(run.head, "fusion.");
  run.log = train_phase(
      "fusion", params, train,
      [&](Tape& tape, const ViewSample& s, std::size_t k) {
        Var p_r = tape.constant(frozen[k].probs_r);
        Var p_d = tape.constant(frozen[k].probs_d);
        return tape.cross_entropy(correlative_fusion(tape, p_r, p_d, run.head), s.label);
      },
      {cfg.epochs_fusion, cfg.lr_fusion, cfg.batch_size, cfg.adam},
      make_rng(cfg.seed, kStreamShuffleFusion));
  return run;
}

// --- evaluation -------------------------------------------------------------

struct HeadScore {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // rows: true class, cols: predicted

  friend bool operator==(const HeadScore&, const HeadScore&) = default;
};

inline HeadScore score_head(std::span<const std::size_t> labels,
                            std::span<const std::size_t> predicted, std::size_t classes) {
  if (labels.empty()) fail(ErrorCode::EmptyInput, "score_head: no samples");
  if (labels.size() != predicted.size())
    fail(ErrorCode::ShapeMismatch, "score_head: label and prediction counts differ");
  HeadScore s;
  s.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predicted[i] >= classes)
      fail(ErrorCode::LabelOutOfRange, "score_head: class index out of range");
    ++s.confusion[labels[i]][predicted[i]];
    hits += labels[i] == predicted[i];
  }
  s.accuracy = static_cast<double>(hits) / static_cast<double>(labels.size());
  return s;
}

/// How many phases a parameter set has been trained through.
enum class Phase : int { None = 0, Stage1 = 1, Stage2 = 2, Fusion = 3 };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::None: return "none";
    case Phase::Stage1: return "stage1";
    case Phase::Stage2: return "stage2";
    case Phase::Fusion: return "fusion";
  }
  return "?";
}

struct Evaluation {
  Split split = Split::Test;
  std::size_t count = 0;
  std::optional<HeadScore> stage1_r, stage1_d, rgb, depth, fusion;
};

inline std::vector<Prediction> predict_all(const std::vector<const ViewSample*>& samples,
                                           const CamParams& params) {
  std::vector<Prediction> out(samples.size());
  parallel_chunks(samples.size(), thread_count(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) out[k] = predict(*samples[k], params);
  });
  return out;
}

/// Scores every head trained by `done` on one split.
inline Evaluation evaluate(const Dataset& data, Split split, const CamParams& params,
                           Phase done = Phase::Fusion) {
  const std::vector<const ViewSample*> samples = data.split(split);
  if (samples.empty())
    fail(ErrorCode::EmptyInput, std::string("evaluate: the ") + to_string(split) + " split is empty");
  const std::vector<Prediction> preds = predict_all(samples, params);
  std::vector<std::size_t> labels;
  for (const ViewSample* s : samples) labels.push_back(s->label);
  auto head = [&](auto member) {
    std::vector<std::size_t> p;
    for (const Prediction& x : preds) p.push_back(x.*member);
    return score_head(labels, p, data.classes);
  };
  Evaluation ev;
  ev.split = split;
  ev.count = samples.size();
  if (done >= Phase::Stage1) {
    ev.stage1_r = head(&Prediction::stage1_class_r);
    ev.stage1_d = head(&Prediction::stage1_class_d);
  }
  if (done >= Phase::Stage2) {
    ev.rgb = head(&Prediction::class_r);
    ev.depth = head(&Prediction::class_d);
  }
  if (done >= Phase::Fusion) ev.fusion = head(&Prediction::class_fused);
  return ev;
}

// --- whole-run state and report --------------------------------------------

/// Everything a checkpoint holds.
struct TrainingState {
  RunConfig config;
  ModelDims dims;
  FeatureStats stats;
  CamParams params;
  Phase done = Phase::None;
};

inline TrainingState initial_state(const Dataset& data, const RunConfig& cfg,
                                   FeatureStats stats) {
  const ModelDims dims{data.dim_r, data.dim_d, cfg.hidden, data.classes};
  return {cfg, dims, std::move(stats), CamParams::zeros(dims, cfg.mar), Phase::None};
}

struct TrainReport {
  RunConfig config;
  ModelDims dims;
  std::vector<PhaseLog> phases;
  std::optional<Evaluation> train, test;
};

/// Runs one phase on prepared data, updating `state` and appending logs.
inline void run_phase(Phase phase, const Dataset& data, TrainingState& state,
                      std::vector<PhaseLog>& logs) {
  const RunConfig& cfg = state.config;
  const auto need = static_cast<Phase>(static_cast<int>(phase) - 1);
  if (state.done < need)
    fail(ErrorCode::MissingPrerequisite, std::string(to_string(phase)) + " needs a trained " +
                                             to_string(need) + " model");
  switch (phase) {
    case Phase::Stage1: {
      StageOneRun r = train_stage1(data, cfg);
      state.params.stage1_r = std::move(r.rgb);
      state.params.stage1_d = std::move(r.depth);
      logs.push_back(std::move(r.log_rgb));
      logs.push_back(std::move(r.log_depth));
      break;
    }
    case Phase::Stage2: {
      const TraceTable traces = stage1_traces(data, state.params.stage1_r, state.params.stage1_d);
      StageTwoRun r = train_stage2(data, traces, cfg);
      state.params.stage2 = std::move(r.model);
      logs.push_back(std::move(r.log));
      break;
    }
    case Phase::Fusion: {
      const TraceTable traces = stage1_traces(data, state.params.stage1_r, state.params.stage1_d);
      FusionRun r = train_fusion(data, state.params.stage2, traces, cfg);
      state.params.fusion = std::move(r.head);
      logs.push_back(std::move(r.log));
      break;
    }
    case Phase::None:
      fail(ErrorCode::InvalidArgument, "run_phase: no phase given");
  }
  state.done = phase;
}

inline TrainReport make_report(const Dataset& data, const TrainingState& state,
                               std::vector<PhaseLog> logs) {
  TrainReport rep{state.config, state.dims, std::move(logs), std::nullopt, std::nullopt};
  if (state.done == Phase::None) return rep;
  rep.train = evaluate(data, Split::Train, state.params, state.done);
  if (!data.split(Split::Test).empty())
    rep.test = evaluate(data, Split::Test, state.params, state.done);
  return rep;
}

/// All three phases on a raw dataset.
inline std::pair<TrainingState, TrainReport> train_all(const Dataset& raw, const RunConfig& cfg) {
  cfg.validate();
  PreparedData prep = prepare(raw, cfg);
  TrainingState state = initial_state(prep.data, cfg, std::move(prep.stats));
  std::vector<PhaseLog> logs;
  for (Phase p : {Phase::Stage1, Phase::Stage2, Phase::Fusion}) run_phase(p, prep.data, state, logs);
  TrainReport rep = make_report(prep.data, state, std::move(logs));
  return {std::move(state), std::move(rep)};
}

inline nlohmann::ordered_json to_json(const HeadScore& s) {
  return {{"accuracy", s.accuracy}, {"confusion", s.confusion}};
}

inline nlohmann::ordered_json to_json(const Evaluation& ev) {
  nlohmann::ordered_json j;
  j["split"] = to_string(ev.split);
  j["count"] = ev.count;
  nlohmann::ordered_json heads = nlohmann::ordered_json::object();
  auto put = [&](const char* key, const std::optional<HeadScore>& h) {
    if (h) heads[key] = to_json(*h);
  };
  put("stage1_rgb", ev.stage1_r);
  put("stage1_depth", ev.stage1_d);
  put("rgb", ev.rgb);
  put("depth", ev.depth);
  put("fusion", ev.fusion);
  j["heads"] = std::move(heads);
  return j;
}

/// The report without timings, so that identical runs give identical bytes.
inline nlohmann::ordered_json report_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["config"] = to_json(r.config);
  j["dims"] = {{"dim_rgb", r.dims.dim_r},
               {"dim_depth", r.dims.dim_d},
               {"hidden", r.dims.hidden},
               {"classes", r.dims.classes}};
  nlohmann::ordered_json phases = nlohmann::ordered_json::array();
  for (const PhaseLog& p : r.phases)
    phases.push_back({{"name", p.name}, {"initial_loss", p.initial_loss}, {"epoch_loss", p.epoch_loss}});
  j["phases"] = std::move(phases);
  j["train"] = r.train ? to_json(*r.train) : nlohmann::ordered_json(nullptr);
  j["test"] = r.test ? to_json(*r.test) : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json timing_json(const TrainReport& r) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const PhaseLog& p : r.phases) j[p.name + "_seconds"] = p.seconds;
  return j;
}

// --- ablation ---------------------------------------------------------------

/// Mean attention mass that RGB traces put on each class's depth-informative
/// frames, over samples whose pattern was planted in depth only.
struct AttentionShift {
  std::size_t samples = 0;
  double stage1_mass = 0.0;
  double stage2_mass = 0.0;
};

inline double trace_mass(const AttentionTrace& z, std::span<const std::size_t> frames) {
  double m = 0.0;
  for (std::size_t t : frames) {
    if (t >= z.size()) fail(ErrorCode::ShapeMismatch, "trace_mass: frame index out of range");
    m += z.scores[t];
  }
  return m;
}

inline AttentionShift attention_shift(const Dataset& data, Split split, const SynthManifest& truth,
                                      const CamParams& params) {
  std::vector<const ViewSample*> picked;
  for (const ViewSample* s : data.split(split)) {
    auto it = truth.signal_views.find(s->id);
    if (it != truth.signal_views.end() && it->second == SignalViews::DepthOnly) picked.push_back(s);
  }
  AttentionShift out;
  out.samples = picked.size();
  if (picked.empty()) return out;
  if (truth.depth_frames.size() != data.classes)
    fail(ErrorCode::ShapeMismatch, "attention_shift: manifest class count differs from dataset");
  const std::vector<Prediction> preds = predict_all(picked, params);
  for (std::size_t k = 0; k < picked.size(); ++k) {
    const auto& frames = truth.depth_frames[picked[k]->label];
    out.stage1_mass += trace_mass(preds[k].stage1_traces.rgb, frames);
    out.stage2_mass += trace_mass(preds[k].stage2_trace_r, frames);
  }
  out.stage1_mass /= static_cast<double>(picked.size());
  out.stage2_mass /= static_cast<double>(picked.size());
  return out;
}

struct AblationRow {
  std::string name;
  MarOptions options;
  double rgb = 0.0;
  double depth = 0.0;
  std::optional<double> fusion;  // absent for the baseline
  std::optional<AttentionShift> shift;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<PhaseLog> logs;
};

struct AblationVariant {
  const char* name;
  bool filter_rgb;
  bool filter_depth;
};

inline constexpr AblationVariant kAblationVariants[] = {
    {"CAM w/o MAR", false, false},
    {"CAM w/o RGB", false, true},
    {"CAM w/o Depth", true, false},
    {"CAM", true, true},
};

/// Test accuracies for the stage-one baseline and four stage-two
/// collaboration settings sharing that stage one. `raw` is standardized per
/// `cfg`; `truth` enables the attention-shift measurement.
inline AblationResult ablation_suite(const Dataset& raw, const RunConfig& cfg,
                                     const SynthManifest* truth = nullptr) {
  cfg.validate();
  const PreparedData prep = prepare(raw, cfg);
  const Dataset& data = prep.data;
  if (data.split(Split::Test).empty())
    fail(ErrorCode::EmptyInput, "ablation: the test split is empty");

  AblationResult result;
  StageOneRun s1 = train_stage1(data, cfg);
  result.logs.push_back(s1.log_rgb);
  result.logs.push_back(s1.log_depth);

  CamParams params = CamParams::zeros({data.dim_r, data.dim_d, cfg.hidden, data.classes});
  params.stage1_r = s1.rgb;
  params.stage1_d = s1.depth;
  const Evaluation base = evaluate(data, Split::Test, params, Phase::Stage1);
  AblationRow baseline{"LSTM (baseline)", {false, false, cfg.mar.hidden_from_collaborated},
                       base.stage1_r->accuracy, base.stage1_d->accuracy, std::nullopt, std::nullopt};
  result.rows.push_back(baseline);

  for (const AblationVariant& v : kAblationVariants) {
    RunConfig vc = cfg;
    vc.mar.filter_rgb = v.filter_rgb;
    vc.mar.filter_depth = v.filter_depth;
    StageTwoRun s2 = train_stage2(data, s1.traces, vc);
    FusionRun fu = train_fusion(data, s2.model, s1.traces, vc);
    s2.log.name = std::string(v.name) + "/stage2";
    fu.log.name = std::string(v.name) + "/fusion";
    result.logs.push_back(s2.log);
    result.logs.push_back(fu.log);
    params.stage2 = std::move(s2.model);
    params.fusion = std::move(fu.head);
    const Evaluation ev = evaluate(data, Split::Test, params, Phase::Fusion);
    AblationRow row{v.name, vc.mar, ev.rgb->accuracy, ev.depth->accuracy, ev.fusion->accuracy,
                    std::nullopt};
    if (truth) row.shift = attention_shift(data, Split::Test, *truth, params);
    result.rows.push_back(std::move(row));
  }
  return result;
}

inline nlohmann::ordered_json to_json(const AblationResult& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const AblationRow& row : r.rows) {
    nlohmann::ordered_json j;
    j["name"] = row.name;
    j["rgb"] = row.rgb;
    j["depth"] = row.depth;
    j["fusion"] = row.fusion ? nlohmann::ordered_json(*row.fusion) : nlohmann::ordered_json(nullptr);
    if (row.shift)
      j["attention_shift"] = {{"samples", row.shift->samples},
                              {"stage1_rgb_mass", row.shift->stage1_mass},
                              {"stage2_rgb_mass", row.shift->stage2_mass}};
    rows.push_back(std::move(j));
  }
  return {{"rows", std::move(rows)}};
}

}  // namespace cam
