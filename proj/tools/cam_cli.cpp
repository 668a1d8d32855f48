// Command-line front end: gen-data, train, eval, ablation, gradcheck and
// export-attention. Errors go to stderr as one "error:<code>: message" line.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cam/cam.hpp"

namespace fs = std::filesystem;
using namespace cam;

namespace {

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingPrerequisite: return 3;
    case ErrorCode::NonFinite: return 4;
    case ErrorCode::ShapeMismatch: return 5;
    case ErrorCode::UnknownSample: return 6;
    default: return 2;
  }
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed4(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 4);
  return std::string(buf, res.ptr);
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  detail::write_text_atomic(path, j.dump(2) + "\n");
}

std::string confusion_csv(const HeadScore& s) {
  std::ostringstream out;
  const std::size_t C = s.confusion.size();
  for (std::size_t c = 0; c < C; ++c) out << (c ? "," : "") << "pred_" << c;
  out << '\n';
  for (const auto& row : s.confusion) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
  return out.str();
}

// --- gen-data ---------------------------------------------------------------

struct GenArgs {
  SynthSpec spec;
  std::string out;
};

int cmd_gen_data(const GenArgs& a) {
  const SynthResult syn = generate_synthetic(a.spec);
  const Dataset& ds = syn.dataset;
  const FeatureStats stats = fit_feature_stats(ds);
  save_dataset(ds, a.out);
  save_manifest(manifest_path_for(a.out), ds, stats, &a.spec, &syn.manifest);
  std::cout << "classes=" << ds.classes << " frames=" << ds.frames << " dim_rgb=" << ds.dim_r
            << " dim_depth=" << ds.dim_d << " train=" << ds.split(Split::Train).size()
            << " test=" << ds.split(Split::Test).size() << "\n";
  return 0;
}

// --- config assembly --------------------------------------------------------

struct ConfigFlags {
  std::string config_file;
  std::optional<std::size_t> hidden, batch_size, epochs_stage1, epochs_stage2, epochs_fusion;
  std::optional<double> lr_stage1, lr_stage2, lr_fusion;
  std::optional<std::uint64_t> seed;
  bool no_standardize = false;
  bool no_filter_rgb = false;
  bool no_filter_depth = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file (flags take precedence)");
    app->add_option("--hidden", hidden, "hidden size of every encoder and attention");
    app->add_option("--batch-size", batch_size);
    app->add_option("--epochs-stage1", epochs_stage1);
    app->add_option("--epochs-stage2", epochs_stage2);
    app->add_option("--epochs-fusion", epochs_fusion);
    app->add_option("--lr-stage1", lr_stage1);
    app->add_option("--lr-stage2", lr_stage2);
    app->add_option("--lr-fusion", lr_fusion);
    app->add_option("--seed", seed);
    app->add_flag("--no-standardize", no_standardize, "skip per-dimension z-scoring");
    app->add_flag("--no-filter-rgb", no_filter_rgb, "disable filtering of the RGB cell");
    app->add_flag("--no-filter-depth", no_filter_depth, "disable filtering of the depth cell");
  }

  /// base < config file < flags
  RunConfig apply(RunConfig base) const {
    if (!config_file.empty()) {
      const std::vector<char> bytes = detail::read_file(config_file);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, "config file '" + config_file + "': " + e.what());
      }
      base = config_from_json(j, base);
    }
    if (hidden) base.hidden = *hidden;
    if (batch_size) base.batch_size = *batch_size;
    if (epochs_stage1) base.epochs_stage1 = *epochs_stage1;
    if (epochs_stage2) base.epochs_stage2 = *epochs_stage2;
    if (epochs_fusion) base.epochs_fusion = *epochs_fusion;
    if (lr_stage1) base.lr_stage1 = *lr_stage1;
    if (lr_stage2) base.lr_stage2 = *lr_stage2;
    if (lr_fusion) base.lr_fusion = *lr_fusion;
    if (seed) base.seed = *seed;
    if (no_standardize) base.standardize = false;
    if (no_filter_rgb) base.mar.filter_rgb = false;
    if (no_filter_depth) base.mar.filter_depth = false;
    base.validate();
    return base;
  }
};

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out_dir;
  std::string phase = "all";
  ConfigFlags flags;
};

fs::path checkpoint_path(const fs::path& dir, Phase p) {
  return dir / (std::string(to_string(p)) + ".ckpt.json");
}

void print_accuracies(const Evaluation& ev) {
  std::cout << to_string(ev.split) << " n=" << ev.count;
  auto put = [](const char* name, const std::optional<HeadScore>& h) {
    if (h) std::cout << ' ' << name << '=' << fixed4(h->accuracy);
  };
  put("stage1_rgb", ev.stage1_r);
  put("stage1_depth", ev.stage1_d);
  put("rgb", ev.rgb);
  put("depth", ev.depth);
  put("fusion", ev.fusion);
  std::cout << '\n';
}

int cmd_train(const TrainArgs& a) {
  const Dataset raw = load_dataset(a.data);
  fs::create_directories(a.out_dir);

  std::vector<Phase> phases;
  if (a.phase == "all") phases = {Phase::Stage1, Phase::Stage2, Phase::Fusion};
  else if (a.phase == "stage1") phases = {Phase::Stage1};
  else if (a.phase == "stage2") phases = {Phase::Stage2};
  else if (a.phase == "fusion") phases = {Phase::Fusion};
  else fail(ErrorCode::InvalidArgument, "unknown phase '" + a.phase + "'");

  TrainingState state;
  Dataset data;
  if (phases.front() == Phase::Stage1) {
    const RunConfig cfg = a.flags.apply({});
    PreparedData prep = prepare(raw, cfg);
    data = std::move(prep.data);
    state = initial_state(data, cfg, std::move(prep.stats));
  } else {
    const auto need = static_cast<Phase>(static_cast<int>(phases.front()) - 1);
    const fs::path prev = checkpoint_path(a.out_dir, need);
    if (!fs::exists(prev))
      fail(ErrorCode::MissingPrerequisite, a.phase + " needs the " + to_string(need) +
                                               " checkpoint '" + prev.string() + "'");
    state = load_checkpoint(prev);
    const RunConfig cfg = a.flags.apply(state.config);
    if (cfg.hidden != state.dims.hidden)
      fail(ErrorCode::ShapeMismatch, "checkpoint hidden " + std::to_string(state.dims.hidden) +
                                         " but config hidden " + std::to_string(cfg.hidden));
    state.config = cfg;
    state.params.stage2.options = cfg.mar;
    data = apply_stats(raw, state.stats);
    if (data.dim_r != state.dims.dim_r || data.dim_d != state.dims.dim_d ||
        data.classes != state.dims.classes)
      fail(ErrorCode::ShapeMismatch, "data dims (" + std::to_string(data.dim_r) + ", " +
                                         std::to_string(data.dim_d) + ", " +
                                         std::to_string(data.classes) + ") differ from checkpoint (" +
                                         std::to_string(state.dims.dim_r) + ", " +
                                         std::to_string(state.dims.dim_d) + ", " +
                                         std::to_string(state.dims.classes) + ")");
    require_train_coverage(data);
  }

  std::vector<PhaseLog> logs;
  for (Phase p : phases) {
    run_phase(p, data, state, logs);
    save_checkpoint(state, checkpoint_path(a.out_dir, p));
  }
  const TrainReport rep = make_report(data, state, std::move(logs));
  write_json(fs::path(a.out_dir) / "report.json", report_json(rep));
  write_json(fs::path(a.out_dir) / "timing.json", timing_json(rep));
  if (rep.train) print_accuracies(*rep.train);
  if (rep.test) print_accuracies(*rep.test);
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string out_dir;
  std::string split = "test";
  std::optional<std::size_t> hidden;
};

/// Loads a checkpoint and the data it applies to, checking their dims agree.
std::pair<TrainingState, Dataset> load_pair(const std::string& data_path, const std::string& ckpt) {
  TrainingState state = load_checkpoint(ckpt);
  Dataset data = load_dataset(data_path);
  if (data.dim_r != state.dims.dim_r || data.dim_d != state.dims.dim_d ||
      data.classes != state.dims.classes)
    fail(ErrorCode::ShapeMismatch,
         "checkpoint expects dim_rgb=" + std::to_string(state.dims.dim_r) +
             " dim_depth=" + std::to_string(state.dims.dim_d) +
             " classes=" + std::to_string(state.dims.classes) + ", data has dim_rgb=" +
             std::to_string(data.dim_r) + " dim_depth=" + std::to_string(data.dim_d) +
             " classes=" + std::to_string(data.classes));
  Dataset prepared = apply_stats(data, state.stats);
  return {std::move(state), std::move(prepared)};
}

int cmd_eval(const EvalArgs& a) {
  auto [state, data] = load_pair(a.data, a.checkpoint);
  if (a.hidden && *a.hidden != state.dims.hidden)
    fail(ErrorCode::ShapeMismatch, "checkpoint hidden " + std::to_string(state.dims.hidden) +
                                       " differs from requested hidden " + std::to_string(*a.hidden));
  if (state.done == Phase::None) fail(ErrorCode::MissingPrerequisite, "checkpoint holds no trained phase");
  Split split;
  if (a.split == "test") split = Split::Test;
  else if (a.split == "train") split = Split::Train;
  else fail(ErrorCode::InvalidArgument, "unknown split '" + a.split + "'");

  const Evaluation ev = evaluate(data, split, state.params, state.done);
  print_accuracies(ev);
  if (!a.out_dir.empty()) {
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    auto put = [&](const char* name, const std::optional<HeadScore>& h) {
      if (h) detail::write_text_atomic(dir / (std::string("confusion_") + name + ".csv"), confusion_csv(*h));
    };
    put("stage1_rgb", ev.stage1_r);
    put("stage1_depth", ev.stage1_d);
    put("rgb", ev.rgb);
    put("depth", ev.depth);
    put("fusion", ev.fusion);
    write_json(dir / "eval.json", to_json(ev));
  }
  return 0;
}

// --- ablation ---------------------------------------------------------------

struct AblationArgs {
  std::string data;
  std::string out;
  ConfigFlags flags;
};

int cmd_ablation(const AblationArgs& a) {
  const Dataset raw = load_dataset(a.data);
  const RunConfig cfg = a.flags.apply({});
  std::optional<SynthManifest> truth;
  const fs::path mpath = manifest_path_for(a.data);
  if (fs::exists(mpath)) {
    truth = load_manifest_truth(mpath);
    if (truth->depth_frames.empty()) truth.reset();
  }
  const AblationResult r = ablation_suite(raw, cfg, truth ? &*truth : nullptr);
  std::printf("%-18s %-8s %-8s %-8s\n", "model", "rgb", "depth", "fusion");
  for (const AblationRow& row : r.rows)
    std::printf("%-18s %-8s %-8s %-8s\n", row.name.c_str(), fixed4(row.rgb).c_str(),
                fixed4(row.depth).c_str(), row.fusion ? fixed4(*row.fusion).c_str() : "-");
  if (!a.out.empty()) {
    nlohmann::ordered_json j = to_json(r);
    j["config"] = to_json(cfg);
    write_json(a.out, j);
  }
  return 0;
}

// --- gradcheck --------------------------------------------------------------

struct GradArgs {
  std::size_t hidden = 4;
  std::size_t frames = 5;
  std::size_t dim = 4;
  std::size_t classes = 3;
  std::uint64_t seed = 0;
  double epsilon = 1e-5;
};

std::vector<DiffArray*> arrays_of(std::vector<ParamRef> refs) {
  std::vector<DiffArray*> out;
  for (const ParamRef& r : refs) out.push_back(r.array);
  return out;
}

int cmd_gradcheck(const GradArgs& a) {
  if (a.hidden == 0 || a.hidden > 16)
    fail(ErrorCode::InvalidArgument, "gradcheck: --hidden must lie in [1, 16], got " + std::to_string(a.hidden));
  if (a.frames == 0 || a.frames > 8)
    fail(ErrorCode::InvalidArgument, "gradcheck: --frames must lie in [1, 8], got " + std::to_string(a.frames));
  if (a.dim == 0 || a.dim > 16)
    fail(ErrorCode::InvalidArgument, "gradcheck: --dim must lie in [1, 16], got " + std::to_string(a.dim));
  if (a.classes < 2 || a.classes > 8)
    fail(ErrorCode::InvalidArgument, "gradcheck: --classes must lie in [2, 8], got " + std::to_string(a.classes));

  Rng rng = make_rng(a.seed, 0xC4EC);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_matrix = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.data) v = gauss(rng);
    return m;
  };
  ViewSample s{"gradcheck", random_matrix(a.frames, a.dim), random_matrix(a.frames, a.dim),
               a.seed % a.classes, Split::Train};
  StageOneView view = StageOneView::random(a.dim, a.hidden, a.classes, rng);
  StageTwoModel m2 = StageTwoModel::random(a.dim, a.dim, a.hidden, a.classes, rng);
  FusionHead head = FusionHead::random(a.classes, rng);
  const StageOneTraces z = run_stage1(s, view, view).traces;
  const StageTwoResult probs = run_stage2(s, z, m2);

  double worst = 0.0;
  auto report = [&](const char* name, const GradCheckResult& r) {
    std::cout << name << " max_relative_error=" << fmt(r.max_relative_error)
              << " entries=" << r.entries_checked << '\n';
    worst = std::max(worst, r.max_relative_error);
  };
  report("stage1", finite_diff_check(
                       [&](auto& tape) {
                         return tape.cross_entropy(stage1_forward(tape, s.x_r, view).logits, s.label);
                       },
                       arrays_of(param_refs(view)), a.epsilon));
  report("stage2", finite_diff_check(
                       [&](auto& tape) {
                         StageTwoOutput o = stage2_forward(tape, s, z.rgb, z.depth, m2);
                         return tape.add(tape.cross_entropy(o.logits_r, s.label),
                                         tape.cross_entropy(o.logits_d, s.label));
                       },
                       arrays_of(param_refs(m2)), a.epsilon));
  report("fusion", finite_diff_check(
                       [&](auto& tape) {
                         Var pr = tape.constant(probs.probs_r);
                         Var pd = tape.constant(probs.probs_d);
                         return tape.cross_entropy(correlative_fusion(tape, pr, pd, head), s.label);
                       },
                       arrays_of(param_refs(head)), a.epsilon));
  const bool ok = worst < 1e-4;
  std::cout << (ok ? "PASS" : "FAIL") << " worst=" << fmt(worst) << '\n';
  return ok ? 0 : 1;
}

// --- export-attention -------------------------------------------------------

struct ExportArgs {
  std::string data;
  std::string checkpoint;
  std::vector<std::string> ids;
  std::string out;
};

int cmd_export_attention(const ExportArgs& a) {
  auto [state, data] = load_pair(a.data, a.checkpoint);
  if (state.done < Phase::Stage2)
    fail(ErrorCode::MissingPrerequisite, "export-attention needs a stage2 or fusion checkpoint");
  std::vector<const ViewSample*> picked;
  for (const std::string& id : a.ids) {
    const ViewSample* s = data.find(id);
    if (!s) fail(ErrorCode::UnknownSample, "unknown sample id '" + id + "'");
    picked.push_back(s);
  }
  const std::vector<Prediction> preds = predict_all(picked, state.params);
  std::string csv = "sample_id,view,stage,t,z\n";
  auto rows = [&](const std::string& id, const char* view, int stage, const AttentionTrace& z) {
    for (std::size_t t = 0; t < z.size(); ++t)
      csv += id + ',' + view + ',' + std::to_string(stage) + ',' + std::to_string(t) + ',' +
             fmt(z.scores[t]) + '\n';
  };
  for (std::size_t k = 0; k < picked.size(); ++k) {
    rows(picked[k]->id, "r", 1, preds[k].stage1_traces.rgb);
    rows(picked[k]->id, "d", 1, preds[k].stage1_traces.depth);
    rows(picked[k]->id, "r", 2, preds[k].stage2_trace_r);
    rows(picked[k]->id, "d", 2, preds[k].stage2_trace_d);
  }
  detail::write_text_atomic(a.out, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage collaborative attention for two-view sequence classification"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all");

  GenArgs gen;
  CLI::App* c_gen = app.add_subcommand("gen-data", "generate a synthetic two-view dataset");
  c_gen->add_option("--out", gen.out, "dataset path; the manifest is written beside it")->required();
  c_gen->add_option("--classes", gen.spec.classes);
  c_gen->add_option("--frames", gen.spec.frames);
  c_gen->add_option("--dim-rgb", gen.spec.dim_r);
  c_gen->add_option("--dim-depth", gen.spec.dim_d);
  c_gen->add_option("--per-class", gen.spec.per_class);
  c_gen->add_option("--noise", gen.spec.noise_std, "noise standard deviation");
  c_gen->add_option("--signal-frames", gen.spec.signal_frames, "informative frames per view");
  c_gen->add_option("--overlap", gen.spec.overlap, "fraction of depth frames shared with RGB");
  c_gen->add_option("--single-view-fraction", gen.spec.single_view_fraction);
  c_gen->add_option("--test-fraction", gen.spec.test_fraction);
  c_gen->add_option("--seed", gen.spec.seed);

  TrainArgs train;
  CLI::App* c_train = app.add_subcommand("train", "train one phase or all three");
  c_train->add_option("--data", train.data)->required();
  c_train->add_option("--out-dir", train.out_dir, "checkpoints and report")->required();
  c_train->add_option("--phase", train.phase)->check(CLI::IsMember({"stage1", "stage2", "fusion", "all"}));
  train.flags.add_to(c_train);

  EvalArgs ev;
  CLI::App* c_eval = app.add_subcommand("eval", "accuracy and confusion matrices");
  c_eval->add_option("--data", ev.data)->required();
  c_eval->add_option("--checkpoint", ev.checkpoint)->required();
  c_eval->add_option("--out-dir", ev.out_dir, "where to write confusion CSVs");
  c_eval->add_option("--split", ev.split)->check(CLI::IsMember({"train", "test"}));
  c_eval->add_option("--hidden", ev.hidden, "expected hidden size of the checkpoint");

  AblationArgs abl;
  CLI::App* c_abl = app.add_subcommand("ablation", "baseline, three collaboration ablations and full model");
  c_abl->add_option("--data", abl.data)->required();
  c_abl->add_option("--out", abl.out, "JSON table");
  abl.flags.add_to(c_abl);

  GradArgs grad;
  CLI::App* c_grad = app.add_subcommand("gradcheck", "finite-difference check of all three losses");
  c_grad->add_option("--hidden", grad.hidden);
  c_grad->add_option("--frames", grad.frames);
  c_grad->add_option("--dim", grad.dim);
  c_grad->add_option("--classes", grad.classes);
  c_grad->add_option("--seed", grad.seed);
  c_grad->add_option("--epsilon", grad.epsilon);

  ExportArgs ex;
  CLI::App* c_ex = app.add_subcommand("export-attention", "stage-one and stage-two traces as CSV");
  c_ex->add_option("--data", ex.data)->required();
  c_ex->add_option("--checkpoint", ex.checkpoint)->required();
  c_ex->add_option("--ids", ex.ids, "sample ids")->required()->delimiter(',');
  c_ex->add_option("--out", ex.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error:usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*c_gen) return cmd_gen_data(gen);
    if (*c_train) return cmd_train(train);
    if (*c_eval) return cmd_eval(ev);
    if (*c_abl) return cmd_ablation(abl);
    if (*c_grad) return cmd_gradcheck(grad);
    if (*c_ex) return cmd_export_attention(ex);
  } catch (const Error& e) {
    std::cerr << "error:" << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error:internal: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
