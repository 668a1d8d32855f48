// Acceptance suite: one PASS/FAIL line per criterion, detail lines indented.
// Exit status is the number of failed criteria.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "cam/cam.hpp"

namespace fs = std::filesystem;
using namespace cam;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, const char* title, bool ok, const std::string& summary) {
  std::printf("%s  %d  %s: %s\n", ok ? "PASS" : "FAIL", id, title, summary.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <class... Args>
std::string format(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void detail_line(const std::string& s) {
  std::printf("        %s\n", s.c_str());
  std::fflush(stdout);
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.data) v = g(rng);
  return m;
}

std::vector<DiffArray*> arrays_of(const std::vector<ParamRef>& refs) {
  std::vector<DiffArray*> out;
  for (const ParamRef& r : refs) out.push_back(r.array);
  return out;
}

// --- 1 ----------------------------------------------------------------------

void gradient_correctness() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(2024, 1);
  std::uniform_int_distribution<std::size_t> hidden(1, 8), frames(1, 6), classes(2, 4), dim(1, 5);
  double worst = 0.0;
  std::size_t entries = 0;
  std::string worst_where = "-";
  auto note = [&](const char* what, int k, const GradCheckResult& r) {
    entries += r.entries_checked;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_where = format("%s config %d", what, k);
    }
  };
  for (int k = 0; k < 100; ++k) {
    const std::size_t H = hidden(rng), T = frames(rng), C = classes(rng);
    const std::size_t dr = dim(rng), dd = dim(rng);
    ViewSample s{"fd", random_matrix(T, dr, rng), random_matrix(T, dd, rng),
                 std::uniform_int_distribution<std::size_t>(0, C - 1)(rng), Split::Train};
    StageOneView vr = StageOneView::random(dr, H, C, rng), vd = StageOneView::random(dd, H, C, rng);
    StageTwoModel m2 = StageTwoModel::random(dr, dd, H, C, rng);
    FusionHead head = FusionHead::random(C, rng);
    const StageOneTraces z = run_stage1(s, vr, vd).traces;
    const StageTwoResult probs = run_stage2(s, z, m2);

    note("stage1", k,
         finite_diff_check(
             [&](auto& tape) { return tape.cross_entropy(stage1_forward(tape, s.x_r, vr).logits, s.label); },
             arrays_of(param_refs(vr)), 1e-5));
    note("stage2", k,
         finite_diff_check(
             [&](auto& tape) {
               StageTwoOutput o = stage2_forward(tape, s, z.rgb, z.depth, m2);
               return tape.add(tape.cross_entropy(o.logits_r, s.label),
                               tape.cross_entropy(o.logits_d, s.label));
             },
             arrays_of(param_refs(m2)), 1e-5));
    note("fusion", k,
         finite_diff_check(
             [&](auto& tape) {
               Var pr = tape.constant(probs.probs_r), pd = tape.constant(probs.probs_d);
               return tape.cross_entropy(correlative_fusion(tape, pr, pd, head), s.label);
             },
             arrays_of(param_refs(head)), 1e-5));
  }
  const double secs = seconds_since(t0);
  verdict(1, "gradient correctness", worst < 1e-4 && secs < 120.0,
          format("max relative error %.3g (worst at %s) over 100 configs x 3 losses, %zu entries, "
                 "%.1f s (limits 1e-4, 120 s)",
                 worst, worst_where.c_str(), entries, secs));
}

// --- 2 ----------------------------------------------------------------------

void reduction_identity() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(2024, 2);
  std::uniform_int_distribution<std::size_t> hidden(1, 8), frames(1, 8), dim(1, 6);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t H = hidden(rng), T = frames(rng), dr = dim(rng), dd = dim(rng);
    StageTwoModel m = StageTwoModel::random(dr, dd, H, 2, rng);
    const Matrix xr = random_matrix(T, dr, rng), xd = random_matrix(T, dd, rng);
    std::vector<double> zr(T), zd(T);
    for (std::size_t t = 0; t < T; ++t) {
      zr[t] = coin(rng) ? 1.0 : 0.0;
      zd[t] = 1.0 - zr[t];
    }
    Tape tape;
    std::vector<Var> fr, fd;
    for (std::size_t t = 0; t < T; ++t) {
      fr.push_back(tape.constant(xr.row(t)));
      fd.push_back(tape.constant(xd.row(t)));
    }
    // disabled filters make both collaborator gates exactly one
    const MarSequence seq =
        mar_encode(tape, fr, fd, zr, zd, m.lstm_r, m.lstm_d, m.collab, MarOptions{false, false, true});
    const auto a = lstm_encode(tape, fr, m.lstm_r), b = lstm_encode(tape, fd, m.lstm_d);
    auto diff = [&](Var u, Var v) {
      auto x = tape.value(u), y = tape.value(v);
      for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
    };
    for (std::size_t t = 0; t < T; ++t) {
      diff(seq.rgb[t].h, a[t].h);
      diff(seq.rgb[t].c, a[t].c);
      diff(seq.depth[t].h, b[t].h);
      diff(seq.depth[t].c, b[t].c);
    }
  }
  verdict(2, "reduction identity", worst <= 1e-12,
          format("max |MAR - LSTM| %.3g over 50 instances (limit 1e-12), %.2f s", worst,
                 seconds_since(t0)));
}

// --- 3 ----------------------------------------------------------------------

void normalization_invariants() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(2024, 3);
  std::uniform_int_distribution<std::size_t> small(1, 8), len(1, 30), cls(2, 10);
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0), unit(0.0, 1.0);
  double trace_err = 0.0, pair_err = 0.0, d_err = 0.0, sigma2 = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double scale = std::pow(10.0, log_scale(rng));
    // attention traces over random hidden sequences
    {
      const std::size_t H = small(rng), T = len(rng);
      AttentionParams p = AttentionParams::zeros(H, small(rng));
      p.visit([&](const auto&, DiffArray& a) {
        for (double& v : a.values) v = std::normal_distribution<double>(0.0, scale)(rng);
      });
      Tape tape;
      std::vector<Var> hs;
      for (std::size_t t = 0; t < T; ++t) hs.push_back(tape.constant(random_matrix(1, H, rng).row(0)));
      const AttentionTrace z = to_trace(tape, attention_scores(tape, hs, p));
      double sum = 0.0;
      for (double v : z.scores) sum += v;
      trace_err = std::max(trace_err, std::abs(sum - 1.0));
    }
    // paired normalization
    {
      const double zr = unit(rng) * scale, zd = unit(rng) / scale;
      const auto [a, b] = normalize_attention_pair(zr, zd);
      pair_err = std::max(pair_err, std::abs(a + b - 1.0));
    }
    // correlative matrix
    {
      const std::size_t C = cls(rng);
      Tape tape;
      Var pr = tape.softmax(tape.constant(random_matrix(1, C, rng, scale).row(0)));
      Var pd = tape.softmax(tape.constant(random_matrix(1, C, rng, scale).row(0)));
      auto d = tape.value(correlative_matrix(tape, pr, pd));
      double sum = 0.0;
      Eigen::MatrixXd m(C, C);
      for (std::size_t i = 0; i < C; ++i)
        for (std::size_t j = 0; j < C; ++j) {
          m(i, j) = d[i * C + j];
          sum += d[i * C + j];
        }
      d_err = std::max(d_err, std::abs(sum - 1.0));
      sigma2 = std::max(sigma2, Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(1));
    }
  }
  const bool ok = trace_err <= 1e-9 && pair_err <= 1e-12 && d_err <= 1e-9 && sigma2 < 1e-10;
  verdict(3, "normalization invariants", ok,
          format("over 1000 inputs: |sum Z - 1| %.3g (1e-9), |z'_r + z'_d - 1| %.3g (1e-12), "
                 "|sum D - 1| %.3g (1e-9), max sigma_2(D) %.3g (<1e-10), %.2f s",
                 trace_err, pair_err, d_err, sigma2, seconds_since(t0)));
}

// --- 4 ----------------------------------------------------------------------

void overfit_oracle() {
  const auto t0 = Clock::now();
  SynthSpec s;  // C=5, T=20
  s.per_class = 2;
  s.noise_std = 0.0;
  s.single_view_fraction = 0.0;
  s.test_fraction = 0.0;
  s.seed = 0;
  RunConfig cfg;  // default epoch budget
  cfg.hidden = 8;
  cfg.batch_size = 1;
  cfg.seed = 0;
  const auto [state, report] = train_all(generate_synthetic(s).dataset, cfg);
  const Evaluation& ev = *report.train;
  const double secs = seconds_since(t0);
  const bool ok = ev.count == 10 && ev.rgb->accuracy == 1.0 && ev.depth->accuracy == 1.0 &&
                  ev.fusion->accuracy == 1.0 && secs < 60.0;
  verdict(4, "overfit oracle", ok,
          format("10 noiseless samples, epochs %zu/%zu/%zu, train accuracy rgb %.2f depth %.2f "
                 "fusion %.2f, %.1f s (limit 60 s)",
                 cfg.epochs_stage1, cfg.epochs_stage2, cfg.epochs_fusion, ev.rgb->accuracy,
                 ev.depth->accuracy, ev.fusion->accuracy, secs));
}

// --- 5 and 6 ----------------------------------------------------------------

void ablation_and_shift() {
  const auto t0 = Clock::now();
  bool order_ok = true, shift_ok = true;
  std::string order_fail, shift_fail;
  for (std::uint64_t seed : {0, 1, 2}) {
    SynthSpec s;  // C=5, T=20, 100 per class, noise 0.5, disjoint frames
    s.dim_r = s.dim_d = 8;
    s.seed = seed;
    RunConfig cfg;
    cfg.hidden = 8;
    cfg.seed = seed;
    const SynthResult syn = generate_synthetic(s);
    const AblationResult r = ablation_suite(syn.dataset, cfg, &syn.manifest);
    for (const AblationRow& row : r.rows) {
      std::string line = format("seed %llu  %-16s rgb %.3f depth %.3f", (unsigned long long)seed,
                                row.name.c_str(), row.rgb, row.depth);
      if (row.fusion) line += format(" fusion %.3f", *row.fusion);
      if (row.shift)
        line += format("  rgb mass on depth-only frames %.3f -> %.3f (n=%zu)", row.shift->stage1_mass,
                       row.shift->stage2_mass, row.shift->samples);
      detail_line(line);
    }
    const AblationRow& base = r.rows.front();
    const AblationRow& cam = r.rows.back();
    const bool a = cam.rgb >= base.rgb && cam.depth >= base.depth;
    const bool b = *cam.fusion >= std::max(cam.rgb, cam.depth);
    if (!a) order_fail += format(" seed %llu (a)", (unsigned long long)seed);
    if (!b) order_fail += format(" seed %llu (b)", (unsigned long long)seed);
    order_ok = order_ok && a && b;
    const bool shifted = cam.shift->samples > 0 && cam.shift->stage2_mass > cam.shift->stage1_mass;
    if (!shifted) shift_fail += format(" seed %llu", (unsigned long long)seed);
    shift_ok = shift_ok && shifted;
  }
  const double secs = seconds_since(t0);
  verdict(5, "ablation ordering", order_ok && secs < 600.0,
          format("CAM >= baseline per view and fusion >= best view on seeds 0,1,2; %s; %.0f s "
                 "(limit 600 s)",
                 order_ok ? "all hold" : ("violated:" + order_fail).c_str(), secs));
  verdict(6, "attention shift", shift_ok,
          format("stage-2 RGB mass on depth-only frames exceeds stage-1 mass on seeds 0,1,2; %s",
                 shift_ok ? "all hold" : ("violated:" + shift_fail).c_str()));
}

// --- 7 and 8: through the command-line tool ----------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  int code = -1;
  std::string err;
};

Outcome cli(const fs::path& dir, const std::string& args) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string("'") + CAM_CLI + "' " + args + " >/dev/null 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void determinism(const fs::path& dir) {
  const auto t0 = Clock::now();
  const fs::path data = dir / "det.bin";
  const std::string flags = " --hidden 8 --seed 0";
  bool ok = cli(dir, "gen-data --out " + q(data) + " --per-class 20 --dim-rgb 8 --dim-depth 8").code == 0;
  for (const char* run : {"run_a", "run_b"})
    ok = ok && cli(dir, "train --phase all --data " + q(data) + " --out-dir " + q(dir / run) + flags).code == 0;
  std::size_t compared = 0;
  for (const char* f : {"stage1.ckpt.json", "stage2.ckpt.json", "fusion.ckpt.json", "report.json"}) {
    const std::string a = slurp(dir / "run_a" / f), b = slurp(dir / "run_b" / f);
    ok = ok && !a.empty() && a == b;
    ++compared;
  }
  verdict(7, "determinism", ok,
          format("two 'train --phase all --seed 0' runs, %zu files byte-identical: %s, %.1f s",
                 compared, ok ? "yes" : "no", seconds_since(t0)));
}

void serialization(const fs::path& dir) {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };

  SynthSpec s;
  s.per_class = 6;
  s.dim_r = 5;
  s.dim_d = 3;
  const Dataset ds = generate_synthetic(s).dataset;
  save_dataset(ds, dir / "a.bin");
  const Dataset back = load_dataset(dir / "a.bin");
  save_dataset(back, dir / "b.bin");
  check(slurp(dir / "a.bin") == slurp(dir / "b.bin"), "dataset bytes differ after round-trip");
  bool same = back.samples.size() == ds.samples.size();
  for (std::size_t k = 0; same && k < ds.samples.size(); ++k)
    same = back.samples[k].x_r.data == ds.samples[k].x_r.data &&
           back.samples[k].x_d.data == ds.samples[k].x_d.data && back.samples[k].id == ds.samples[k].id &&
           back.samples[k].label == ds.samples[k].label && back.samples[k].split == ds.samples[k].split;
  check(same, "dataset values differ after round-trip");

  RunConfig cfg;
  cfg.hidden = 4;
  cfg.epochs_stage1 = cfg.epochs_stage2 = cfg.epochs_fusion = 3;
  const TrainingState st = train_all(ds, cfg).first;
  const fs::path ckpt = dir / "model.json";
  save_checkpoint(st, ckpt);
  const TrainingState st2 = load_checkpoint(ckpt);
  check(checkpoint_text(st2) == checkpoint_text(st), "checkpoint text differs after round-trip");
  std::vector<std::vector<double>> va, vb;
  st.params.visit([&](const auto&, const DiffArray& a) { va.push_back(a.values); });
  st2.params.visit([&](const auto&, const DiffArray& a) { vb.push_back(a.values); });
  check(va == vb, "checkpoint parameters differ after round-trip");

  // corrupt files through the command-line tool: expected exit code and error prefix
  const std::string good = slurp(dir / "a.bin");
  auto write = [&](const fs::path& p, const std::string& bytes) {
    std::ofstream(p, std::ios::binary) << bytes;
  };
  struct Case {
    std::string name;
    fs::path data, ckpt;
    int code;
    std::string prefix;
  };
  std::vector<Case> cases;
  write(dir / "truncated.bin", good.substr(0, good.size() / 2));
  cases.push_back({"truncated dataset", dir / "truncated.bin", ckpt, 2, "error:corrupt_header:"});
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  write(dir / "magic.bin", bad_magic);
  cases.push_back({"bad magic", dir / "magic.bin", ckpt, 2, "error:corrupt_header:"});
  std::string future = good;
  future[8] = static_cast<char>(future[8] + 1);  // the version word follows the magic
  write(dir / "future.bin", future);
  cases.push_back({"dataset version", dir / "future.bin", ckpt, 2, "error:unknown_version:"});

  auto doc = nlohmann::json::parse(slurp(ckpt));
  doc["format_version"] = 2;
  write(dir / "future.json", doc.dump());
  cases.push_back({"checkpoint version", dir / "a.bin", dir / "future.json", 2, "error:unknown_version:"});
  doc = nlohmann::json::parse(slurp(ckpt));
  doc["params"].erase("fusion.classifier.b");
  write(dir / "missing.json", doc.dump());
  cases.push_back({"missing block", dir / "a.bin", dir / "missing.json", 2, "error:corrupt_header:"});
  doc = nlohmann::json::parse(slurp(ckpt));
  doc["params"]["fusion.classifier.W"]["shape"] = {1, 25 * 5};
  write(dir / "shape.json", doc.dump());
  cases.push_back({"block shape", dir / "a.bin", dir / "shape.json", 5, "error:shape_mismatch:"});
  const std::string ck = slurp(ckpt);
  write(dir / "cut.json", ck.substr(0, ck.size() / 2));
  cases.push_back({"truncated checkpoint", dir / "a.bin", dir / "cut.json", 2, "error:corrupt_header:"});
  SynthSpec wide = s;
  wide.dim_r = 6;
  save_dataset(generate_synthetic(wide).dataset, dir / "wide.bin");
  cases.push_back({"data/checkpoint dims", dir / "wide.bin", ckpt, 5, "error:shape_mismatch:"});

  for (const Case& c : cases) {
    const Outcome o = cli(dir, "eval --data " + q(c.data) + " --checkpoint " + q(c.ckpt));
    const bool ok = o.code == c.code && o.err.rfind(c.prefix, 0) == 0;
    detail_line(format("%-22s exit %d (want %d)  %s", c.name.c_str(), o.code, c.code,
                       o.err.substr(0, o.err.find('\n')).c_str()));
    check(ok, c.name);
  }
  std::string summary = format("dataset and checkpoint round-trips bit-exact, %zu corrupt files rejected", cases.size());
  if (!problems.empty()) {
    summary = "problems:";
    for (const std::string& p : problems) summary += " [" + p + "]";
  }
  verdict(8, "serialization", problems.empty(), summary);
}

}  // namespace

int main() {
  const fs::path dir = fs::temp_directory_path() / ("cam_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::vector<std::function<void()>> steps = {
      gradient_correctness, reduction_identity, normalization_invariants, overfit_oracle,
      ablation_and_shift, [&] { determinism(dir); }, [&] { serialization(dir); }};
  for (const auto& step : steps) {
    try {
      step();
    } catch (const std::exception& e) {
      std::printf("FAIL  -  aborted: %s\n", e.what());
      ++failures;
    }
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures;
}
