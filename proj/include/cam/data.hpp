#pragma once

// Two-view sequence datasets: the in-memory types, fixed-length
// normalization, per-dimension standardization and the synthetic generator.
// File I/O lives in dataset_io.hpp.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cam/error.hpp"
#include "cam/matrix.hpp"
#include "cam/random.hpp"

namespace cam {

enum class Split : std::uint8_t { Train = 0, Test = 1 };

inline const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

struct ViewSample {
  std::string id;
  Matrix x_r;  // frames x d_rgb
  Matrix x_d;  // frames x d_depth
  std::size_t label = 0;
  Split split = Split::Train;

  friend bool operator==(const ViewSample&, const ViewSample&) = default;
};

struct Dataset {
  std::size_t classes = 0;
  std::size_t frames = 0;
  std::size_t dim_r = 0;
  std::size_t dim_d = 0;
  std::vector<std::string> class_names;
  std::vector<ViewSample> samples;

  std::vector<const ViewSample*> split(Split s) const {
    std::vector<const ViewSample*> out;
    for (const ViewSample& v : samples)
      if (v.split == s) out.push_back(&v);
    return out;
  }

  const ViewSample* find(const std::string& id) const {
    for (const ViewSample& v : samples)
      if (v.id == id) return &v;
    return nullptr;
  }

  /// Homogeneous dims, labels in range, finite values, unique ids.
  void validate() const {
    if (classes == 0 || frames == 0 || dim_r == 0 || dim_d == 0)
      fail(ErrorCode::InvalidArgument, "dataset: zero dimension");
    if (class_names.size() != classes)
      fail(ErrorCode::ShapeMismatch, "dataset: class name count differs from class count");
    std::set<std::string> ids;
    for (const ViewSample& s : samples) {
      if (s.x_r.rows != frames || s.x_r.cols != dim_r || s.x_d.rows != frames ||
          s.x_d.cols != dim_d)
        fail(ErrorCode::ShapeMismatch,
             "dataset: sample '" + s.id + "' has shape rgb " + std::to_string(s.x_r.rows) + "x" +
                 std::to_string(s.x_r.cols) + ", depth " + std::to_string(s.x_d.rows) + "x" +
                 std::to_string(s.x_d.cols) + "; expected " + std::to_string(frames) + "x" +
                 std::to_string(dim_r) + " and " + std::to_string(frames) + "x" +
                 std::to_string(dim_d));
      if (s.label >= classes)
        fail(ErrorCode::LabelOutOfRange, "dataset: sample '" + s.id + "' label out of range");
      for (const Matrix* m : {&s.x_r, &s.x_d})
        for (double v : m->data)
          if (!std::isfinite(v))
            fail(ErrorCode::NonFinite, "dataset: sample '" + s.id + "' has a non-finite value");
      if (!ids.insert(s.id).second)
        fail(ErrorCode::InvalidArgument, "dataset: duplicate sample id '" + s.id + "'");
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Cuts a longer sequence to its first `target` frames, or tiles a shorter
/// one end to end and truncates.
inline Matrix normalize_length(const Matrix& x, std::size_t target) {
  if (x.rows == 0) fail(ErrorCode::EmptyInput, "normalize_length: empty sequence");
  if (target == 0) fail(ErrorCode::InvalidArgument, "normalize_length: target length is zero");
  Matrix out(target, x.cols);
  for (std::size_t t = 0; t < target; ++t) {
    auto src = x.row(t % x.rows);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

// --- standardization --------------------------------------------------------

/// Per-dimension mean and standard deviation for each view.
struct FeatureStats {
  std::vector<double> mean_r, std_r, mean_d, std_d;

  bool empty() const { return mean_r.empty(); }
  friend bool operator==(const FeatureStats&, const FeatureStats&) = default;
};

namespace detail {
inline void column_stats(const std::vector<const Matrix*>& ms, std::size_t cols,
                         std::vector<double>& mean, std::vector<double>& sd) {
  mean.assign(cols, 0.0);
  sd.assign(cols, 0.0);
  std::size_t n = 0;
  for (const Matrix* m : ms) {
    for (std::size_t t = 0; t < m->rows; ++t)
      for (std::size_t j = 0; j < cols; ++j) mean[j] += (*m)(t, j);
    n += m->rows;
  }
  if (n == 0) fail(ErrorCode::EmptyInput, "feature statistics: no frames");
  for (double& v : mean) v /= static_cast<double>(n);
  for (const Matrix* m : ms)
    for (std::size_t t = 0; t < m->rows; ++t)
      for (std::size_t j = 0; j < cols; ++j) {
        const double d = (*m)(t, j) - mean[j];
        sd[j] += d * d;
      }
  // constant dimensions keep unit scale
  for (double& v : sd) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v < 1e-12) v = 1.0;
  }
}
}  // namespace detail

inline FeatureStats fit_feature_stats(const Dataset& data) {
  std::vector<const Matrix*> r, d;
  for (const ViewSample& s : data.samples)
    if (s.split == Split::Train) {
      r.push_back(&s.x_r);
      d.push_back(&s.x_d);
    }
  if (r.empty()) fail(ErrorCode::EmptyInput, "feature statistics: no training samples");
  FeatureStats st;
  detail::column_stats(r, data.dim_r, st.mean_r, st.std_r);
  detail::column_stats(d, data.dim_d, st.mean_d, st.std_d);
  return st;
}

inline Dataset standardize(Dataset data, const FeatureStats& st) {
  if (st.mean_r.size() != data.dim_r || st.mean_d.size() != data.dim_d)
    fail(ErrorCode::ShapeMismatch, "standardize: statistics do not match dataset dims");
  for (ViewSample& s : data.samples) {
    for (std::size_t t = 0; t < s.x_r.rows; ++t)
      for (std::size_t j = 0; j < s.x_r.cols; ++j)
        s.x_r(t, j) = (s.x_r(t, j) - st.mean_r[j]) / st.std_r[j];
    for (std::size_t t = 0; t < s.x_d.rows; ++t)
      for (std::size_t j = 0; j < s.x_d.cols; ++j)
        s.x_d(t, j) = (s.x_d(t, j) - st.mean_d[j]) / st.std_d[j];
  }
  return data;
}

// --- synthetic generator ----------------------------------------------------

struct SynthSpec {
  std::size_t classes = 5;
  std::size_t frames = 20;
  std::size_t dim_r = 16;
  std::size_t dim_d = 16;
  std::size_t per_class = 100;
  double noise_std = 0.5;
  std::size_t signal_frames = 4;  // informative frames per view
  double overlap = 0.0;           // fraction of depth frames shared with RGB
  /// Fraction of samples whose pattern is planted in one view only, split
  /// evenly between RGB-only and depth-only.
  double single_view_fraction = 0.4;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    auto bad = [](const std::string& flag, const std::string& why) {
      fail(ErrorCode::InvalidArgument, "invalid synthetic spec: " + flag + ": " + why);
    };
    if (classes < 2) bad("classes", "need at least 2");
    if (frames == 0) bad("frames", "must be >= 1");
    if (dim_r == 0) bad("dim-rgb", "must be >= 1");
    if (dim_d == 0) bad("dim-depth", "must be >= 1");
    if (per_class == 0) bad("per-class", "must be >= 1");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) bad("noise", "must be >= 0");
    if (signal_frames == 0) bad("signal-frames", "must be >= 1");
    if (signal_frames > frames)
      bad("signal-frames", std::to_string(signal_frames) + " exceeds frames " +
                               std::to_string(frames));
    if (!(overlap >= 0.0 && overlap <= 1.0)) bad("overlap", "must lie in [0, 1]");
    if (2 * signal_frames - shared_frames() > frames)
      bad("signal-frames", "RGB and depth informative frames need " +
                               std::to_string(2 * signal_frames - shared_frames()) +
                               " distinct frames but only " + std::to_string(frames) + " exist");
    if (!(single_view_fraction >= 0.0 && single_view_fraction <= 1.0))
      bad("single-view-fraction", "must lie in [0, 1]");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) bad("test-fraction", "must lie in [0, 1)");
  }

  std::size_t shared_frames() const {
    return static_cast<std::size_t>(std::lround(overlap * static_cast<double>(signal_frames)));
  }
};

enum class SignalViews : std::uint8_t { Both = 0, RgbOnly = 1, DepthOnly = 2 };

inline const char* to_string(SignalViews v) {
  switch (v) {
    case SignalViews::Both: return "both";
    case SignalViews::RgbOnly: return "rgb";
    case SignalViews::DepthOnly: return "depth";
  }
  return "?";
}

/// Ground truth for the generated set: where each class's patterns sit and
/// which views carry them in each sample.
struct SynthManifest {
  std::vector<std::vector<std::size_t>> rgb_frames;    // per class, sorted
  std::vector<std::vector<std::size_t>> depth_frames;  // per class, sorted
  std::map<std::string, SignalViews> signal_views;     // per sample id
};

struct SynthResult {
  Dataset dataset;
  SynthManifest manifest;
};

/// Plants a fixed random unit vector per (class, view) at that view's
/// informative frames; every frame also carries N(0, noise_std^2) noise.
/// Sample order is shuffled; the split is stratified per class.
inline SynthResult generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, 0x5EED);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto unit_vector = [&](std::size_t d) {
    std::vector<double> v(d);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : v) norm += (x = gauss(rng)) * x;
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  };

  SynthResult out;
  Dataset& ds = out.dataset;
  ds.classes = spec.classes;
  ds.frames = spec.frames;
  ds.dim_r = spec.dim_r;
  ds.dim_d = spec.dim_d;
  for (std::size_t c = 0; c < spec.classes; ++c) ds.class_names.push_back("class_" + std::to_string(c));

  std::vector<std::vector<double>> pattern_r, pattern_d;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    pattern_r.push_back(unit_vector(spec.dim_r));
    pattern_d.push_back(unit_vector(spec.dim_d));
  }

  const std::size_t shared = spec.shared_frames();
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::vector<std::size_t> order(spec.frames);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> rgb(order.begin(), order.begin() + spec.signal_frames);
    std::vector<std::size_t> depth(rgb.begin(), rgb.begin() + shared);
    depth.insert(depth.end(), order.begin() + spec.signal_frames,
                 order.begin() + spec.signal_frames + (spec.signal_frames - shared));
    std::sort(rgb.begin(), rgb.end());
    std::sort(depth.begin(), depth.end());
    out.manifest.rgb_frames.push_back(std::move(rgb));
    out.manifest.depth_frames.push_back(std::move(depth));
  }

  const auto one_view = static_cast<std::size_t>(
      std::lround(spec.single_view_fraction * static_cast<double>(spec.per_class) / 2.0));
  const auto n_test = static_cast<std::size_t>(
      std::lround(spec.test_fraction * static_cast<double>(spec.per_class)));

  std::vector<ViewSample> samples;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    // split assignment is shuffled independently of the view assignment
    std::vector<std::size_t> order(spec.per_class);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> is_test(spec.per_class, false);
    for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;

    for (std::size_t k = 0; k < spec.per_class; ++k) {
      ViewSample s;
      s.id = "c" + std::to_string(c) + "_" + std::to_string(k);
      s.label = c;
      s.split = is_test[k] ? Split::Test : Split::Train;
      const SignalViews views = k < one_view            ? SignalViews::RgbOnly
                                : k < 2 * one_view ? SignalViews::DepthOnly
                                                   : SignalViews::Both;
      s.x_r = Matrix(spec.frames, spec.dim_r);
      s.x_d = Matrix(spec.frames, spec.dim_d);
      for (double& v : s.x_r.data) v = spec.noise_std * gauss(rng);
      for (double& v : s.x_d.data) v = spec.noise_std * gauss(rng);
      if (views != SignalViews::DepthOnly)
        for (std::size_t t : out.manifest.rgb_frames[c])
          for (std::size_t j = 0; j < spec.dim_r; ++j) s.x_r(t, j) += pattern_r[c][j];
      if (views != SignalViews::RgbOnly)
        for (std::size_t t : out.manifest.depth_frames[c])
          for (std::size_t j = 0; j < spec.dim_d; ++j) s.x_d(t, j) += pattern_d[c][j];
      out.manifest.signal_views.emplace(s.id, views);
      samples.push_back(std::move(s));
    }
  }
  std::shuffle(samples.begin(), samples.end(), rng);
  ds.samples = std::move(samples);
  return out;
}

}  // namespace cam
