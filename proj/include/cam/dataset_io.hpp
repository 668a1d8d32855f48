#pragma once

// Binary dataset files and the JSON manifest that sits beside them.
//
// Layout (host byte order, tagged):
//   "CAMDATA\0"  u32 version  u32 endian tag 0x01020304
//   u64 classes, frames, dim_r, dim_d, sample count
//   class names: (u64 length, bytes) each
//   per sample: id (u64 length, bytes), u64 label, u8 split,
//               u64 rows, u64 cols, f64[rows*cols] rgb,
//               u64 rows, u64 cols, f64[rows*cols] depth

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <tuple>
#include <string>
#include <vector>

#include "json.hpp"

#include "cam/data.hpp"
#include "cam/error.hpp"

namespace cam {

inline constexpr char kDatasetMagic[8] = {'C', 'A', 'M', 'D', 'A', 'T', 'A', '\0'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kEndianTag = 0x01020304;

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void put_doubles(const std::vector<double>& v) {
    const auto* p = reinterpret_cast<const char*>(v.data());
    bytes_.insert(bytes_.end(), p, p + v.size() * sizeof(double));
  }
  void put_raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> get_doubles(std::size_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(double)) truncated();
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) truncated();
  }
  [[noreturn]] static void truncated() {
    fail(ErrorCode::CorruptHeader, "dataset file is truncated or corrupt");
  }

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes through a sibling temporary and renames, so a failed write never
/// leaves a partial file at `path`.
inline void write_file_atomic(const std::filesystem::path& path, const char* data,
                              std::size_t size) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) fail(ErrorCode::Io, "write to '" + path.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::Io, "cannot move temporary onto '" + path.string() + "'");
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

}  // namespace detail

inline void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  detail::ByteWriter w;
  w.put_raw(kDatasetMagic, sizeof kDatasetMagic);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(kEndianTag);
  for (std::uint64_t v : {data.classes, data.frames, data.dim_r, data.dim_d, data.samples.size()})
    w.put<std::uint64_t>(v);
  for (const std::string& name : data.class_names) w.put_string(name);
  for (const ViewSample& s : data.samples) {
    w.put_string(s.id);
    w.put<std::uint64_t>(s.label);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.split));
    for (const Matrix* m : {&s.x_r, &s.x_d}) {
      w.put<std::uint64_t>(m->rows);
      w.put<std::uint64_t>(m->cols);
      w.put_doubles(m->data);
    }
  }
  detail::write_file_atomic(path, w.bytes().data(), w.bytes().size());
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path));
  char magic[sizeof kDatasetMagic];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0)
    fail(ErrorCode::CorruptHeader, "'" + path.string() + "' is not a dataset file");
  const auto version = r.get<std::uint32_t>();
  const auto endian = r.get<std::uint32_t>();
  if (endian != kEndianTag)
    fail(ErrorCode::CorruptHeader, "'" + path.string() + "' has a foreign byte order");
  if (version != kDatasetVersion)
    fail(ErrorCode::UnknownVersion, "'" + path.string() + "' has unsupported format version " +
                                        std::to_string(version));

  Dataset d;
  d.classes = r.get<std::uint64_t>();
  d.frames = r.get<std::uint64_t>();
  d.dim_r = r.get<std::uint64_t>();
  d.dim_d = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  if (d.classes == 0 || d.classes > (1u << 20))
    fail(ErrorCode::CorruptHeader, "dataset header has an implausible class count");
  for (std::size_t c = 0; c < d.classes; ++c) d.class_names.push_back(r.get_string());

  for (std::uint64_t k = 0; k < count; ++k) {
    ViewSample s;
    s.id = r.get_string();
    s.label = r.get<std::uint64_t>();
    const auto split = r.get<std::uint8_t>();
    if (split > 1) fail(ErrorCode::CorruptHeader, "sample '" + s.id + "' has an invalid split tag");
    s.split = static_cast<Split>(split);
    for (auto [m, cols, view] : {std::tuple{&s.x_r, d.dim_r, "rgb"},
                                 std::tuple{&s.x_d, d.dim_d, "depth"}}) {
      const auto rows = r.get<std::uint64_t>();
      const auto c = r.get<std::uint64_t>();
      if (rows != d.frames || c != cols)
        fail(ErrorCode::ShapeMismatch,
             "sample '" + s.id + "' " + view + " matrix is " + std::to_string(rows) + "x" +
                 std::to_string(c) + " but the header says " + std::to_string(d.frames) + "x" +
                 std::to_string(cols));
      *m = Matrix(rows, c, r.get_doubles(rows * c));
    }
    d.samples.push_back(std::move(s));
  }
  if (!r.at_end()) fail(ErrorCode::CorruptHeader, "dataset file has trailing bytes");
  d.validate();
  return d;
}

// --- manifest -----------------------------------------------------------------

inline nlohmann::ordered_json manifest_json(const Dataset& data, const FeatureStats& stats,
                                            const SynthSpec* spec,
                                            const SynthManifest* truth) {
  nlohmann::ordered_json j;
  j["format_version"] = kDatasetVersion;
  j["classes"] = data.classes;
  j["frames"] = data.frames;
  j["dim_rgb"] = data.dim_r;
  j["dim_depth"] = data.dim_d;
  j["class_names"] = data.class_names;
  j["train_count"] = data.split(Split::Train).size();
  j["test_count"] = data.split(Split::Test).size();
  j["normalization"] = {{"fitted_on", "train"},
                        {"mean_rgb", stats.mean_r},
                        {"std_rgb", stats.std_r},
                        {"mean_depth", stats.mean_d},
                        {"std_depth", stats.std_d}};
  if (spec) {
    j["synthetic"] = {{"classes", spec->classes},
                      {"frames", spec->frames},
                      {"dim_rgb", spec->dim_r},
                      {"dim_depth", spec->dim_d},
                      {"per_class", spec->per_class},
                      {"noise_std", spec->noise_std},
                      {"signal_frames", spec->signal_frames},
                      {"overlap", spec->overlap},
                      {"single_view_fraction", spec->single_view_fraction},
                      {"test_fraction", spec->test_fraction},
                      {"seed", spec->seed}};
  }
  if (truth) {
    auto frames = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < truth->rgb_frames.size(); ++c)
      frames.push_back({{"class", c},
                        {"rgb", truth->rgb_frames[c]},
                        {"depth", truth->depth_frames[c]}});
    j["informative_frames"] = frames;
  }
  auto samples = nlohmann::ordered_json::array();
  for (const ViewSample& s : data.samples) {
    nlohmann::ordered_json e = {{"id", s.id}, {"label", s.label}, {"split", to_string(s.split)}};
    if (truth) {
      auto it = truth->signal_views.find(s.id);
      if (it != truth->signal_views.end()) e["signal_views"] = to_string(it->second);
    }
    samples.push_back(std::move(e));
  }
  j["samples"] = samples;
  return j;
}

inline void save_manifest(const std::filesystem::path& path, const Dataset& data,
                          const FeatureStats& stats, const SynthSpec* spec = nullptr,
                          const SynthManifest* truth = nullptr) {
  detail::write_text_atomic(path, manifest_json(data, stats, spec, truth).dump(2) + "\n");
}

/// Reads back the ground-truth part of a manifest written by save_manifest.
inline SynthManifest load_manifest_truth(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptHeader, "manifest '" + path.string() + "': " + e.what());
  }
  SynthManifest m;
  if (j.contains("informative_frames"))
    for (const auto& e : j["informative_frames"]) {
      m.rgb_frames.push_back(e.at("rgb").get<std::vector<std::size_t>>());
      m.depth_frames.push_back(e.at("depth").get<std::vector<std::size_t>>());
    }
  for (const auto& e : j.at("samples")) {
    if (!e.contains("signal_views")) continue;
    const std::string v = e["signal_views"];
    m.signal_views[e.at("id").get<std::string>()] =
        v == "rgb" ? SignalViews::RgbOnly : v == "depth" ? SignalViews::DepthOnly : SignalViews::Both;
  }
  return m;
}

inline std::filesystem::path manifest_path_for(const std::filesystem::path& data_path) {
  std::filesystem::path p = data_path;
  p += ".manifest.json";
  return p;
}

}  // namespace cam
