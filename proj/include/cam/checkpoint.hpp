#pragma once

// JSON checkpoints: every parameter block with its shape, the run config,
// the feature statistics and the last completed phase.

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cam/config.hpp"
#include "cam/data.hpp"
#include "cam/dataset_io.hpp"
#include "cam/error.hpp"
#include "cam/model.hpp"
#include "cam/training.hpp"

namespace cam {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "cam-checkpoint";

inline nlohmann::ordered_json stats_json(const FeatureStats& st) {
  if (st.empty()) return nullptr;
  return {{"mean_rgb", st.mean_r}, {"std_rgb", st.std_r}, {"mean_depth", st.mean_d},
          {"std_depth", st.std_d}};
}

inline nlohmann::ordered_json checkpoint_json(const TrainingState& s) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["format_version"] = kCheckpointVersion;
  j["phase"] = to_string(s.done);
  j["dims"] = {{"dim_rgb", s.dims.dim_r},
               {"dim_depth", s.dims.dim_d},
               {"hidden", s.dims.hidden},
               {"classes", s.dims.classes}};
  j["config"] = to_json(s.config);
  j["feature_stats"] = stats_json(s.stats);
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  s.params.visit([&](const auto& name, const DiffArray& a) {
    params[std::string(name)] = {{"shape", a.shape}, {"values", a.values}};
  });
  j["params"] = std::move(params);
  return j;
}

inline std::string checkpoint_text(const TrainingState& s) { return checkpoint_json(s).dump() + "\n"; }

inline void save_checkpoint(const TrainingState& s, const std::filesystem::path& path) {
  detail::write_text_atomic(path, checkpoint_text(s));
}

inline Phase phase_from_string(const std::string& name) {
  for (Phase p : {Phase::None, Phase::Stage1, Phase::Stage2, Phase::Fusion})
    if (name == to_string(p)) return p;
  fail(ErrorCode::CorruptHeader, "checkpoint: unknown phase '" + name + "'");
}

/// Parses and validates a checkpoint document; every block must be present
/// with the shape implied by the stored dims.
inline TrainingState checkpoint_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("format") || j["format"] != kCheckpointFormat)
    fail(ErrorCode::CorruptHeader, "checkpoint: not a checkpoint document");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    fail(ErrorCode::CorruptHeader, "checkpoint: missing format_version");
  if (j["format_version"].get<int>() != kCheckpointVersion)
    fail(ErrorCode::UnknownVersion,
         "checkpoint: format_version " + j["format_version"].dump() + " is not supported");
  TrainingState s;
  try {
    s.done = phase_from_string(j.at("phase").get<std::string>());
    const auto& d = j.at("dims");
    s.dims = {d.at("dim_rgb").get<std::size_t>(), d.at("dim_depth").get<std::size_t>(),
              d.at("hidden").get<std::size_t>(), d.at("classes").get<std::size_t>()};
    s.config = config_from_json(j.at("config"));
    const auto& st = j.at("feature_stats");
    if (!st.is_null())
      s.stats = {st.at("mean_rgb").get<std::vector<double>>(), st.at("std_rgb").get<std::vector<double>>(),
                 st.at("mean_depth").get<std::vector<double>>(), st.at("std_depth").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptHeader, std::string("checkpoint: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument) fail(ErrorCode::CorruptHeader, e.what());
    throw;
  }
  if (s.dims.hidden != s.config.hidden)
    fail(ErrorCode::ShapeMismatch, "checkpoint: dims hidden " + std::to_string(s.dims.hidden) +
                                       " differs from config hidden " +
                                       std::to_string(s.config.hidden));
  if (!s.stats.empty() && (s.stats.mean_r.size() != s.dims.dim_r || s.stats.std_r.size() != s.dims.dim_r ||
                           s.stats.mean_d.size() != s.dims.dim_d || s.stats.std_d.size() != s.dims.dim_d))
    fail(ErrorCode::ShapeMismatch, "checkpoint: feature statistics do not match dims");

  s.params = CamParams::zeros(s.dims, s.config.mar);
  const nlohmann::json* params = j.contains("params") ? &j["params"] : nullptr;
  if (!params || !params->is_object()) fail(ErrorCode::CorruptHeader, "checkpoint: missing params");
  std::set<std::string> seen;
  s.params.visit([&](const auto& name_in, DiffArray& a) {
    const std::string name(name_in);
    seen.insert(name);
    if (!params->contains(name)) fail(ErrorCode::CorruptHeader, "checkpoint: missing block '" + name + "'");
    const auto& block = (*params)[name];
    Shape shape;
    std::vector<double> values;
    try {
      shape = block.at("shape").get<Shape>();
      values = block.at("values").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::CorruptHeader, "checkpoint: block '" + name + "': " + e.what());
    }
    if (shape != a.shape)
      fail(ErrorCode::ShapeMismatch, "checkpoint: block '" + name + "' has shape " +
                                         shape_string(shape) + ", expected " +
                                         shape_string(a.shape));
    if (values.size() != a.size())
      fail(ErrorCode::CorruptHeader, "checkpoint: block '" + name + "' has " +
                                         std::to_string(values.size()) + " values for shape " +
                                         shape_string(shape));
    a.values = std::move(values);
  });
  for (const auto& [name, _] : params->items())
    if (!seen.count(name)) fail(ErrorCode::CorruptHeader, "checkpoint: unexpected block '" + name + "'");
  s.params.validate(s.dims);
  return s;
}

inline TrainingState load_checkpoint(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptHeader, "checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace cam
