#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "json.hpp"

#include "cam/error.hpp"
#include "cam/recurrent.hpp"

namespace cam {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Hyperparameters of one experiment. Learning rates and hidden size
/// default to the values used at full scale; epoch counts are the synthetic
/// defaults.
struct RunConfig {
  std::size_t hidden = 128;
  double lr_stage1 = 0.0005;
  double lr_stage2 = 0.001;
  double lr_fusion = 0.001;
  std::size_t batch_size = 32;
  std::size_t epochs_stage1 = 100;
  std::size_t epochs_stage2 = 100;
  std::size_t epochs_fusion = 50;
  std::uint64_t seed = 0;
  AdamConfig adam;
  bool standardize = true;
  MarOptions mar;

  void validate() const {
    auto bad = [](const std::string& what) {
      fail(ErrorCode::InvalidArgument, "invalid config: " + what);
    };
    if (hidden == 0) bad("hidden must be >= 1");
    if (!(lr_stage1 > 0.0) || !(lr_stage2 > 0.0) || !(lr_fusion > 0.0))
      bad("learning rates must be > 0");
    if (batch_size == 0) bad("batch-size must be >= 1");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
      bad("adam betas must lie in [0, 1)");
    if (!(adam.epsilon > 0.0)) bad("adam epsilon must be > 0");
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  return {{"hidden", c.hidden},
          {"lr_stage1", c.lr_stage1},
          {"lr_stage2", c.lr_stage2},
          {"lr_fusion", c.lr_fusion},
          {"batch_size", c.batch_size},
          {"epochs_stage1", c.epochs_stage1},
          {"epochs_stage2", c.epochs_stage2},
          {"epochs_fusion", c.epochs_fusion},
          {"seed", c.seed},
          {"optimizer", "adam"},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_epsilon", c.adam.epsilon},
          {"standardize", c.standardize},
          {"filter_rgb", c.mar.filter_rgb},
          {"filter_depth", c.mar.filter_depth},
          {"hidden_from_collaborated", c.mar.hidden_from_collaborated}};
}

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {}) {
  if (!j.is_object()) fail(ErrorCode::InvalidArgument, "config: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "hidden") base.hidden = v.get<std::size_t>();
      else if (key == "lr_stage1") base.lr_stage1 = v.get<double>();
      else if (key == "lr_stage2") base.lr_stage2 = v.get<double>();
      else if (key == "lr_fusion") base.lr_fusion = v.get<double>();
      else if (key == "batch_size") base.batch_size = v.get<std::size_t>();
      else if (key == "epochs_stage1") base.epochs_stage1 = v.get<std::size_t>();
      else if (key == "epochs_stage2") base.epochs_stage2 = v.get<std::size_t>();
      else if (key == "epochs_fusion") base.epochs_fusion = v.get<std::size_t>();
      else if (key == "seed") base.seed = v.get<std::uint64_t>();
      else if (key == "optimizer") {
        if (v.get<std::string>() != "adam")
          fail(ErrorCode::InvalidArgument, "config: only the adam optimizer is supported");
      }
      else if (key == "adam_beta1") base.adam.beta1 = v.get<double>();
      else if (key == "adam_beta2") base.adam.beta2 = v.get<double>();
      else if (key == "adam_epsilon") base.adam.epsilon = v.get<double>();
      else if (key == "standardize") base.standardize = v.get<bool>();
      else if (key == "filter_rgb") base.mar.filter_rgb = v.get<bool>();
      else if (key == "filter_depth") base.mar.filter_depth = v.get<bool>();
      else if (key == "hidden_from_collaborated") base.mar.hidden_from_collaborated = v.get<bool>();
      else fail(ErrorCode::InvalidArgument, "config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  return base;
}

}  // namespace cam
