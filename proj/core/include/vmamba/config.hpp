#pragma once

// JSON run configuration with three optional sections:
//
//   {
//     "model": { "depth": 2, "dim": 32, "tubelet": [2, 8, 8], "pe_mode": "learnable", ... },
//     "train": { "lr": 1e-3, "epochs": 30, ... },
//     "data":  { "train_samples": 2000, "noise_std": 0.1, ... }
//   }
//
// Missing keys keep their defaults; unknown keys are rejected.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "vmamba/model.hpp"
#include "vmamba/train.hpp"

namespace vmamba {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  train::DatasetConfig data;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

std::string to_json(const RunConfig& cfg, int indent = 2);
std::string to_json(const model::ModelConfig& cfg, int indent = 2);
model::ModelConfig parse_model_config(const std::string& json_text);

}  // namespace vmamba
