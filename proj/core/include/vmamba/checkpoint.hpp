#pragma once

// Checkpoint directory layout:
//   config.json     model configuration
//   manifest.txt    one line per tensor: <name> <file> <d0>x<d1>x...
//   tensors/*.vmtb  one VMTB file per weight tensor

#include <filesystem>

#include "vmamba/model.hpp"

namespace vmamba {

struct Checkpoint {
  model::ModelConfig config;
  ad::ParameterSet<float> weights;
};

void save_checkpoint(const std::filesystem::path& dir, const model::ModelConfig& cfg,
                     const ad::ParameterSet<float>& weights);
/// Validates the manifest against the stored tensors and the config's parameter shapes.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Writes delta.csv (layer,t,h,w,value) and one 8-bit PGM per (layer, frame),
/// each normalized to its own [min, max].
void export_delta_maps(const std::filesystem::path& dir, const Tensor& maps);

/// Binary 8-bit PGM of a (rows, cols) tensor mapped linearly from [min, max] to [0, 255].
void write_pgm(const std::filesystem::path& path, const Tensor& image);

}  // namespace vmamba
