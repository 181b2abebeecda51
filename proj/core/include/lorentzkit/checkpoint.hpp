#pragma once

// Binary model checkpoint: "HEEG1" magic, u32 format version, the model configuration and
// free-form run metadata as JSON text, every parameter (name, shape, little-endian f64),
// the Euclidean BN running statistics and the per-domain hyperbolic statistics.

#include <filesystem>
#include <string>

#include "lorentzkit/model.hpp"

namespace lorentzkit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json);

void save_checkpoint(HeegnetModel& model, const std::string& metadata_json, const std::filesystem::path& path);

struct LoadedCheckpoint {
  HeegnetModel model;
  std::string metadata;  // JSON text
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lorentzkit
