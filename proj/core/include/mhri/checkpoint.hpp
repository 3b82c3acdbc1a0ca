#pragma once

#include <optional>
#include <string>

#include "mhri/model.hpp"

namespace mhri {

/// Writes the model config header plus the named-parameter table with raw
/// 64-bit values. Load restores parameters bit-exactly.
void save_checkpoint(const MhriModel& model, const std::string& path);

/**
 * Reads a checkpoint. With no expected config, the model is rebuilt from
 * the file header. With an expected config: a structural mismatch against
 * the header raises CheckpointError when `strict`, otherwise the expected
 * config wins and any resulting shape conflict is reported per parameter.
 */
MhriModel load_checkpoint(const std::string& path,
                          const std::optional<ModelConfig>& expected = std::nullopt,
                          bool strict = true);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

/// Structural equality (layer/head/width/feature sizes); dropout, coupling
/// and seed are behavioral and excluded.
bool same_architecture(const ModelConfig& a, const ModelConfig& b);

}  // namespace mhri
