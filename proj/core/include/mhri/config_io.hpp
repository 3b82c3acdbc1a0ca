#pragma once

#include <string>

#include "mhri/model.hpp"
#include "mhri/synth.hpp"
#include "mhri/trainer.hpp"

namespace mhri {

// Flat key/value JSON config files. Parsers reject unknown keys so typos
// surface immediately; every field is optional and defaults apply.

SynthConfig parse_synth_config(const std::string& json_text);
std::string synth_config_to_json(const SynthConfig& config);

/// Applies training keys onto a (ModelConfig, TrainConfig) pair. d_v/d_t are
/// not config keys; they come from the dataset.
void apply_train_config(const std::string& json_text, ModelConfig& model, TrainConfig& train);
std::string train_config_to_json(const ModelConfig& model, const TrainConfig& train);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace mhri
