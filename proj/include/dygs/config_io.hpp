#pragma once

#include "dygs/synthetic.hpp"
#include "dygs/trainer.hpp"

#include <string>

namespace dygs {

/// JSON text for a configuration. Parsing accepts a subset of the keys
/// (missing keys keep their defaults) and rejects unknown keys.
std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);
std::string synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const std::string& text);

/// Reads a whole file; throws IoError when unreadable.
std::string read_text_file(const std::string& path);

}  // namespace dygs
