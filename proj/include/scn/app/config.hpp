#ifndef SCN_APP_CONFIG_HPP
#define SCN_APP_CONFIG_HPP

#include <filesystem>
#include <string>

#include "scn/capsule/layers.hpp"
#include "scn/train/config.hpp"

namespace scn::app {

/// Parses `kind key=value ...` (the LayerSpec::describe form).
capsule::LayerSpec parse_layer_spec(const std::string& line);

/// Parses the text config format: `key = value` lines, `#` comments and
/// `[layer]` blocks. Throws ConfigError for unknown or missing keys and
/// for architectures that fail shape propagation.
train::TrainConfig parse_config_text(const std::string& text);
train::TrainConfig parse_config(const std::filesystem::path& path);

/// Inverse of parse_config_text.
std::string format_config(const train::TrainConfig& config);

/// SCN_SEED, when set, replaces the configured seed.
void apply_env_overrides(train::TrainConfig& config);

}  // namespace scn::app

#endif  // SCN_APP_CONFIG_HPP
