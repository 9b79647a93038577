#pragma once

#include <string>

#include "mtlopt/train.hpp"

namespace mtlopt {

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Flat key=value config text, '#' starts a comment, one key per line.
// Unknown keys and malformed values raise ConfigError naming the key.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Applies one "key=value" override (sweep axes reuse the same key set).
void set_config_key(RunConfig& config, const std::string& key,
                    const std::string& value);

// Emits every key; parse_config_text(serialize_config(c)) reproduces c.
std::string serialize_config(const RunConfig& config);

}  // namespace mtlopt
