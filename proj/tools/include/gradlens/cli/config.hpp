#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gradlens/losses.hpp"
#include "gradlens/trainer.hpp"

namespace gradlens::cli {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Accepts "inf", "-inf" and anything std::from_chars accepts. Throws
// Error(InvalidConfig) naming `what`.
double parse_double(const std::string& text, const std::string& what);
std::uint64_t parse_unsigned(const std::string& text, const std::string& what);
std::vector<double> parse_list(const std::string& text, const std::string& what);

// `key = value` lines; '#' starts a comment, [section] headers are ignored and
// surrounding quotes are stripped. A JSON run manifest is also accepted, in
// which case its "config" object is read.
KeyValues parse_config_text(const std::string& text);
KeyValues load_config(const std::filesystem::path& path);

// Throws Error(InvalidConfig) on an unknown key or bad value.
void apply_setting(TrainerConfig& config, const std::string& key, const std::string& value);
void apply_param(LossParams& params, const std::string& key, const std::string& value);

// Every trainer key in a stable order, values formatted for reparsing.
KeyValues describe(const TrainerConfig& config);
std::string to_config_text(const TrainerConfig& config);

const std::vector<std::string>& trainer_keys();
const std::vector<std::string>& param_keys();

}  // namespace gradlens::cli
