#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "radcls/model.hpp"
#include "radcls/train.hpp"

namespace radcls {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Every recognised key, e.g. "lr_max", "schedule.warmup_steps",
// "model.cbam.reduction_ratio".
std::vector<std::string> config_keys();

// Throws ConfigError for unknown keys (listing the valid ones) or bad values.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_entry(const RunConfig& cfg, const std::string& key);

// Flat key=value text; '#' starts a comment, blank lines are ignored.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);
void apply_config_text(RunConfig& cfg, const std::string& text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
std::string format_config(const RunConfig& cfg);

// ModelConfig fields only (keys prefixed "model.") in a fixed order.
std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& m);
void apply_model_entry(ModelConfig& m, const std::string& key, const std::string& value);

std::string format_double(double v);

}  // namespace radcls
