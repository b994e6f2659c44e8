#pragma once

#include <map>
#include <string>
#include <vector>

#include "freqact/model.hpp"

namespace freqact {

// Flat key=value run configuration with section prefixes (model.horizon,
// train.batch_size, sampler.n_iter, ...). Every key is declared in a fixed
// schema with a type and a default; unknown keys and type mismatches are
// hard errors so typos cannot silently fall back to defaults.
struct RunConfig {
  std::map<std::string, std::string> values;

  int geti(const std::string& key) const;
  double getd(const std::string& key) const;
  bool getb(const std::string& key) const;
  const std::string& gets(const std::string& key) const;
};

// All schema keys at their defaults.
RunConfig default_config();

// Defaults overlaid with a config file: '#' comments, blank lines, and
// "key = value" assignments. Errors name the file and line.
RunConfig load_config(const std::string& path);

// One "key=value" override (the repeatable --set flag).
void apply_override(RunConfig& cfg, const std::string& assignment);

// Canonical echo: one sorted "key = value" line per schema key.
std::string config_echo(const RunConfig& cfg);

// The model section materialized (also validates it).
ModelConfig model_config(const RunConfig& cfg);

// Rebuilds a RunConfig from a checkpoint's stored echo map.
RunConfig config_from_map(const std::map<std::string, std::string>& values);

}  // namespace freqact
