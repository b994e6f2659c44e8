#include "freqact/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "freqact/env.hpp"
#include "freqact/errors.hpp"

namespace freqact {

namespace {

enum class Kind { Int, Real, Bool, Str, Enum };

struct SchemaEntry {
  const char* key;
  Kind kind;
  const char* def;
  const char* choices;  // comma list for Enum, nullptr otherwise
};

// The one place the configuration surface is declared.
const SchemaEntry kSchema[] = {
    {"env.name", Kind::Enum, "reach2d", "reach2d,pusht_lite"},
    {"data.dir", Kind::Str, "", nullptr},
    {"data.episodes", Kind::Int, "64", nullptr},
    {"data.noise_std", Kind::Real, "0", nullptr},
    {"data.seed", Kind::Int, "0", nullptr},
    {"model.horizon", Kind::Int, "16", nullptr},
    {"model.action_step", Kind::Int, "8", nullptr},
    {"model.obs_step", Kind::Int, "2", nullptr},
    {"model.encoder_embed_dim", Kind::Int, "512", nullptr},
    {"model.encoder_depth", Kind::Int, "4", nullptr},
    {"model.encoder_heads", Kind::Int, "8", nullptr},
    {"model.decoder_embed_dim", Kind::Int, "512", nullptr},
    {"model.decoder_depth", Kind::Int, "4", nullptr},
    {"model.decoder_heads", Kind::Int, "8", nullptr},
    {"model.mlp_ratio", Kind::Int, "4", nullptr},
    {"model.state_mlp_size", Kind::Int, "64", nullptr},
    {"model.num_training_steps", Kind::Int, "100", nullptr},
    {"model.diffloss_d", Kind::Int, "3", nullptr},
    {"model.diffloss_w", Kind::Int, "1024", nullptr},
    {"model.mask_ratio_m", Kind::Real, "0.7", nullptr},
    {"model.truncnorm_std", Kind::Real, "0.1", nullptr},
    {"model.masked_loss_only", Kind::Bool, "true", nullptr},
    {"model.use_dct", Kind::Bool, "true", nullptr},
    {"train.batch_size", Kind::Int, "128", nullptr},
    {"train.steps", Kind::Int, "3000", nullptr},
    {"train.lr", Kind::Real, "0.0001", nullptr},
    {"train.beta1", Kind::Real, "0.95", nullptr},
    {"train.beta2", Kind::Real, "0.999", nullptr},
    {"train.weight_decay", Kind::Real, "1e-06", nullptr},
    {"train.lr_schedule", Kind::Enum, "cosine", "cosine,constant"},
    {"train.checkpoint_every", Kind::Int, "500", nullptr},
    {"train.log_every", Kind::Int, "50", nullptr},
    {"train.seed", Kind::Int, "0", nullptr},
    {"sampler.n_iter", Kind::Int, "4", nullptr},
    {"sampler.num_sampling_steps", Kind::Int, "10", nullptr},
    {"sampler.eta", Kind::Real, "0", nullptr},
    {"eval.episodes", Kind::Int, "100", nullptr},
    {"eval.seed", Kind::Int, "0", nullptr},
    {"analyze.bands", Kind::Int, "10", nullptr},
    {"analyze.fractions", Kind::Str, "0.125,0.25,0.5,1", nullptr},
    {"bench.n_iters", Kind::Str, "1,2,4,8", nullptr},
    {"bench.episodes", Kind::Int, "100", nullptr},
};

const SchemaEntry* find_entry(const std::string& key) {
  for (const auto& e : kSchema)
    if (key == e.key) return &e;
  return nullptr;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long parse_long(const std::string& s, const std::string& where) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (errno != 0 || end == s.c_str() || *end != '\0')
    throw ConfigError(where + ": '" + s + "' is not an integer");
  return v;
}

double parse_real(const std::string& s, const std::string& where) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ConfigError(where + ": '" + s + "' is not a number");
  return v;
}

std::string canon_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lg", &back);
  if (back == v) {
    for (int prec = 1; prec <= 16; ++prec) {
      char s[40];
      std::snprintf(s, sizeof s, "%.*g", prec, v);
      std::sscanf(s, "%lg", &back);
      if (back == v) return s;
    }
  }
  return buf;
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& raw,
               const std::string& where) {
  const SchemaEntry* e = find_entry(key);
  if (!e) throw ConfigError(where + ": unknown configuration key '" + key + "'");
  const std::string value = trim(raw);
  switch (e->kind) {
    case Kind::Int:
      cfg.values[key] = std::to_string(parse_long(value, where + ": " + key));
      break;
    case Kind::Real:
      cfg.values[key] = canon_real(parse_real(value, where + ": " + key));
      break;
    case Kind::Bool:
      if (value != "true" && value != "false")
        throw ConfigError(where + ": " + key + " must be true or false, got '" +
                          value + "'");
      cfg.values[key] = value;
      break;
    case Kind::Str:
      cfg.values[key] = value;
      break;
    case Kind::Enum: {
      std::stringstream ss(e->choices);
      std::string c;
      bool ok = false;
      while (std::getline(ss, c, ',')) ok = ok || c == value;
      if (!ok)
        throw ConfigError(where + ": " + key + " must be one of {" +
                          e->choices + "}, got '" + value + "'");
      cfg.values[key] = value;
      break;
    }
  }
}

}  // namespace

int RunConfig::geti(const std::string& key) const {
  return (int)parse_long(gets(key), "config key " + key);
}

double RunConfig::getd(const std::string& key) const {
  return parse_real(gets(key), "config key " + key);
}

bool RunConfig::getb(const std::string& key) const { return gets(key) == "true"; }

const std::string& RunConfig::gets(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end())
    throw ConfigError("config key '" + key + "' is not in the schema");
  return it->second;
}

RunConfig default_config() {
  RunConfig cfg;
  for (const auto& e : kSchema) cfg.values[e.key] = e.def;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  RunConfig cfg = default_config();
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string where = path + ":" + std::to_string(lineno);
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    set_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1), where);
  }
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  set_value(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1),
            "--set " + assignment);
}

std::string config_echo(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.values) out += k + " = " + v + "\n";
  return out;
}

ModelConfig model_config(const RunConfig& cfg) {
  const ToyEnv env = ToyEnv::by_name(cfg.gets("env.name"));
  ModelConfig m;
  m.horizon = cfg.geti("model.horizon");
  m.action_dim = env.action_dim();
  m.obs_dim = env.obs_dim();
  m.obs_step = cfg.geti("model.obs_step");
  m.enc_embed = cfg.geti("model.encoder_embed_dim");
  m.enc_depth = cfg.geti("model.encoder_depth");
  m.enc_heads = cfg.geti("model.encoder_heads");
  m.dec_embed = cfg.geti("model.decoder_embed_dim");
  m.dec_depth = cfg.geti("model.decoder_depth");
  m.dec_heads = cfg.geti("model.decoder_heads");
  m.mlp_ratio = cfg.geti("model.mlp_ratio");
  m.state_mlp = cfg.geti("model.state_mlp_size");
  m.diff_steps = cfg.geti("model.num_training_steps");
  m.head_depth = cfg.geti("model.diffloss_d");
  m.head_width = cfg.geti("model.diffloss_w");
  m.mask_m = cfg.getd("model.mask_ratio_m");
  m.truncnorm_std = cfg.getd("model.truncnorm_std");
  m.masked_loss_only = cfg.getb("model.masked_loss_only");
  m.use_dct = cfg.getb("model.use_dct");
  m.validate();
  return m;
}

RunConfig config_from_map(const std::map<std::string, std::string>& values) {
  RunConfig cfg = default_config();
  for (const auto& [k, v] : values) set_value(cfg, k, v, "stored config");
  return cfg;
}

}  // namespace freqact
