#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "freqact/dataset.hpp"
#include "freqact/model.hpp"
#include "freqact/optim.hpp"
#include "freqact/rng.hpp"

namespace freqact {

// In-memory image of one checkpoint file. The byte layout is documented in
// docs/checkpoint_format.md; every multi-byte field is little-endian.
struct CheckpointData {
  uint32_t version = 0;
  uint64_t step = 0;
  std::map<std::string, std::string> config;  // effective key=value echo
  NormStats norm;

  struct Entry {
    std::string name;
    uint32_t rows = 0, cols = 0;
    std::vector<double> values;
  };
  std::vector<Entry> params;

  bool has_optimizer = false;
  uint64_t optimizer_steps = 0;
  std::vector<std::vector<double>> opt_m, opt_v;  // parallel to params

  bool has_rng = false;
  std::array<uint64_t, 4> rng_state{};
};

inline constexpr uint32_t kCheckpointVersion = 1;

// Atomic write (temp + rename). Optimizer and RNG sections are optional so
// inference-only exports stay small; pass nullptr to omit them.
void save_checkpoint(const std::string& path, const FreqPolicyModel& model,
                     const std::map<std::string, std::string>& config_echo,
                     const NormStats& norm, uint64_t step,
                     const AdamW* opt = nullptr, const Rng* rng = nullptr);

// Parses and structurally validates a checkpoint. Truncation, a bad magic,
// or an unsupported version raise DataError naming the absolute byte offset
// of the first inconsistent field.
CheckpointData read_checkpoint(const std::string& path);

// Copies parameter values into an existing model. Every stored entry must
// match a model parameter of identical shape and the counts must agree.
void restore_model(const CheckpointData& ckpt, FreqPolicyModel& model);

// Copies moment vectors and the step counter; requires the checkpoint to
// carry an optimizer section shaped like the model's parameters.
void restore_optimizer(const CheckpointData& ckpt, AdamW& opt);

}  // namespace freqact
