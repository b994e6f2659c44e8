#pragma once

#include <map>
#include <string>
#include <vector>

#include "freqact/dataset.hpp"
#include "freqact/env.hpp"
#include "freqact/model.hpp"
#include "freqact/sampler.hpp"

namespace freqact {

struct EpisodeRecord {
  uint64_t seed = 0;
  bool success = false;
  int length = 0;
  double wall_ms = 0.0;  // kept out of the canonical JSON report
  std::vector<double> spectral_distance;  // per generation iteration
  bool spectral_nonincreasing = false;
};

struct EvalReport {
  std::string variant;
  int episodes = 0;
  double success_rate = 0.0;
  double mean_length = 0.0;
  std::vector<EpisodeRecord> records;
  std::map<std::string, std::string> config_echo;
};

// Canonical report: sorted keys, no wall-clock, byte deterministic for a
// fixed seed. The JSONL form carries per-episode wall-clock for humans.
std::string eval_report_json(const EvalReport& report);
std::string eval_report_jsonl(const EvalReport& report);
std::string eval_report_table(const EvalReport& report);

struct RolloutConfig {
  int n_iter = 4;
  int ddim_steps = 10;
  double eta = 0.0;
  int episodes = 100;
  uint64_t seed = 0;
  int action_step = 8;
  // Compare each episode's first-window iteration estimates against the
  // scripted expert's band-limited reconstructions of the same episode.
  bool collect_spectral = false;
};

// Closed-loop receding-horizon evaluation: observe obs_step steps, generate
// horizon actions coarse to fine, execute action_step of them, repeat.
// Episode e runs on stream (seed, e); episodes aggregate in index order.
EvalReport rollout_policy(const ToyEnv& proto, const FreqPolicyModel& model,
                          const NormStats& norm, const RolloutConfig& rc);

// Open-loop replay of the stored demonstrations, verbatim.
EvalReport replay_demos(const ToyEnv& proto, const DemoSet& set);

// Open-loop replay after keeping the lowest max(1, round(p * length))
// frequency components of every episode's action sequence.
EvalReport replay_compressed(const ToyEnv& proto, const DemoSet& set,
                             double p);

// Uniform random actions, the chance floor for success rates.
EvalReport random_baseline(const ToyEnv& proto, int episodes, uint64_t seed);

// Table row "value^{relative%}" versus the clean baseline.
std::string format_with_relative(double value, double baseline);

}  // namespace freqact
