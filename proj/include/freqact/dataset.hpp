#pragma once

#include <string>
#include <vector>

#include "freqact/env.hpp"
#include "freqact/model.hpp"
#include "freqact/rng.hpp"

namespace freqact {

// One successful episode in environment units. obs holds length+1 rows (the
// observation before every action plus the final one); actions holds length
// rows. When a noise preset is active the stored actions carry the
// corruption; the clean values never leave generate_demos.
struct Demonstration {
  uint64_t seed = 0;
  int length = 0;
  bool success = false;
  std::vector<double> obs;
  std::vector<double> actions;
};

// Demonstration corpus plus the per-dimension normalization fitted to it.
// Normalization maps each dimension's [lo, hi] range onto [-1, 1]; degenerate
// dimensions (hi == lo) map to 0. The ranges are fitted to the clean expert
// data before any noise is injected.
struct DemoSet {
  std::string variant;
  int obs_dim = 0;
  int action_dim = 0;
  double noise_std = 0.0;
  uint64_t base_seed = 0;
  std::vector<Demonstration> episodes;
  std::vector<double> obs_lo, obs_hi, act_lo, act_hi;

  void validate() const;
};

// Normalization ranges detached from the episodes (checkpoints carry these
// so evaluation does not need the original dataset).
struct NormStats {
  std::vector<double> obs_lo, obs_hi, act_lo, act_hi;
};

NormStats stats_of(const DemoSet& set);

double normalize_value(double v, double lo, double hi);
double unnormalize_value(double y, double lo, double hi);
void normalize_rows(const std::vector<double>& lo,
                    const std::vector<double>& hi, std::vector<double>* v);
void unnormalize_rows(const std::vector<double>& lo,
                      const std::vector<double>& hi, std::vector<double>* v);

// Runs the scripted expert until n successful episodes are collected, each
// on its own stream derived from (base_seed, attempt index). The expert must
// keep a >= 95% clean success rate over the attempts made. noise_std > 0
// adds i.i.d. Gaussian noise to every normalized action value, stored back
// in environment units.
DemoSet generate_demos(const ToyEnv& proto, int n_episodes, double noise_std,
                       uint64_t base_seed);

// Fixed-length training windows cut at stride `action_step`: the observation
// window is the obs_step observations ending at the window start (repeating
// the first observation before episode start), and the action window is
// horizon actions from the start (repeating the final action past episode
// end). Values are normalized with the set's ranges.
std::vector<TrainBatch> demo_windows(const DemoSet& set, int obs_step,
                                     int horizon, int action_step);

// Draws a batch of windows with replacement.
TrainBatch sample_batch(const std::vector<TrainBatch>& windows, int batch_size,
                        Rng& rng);

// Directory layout: manifest.txt (key=value), stats.csv, episodes.csv, and
// epNNNN.obs.csv / epNNNN.actions.csv per episode.
void save_demos(const DemoSet& set, const std::string& dir);
DemoSet load_demos(const std::string& dir);

}  // namespace freqact
