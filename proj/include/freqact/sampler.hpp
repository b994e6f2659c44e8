#pragma once

#include <functional>
#include <vector>

#include "freqact/diffusion.hpp"
#include "freqact/model.hpp"
#include "freqact/rng.hpp"

namespace freqact {

// Reconstruction levels visited by the coarse-to-fine loop: must start at 0,
// end at the horizon, and increase strictly.
struct FreqSchedule {
  std::vector<int> levels;

  int iterations() const { return (int)levels.size() - 1; }
  void validate(int horizon) const;
};

// Evenly spaced levels {0, T/n, 2T/n, ..., T}, rounded.
FreqSchedule default_schedule(int horizon, int n_iter);

// cos(pi/2 * (step+1)/n_iter): the fraction of positions still hidden after
// finishing iteration `step` (1-based progress), reaching zero at the end.
double cosine_mask_ratio(int step, int n_iter);

// Denoising step indices 1 + j*floor(t_diff/ddim_steps), increasing; the
// chain starts one stride below t_diff, skipping the clipped low-alpha-bar
// tail of the schedule where x0 recovery amplifies predictor error.
std::vector<int> ddim_taus(int t_diff, int ddim_steps);

// Noise predictor: maps (x_t, step t) to predicted noise of the same length.
using EpsFn =
    std::function<std::vector<double>(const std::vector<double>&, int)>;

// Deterministic (eta = 0) or stochastic DDIM chain starting from x at the
// final step. Fresh noise is drawn from rng only when eta > 0 and the step
// variance is nonzero. Each predictor call increments *nfe when given.
std::vector<double> ddim_sample(const DiffusionSchedule& sched,
                                const EpsFn& eps_fn, std::vector<double> x,
                                int ddim_steps, double eta, Rng& rng,
                                int* nfe = nullptr);

struct GenerationIteration {
  int level = 0;       // context band offered to the encoder
  int masked = 0;      // positions hidden during this iteration
  std::vector<double> estimate;  // denoised trajectory after the chain
  std::vector<double> refeed;    // next iteration's context values
};

struct GenerationTrace {
  std::vector<GenerationIteration> iterations;
  int nfe = 0;
};

// Coarse-to-fine trajectory generation for one observation window
// (obs_step * obs_dim values). Iteration i encodes the previous estimate
// band-limited to level l_i under the current mask, denoises a fresh noise
// trajectory through the DDIM chain, then shrinks the mask to the cosine
// ratio. Draw order per iteration: initial noise, then any DDIM noise.
std::vector<double> hierarchical_generate(const FreqPolicyModel& model,
                                          const std::vector<double>& obs,
                                          const FreqSchedule& schedule,
                                          int ddim_steps, double eta, Rng& rng,
                                          GenerationTrace* trace = nullptr);

}  // namespace freqact
