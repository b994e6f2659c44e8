#pragma once

#include <vector>

#include "freqact/rng.hpp"

namespace freqact {

// Cosine noise schedule. alpha_bar[t-1] is the cumulative signal fraction at
// step t in 1..t_diff; betas are clipped at 0.999 so alpha_bar stays
// strictly positive.
struct DiffusionSchedule {
  int t_diff = 0;
  std::vector<double> alpha_bar;
  std::vector<double> betas;

  static DiffusionSchedule cosine(int t_diff);

  // Step index is 1-based; throws DataError outside [1, t_diff].
  double abar(int t) const;
};

// x_t = sqrt(abar_t) x + sqrt(1 - abar_t) eps, elementwise.
void corrupt(const DiffusionSchedule& sched, const std::vector<double>& x,
             const std::vector<double>& eps, int t, std::vector<double>* x_t);

}  // namespace freqact
