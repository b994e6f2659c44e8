#pragma once

#include <vector>

#include "freqact/rng.hpp"

namespace freqact {

// m * (1 - k/T): full ratio at level 0, zero at level T.
double adaptive_mask_ratio(int k, int horizon, double m);

// Rejection sampling from Normal(center, std) restricted to [lo, hi].
double truncated_normal(double center, double std, double lo, double hi,
                        Rng& rng);

// Draws an effective ratio from TruncNorm(ratio, 0.1) on [0,1], rounds it to
// a count, and masks a uniform random subset of that size. The endpoints are
// exact: ratio <= 0 always yields the empty mask, ratio >= 1 the full mask.
std::vector<bool> sample_mask(double ratio, int horizon, double std, Rng& rng);

int popcount(const std::vector<bool>& mask);

// Reveals random masked positions until round(ratio * size) remain; never
// re-masks, so the count is nonincreasing.
void shrink_mask(std::vector<bool>* mask, double ratio, Rng& rng);

}  // namespace freqact
