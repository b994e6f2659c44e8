#include "freqact/masking.hpp"

#include <algorithm>
#include <cmath>

#include "freqact/errors.hpp"

namespace freqact {

double adaptive_mask_ratio(int k, int horizon, double m) {
  if (horizon < 1 || k < 0 || k > horizon)
    throw DataError("adaptive_mask_ratio: level " + std::to_string(k) +
                    " outside [0, " + std::to_string(horizon) + "]");
  if (m < 0.0 || m > 1.0)
    throw DataError("adaptive_mask_ratio: base ratio outside [0, 1]");
  return m * (1.0 - (double)k / (double)horizon);
}

double truncated_normal(double center, double std, double lo, double hi,
                        Rng& rng) {
  if (!(hi > lo)) throw DataError("truncated_normal: empty interval");
  for (;;) {
    const double v = center + std * rng.normal();
    if (v >= lo && v <= hi) return v;
  }
}

std::vector<bool> sample_mask(double ratio, int horizon, double std,
                              Rng& rng) {
  if (horizon < 1) throw DataError("sample_mask: horizon must be positive");
  if (ratio < 0.0 || ratio > 1.0)
    throw DataError("sample_mask: ratio outside [0, 1]");
  std::vector<bool> mask(horizon, false);
  int count;
  if (ratio <= 0.0) {
    count = 0;
  } else if (ratio >= 1.0) {
    count = horizon;
  } else {
    const double eff = truncated_normal(ratio, std, 0.0, 1.0, rng);
    count = (int)std::lround(eff * horizon);
    count = std::clamp(count, 0, horizon);
  }
  // Partial Fisher-Yates over position indices.
  std::vector<int> idx(horizon);
  for (int i = 0; i < horizon; ++i) idx[i] = i;
  for (int i = 0; i < count; ++i) {
    const int j = (int)rng.uniform_int(i, horizon - 1);
    std::swap(idx[i], idx[j]);
    mask[idx[i]] = true;
  }
  return mask;
}

int popcount(const std::vector<bool>& mask) {
  int c = 0;
  for (bool b : mask) c += b ? 1 : 0;
  return c;
}

void shrink_mask(std::vector<bool>* mask, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio > 1.0)
    throw DataError("shrink_mask: ratio outside [0, 1]");
  const int horizon = (int)mask->size();
  const int current = popcount(*mask);
  int target = (int)std::lround(ratio * horizon);
  target = std::min(target, current);
  int reveal = current - target;
  std::vector<int> masked;
  for (int i = 0; i < horizon; ++i)
    if ((*mask)[i]) masked.push_back(i);
  for (int i = 0; i < reveal; ++i) {
    const int j = (int)rng.uniform_int(i, (long)masked.size() - 1);
    std::swap(masked[i], masked[j]);
    (*mask)[masked[i]] = false;
  }
}

}  // namespace freqact
