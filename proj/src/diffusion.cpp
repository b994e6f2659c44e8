#include "freqact/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "freqact/errors.hpp"

namespace freqact {

DiffusionSchedule DiffusionSchedule::cosine(int t_diff) {
  if (t_diff < 1) throw ConfigError("diffusion: need at least one step");
  DiffusionSchedule s;
  s.t_diff = t_diff;
  const double offset = 0.008;
  auto f = [&](double t) {
    const double a = std::cos((t / t_diff + offset) / (1.0 + offset) * M_PI / 2.0);
    return a * a;
  };
  const double f0 = f(0.0);
  // Raw cumulative curve, then per-step betas clipped away from 1 so the
  // rebuilt product never collapses to zero.
  std::vector<double> raw(t_diff + 1);
  for (int t = 0; t <= t_diff; ++t) raw[t] = f((double)t) / f0;
  s.betas.resize(t_diff);
  s.alpha_bar.resize(t_diff);
  double prod = 1.0;
  for (int t = 1; t <= t_diff; ++t) {
    double beta = 1.0 - raw[t] / raw[t - 1];
    beta = std::clamp(beta, 0.0, 0.999);
    s.betas[t - 1] = beta;
    prod *= 1.0 - beta;
    s.alpha_bar[t - 1] = prod;
  }
  return s;
}

double DiffusionSchedule::abar(int t) const {
  if (t < 1 || t > t_diff)
    throw DataError("diffusion: step " + std::to_string(t) + " outside [1, " +
                    std::to_string(t_diff) + "]");
  return alpha_bar[t - 1];
}

void corrupt(const DiffusionSchedule& sched, const std::vector<double>& x,
             const std::vector<double>& eps, int t, std::vector<double>* x_t) {
  if (x.size() != eps.size())
    throw DataError("corrupt: signal and noise length mismatch");
  const double ab = sched.abar(t);
  const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
  x_t->resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) (*x_t)[i] = sa * x[i] + sn * eps[i];
}

}  // namespace freqact
