#include "freqact/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "freqact/errors.hpp"
#include "freqact/masking.hpp"

namespace freqact {

void FreqSchedule::validate(int horizon) const {
  if (levels.size() < 2)
    throw ConfigError("frequency schedule needs at least two levels");
  if (levels.front() != 0)
    throw ConfigError("frequency schedule must start at level 0");
  if (levels.back() != horizon)
    throw ConfigError("frequency schedule must end at the horizon");
  for (size_t i = 1; i < levels.size(); ++i)
    if (levels[i] <= levels[i - 1])
      throw ConfigError("frequency schedule levels must increase strictly");
}

FreqSchedule default_schedule(int horizon, int n_iter) {
  if (n_iter < 1 || n_iter > horizon)
    throw ConfigError("iteration count " + std::to_string(n_iter) +
                      " outside [1, " + std::to_string(horizon) + "]");
  FreqSchedule s;
  s.levels.resize(n_iter + 1);
  for (int i = 0; i <= n_iter; ++i)
    s.levels[i] = (int)std::lround((double)i * horizon / n_iter);
  s.validate(horizon);
  return s;
}

double cosine_mask_ratio(int step, int n_iter) {
  if (n_iter < 1 || step < 0 || step >= n_iter)
    throw DataError("mask ratio step " + std::to_string(step) +
                    " outside [0, " + std::to_string(n_iter) + ")");
  return std::cos(M_PI / 2.0 * ((double)(step + 1) / (double)n_iter));
}

std::vector<int> ddim_taus(int t_diff, int ddim_steps) {
  if (ddim_steps < 1 || ddim_steps > t_diff)
    throw ConfigError("ddim step count " + std::to_string(ddim_steps) +
                      " outside [1, " + std::to_string(t_diff) + "]");
  // Uniform stride starting at 1, so the chain begins one stride below
  // t_diff. The terminal steps of the clipped cosine schedule have
  // near-zero alpha-bar; starting there multiplies predictor error by
  // 1/sqrt(abar) (about 2000x at t_diff = 100) and the chain diverges.
  const int stride = t_diff / ddim_steps;
  std::vector<int> taus(ddim_steps);
  for (int j = 0; j < ddim_steps; ++j) taus[j] = 1 + j * stride;
  return taus;
}

std::vector<double> ddim_sample(const DiffusionSchedule& sched,
                                const EpsFn& eps_fn, std::vector<double> x,
                                int ddim_steps, double eta, Rng& rng,
                                int* nfe) {
  const auto taus = ddim_taus(sched.t_diff, ddim_steps);
  for (int j = ddim_steps - 1; j >= 0; --j) {
    const int t = taus[j];
    const double ab_t = sched.abar(t);
    const double ab_prev = j > 0 ? sched.abar(taus[j - 1]) : 1.0;
    const std::vector<double> e = eps_fn(x, t);
    if (e.size() != x.size())
      throw ShapeError("ddim: predictor returned " + std::to_string(e.size()) +
                       " values for " + std::to_string(x.size()));
    if (nfe) ++*nfe;
    const double sigma =
        eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) *
        std::sqrt(1.0 - ab_t / ab_prev);
    const double dir = std::sqrt(std::max(1.0 - ab_prev - sigma * sigma, 0.0));
    const double sa_t = std::sqrt(ab_t), sn_t = std::sqrt(1.0 - ab_t);
    const double sa_prev = std::sqrt(ab_prev);
    for (size_t i = 0; i < x.size(); ++i) {
      const double x0 = (x[i] - sn_t * e[i]) / sa_t;
      x[i] = sa_prev * x0 + dir * e[i];
    }
    if (eta > 0.0 && sigma > 0.0)
      for (double& v : x) v += sigma * rng.normal();
  }
  return x;
}

std::vector<double> hierarchical_generate(const FreqPolicyModel& model,
                                          const std::vector<double>& obs,
                                          const FreqSchedule& schedule,
                                          int ddim_steps, double eta, Rng& rng,
                                          GenerationTrace* trace) {
  const ModelConfig& cfg = model.config();
  schedule.validate(cfg.horizon);
  const int n_iter = schedule.iterations();
  const int t = cfg.horizon, d = cfg.action_dim;
  const size_t n = (size_t)t * d;

  NoGrad guard;
  Var obs_tok = model.encode_observation(obs, 1);
  if (trace) {
    trace->iterations.clear();
    trace->nfe = 0;
  }
  int nfe = 0;

  std::vector<double> estimate(n, 0.0);
  std::vector<bool> mask(t, true);
  for (int i = 0; i < n_iter; ++i) {
    const int level = schedule.levels[i];
    const int hidden = popcount(mask);
    const std::vector<int> levels = {level};
    auto context = model.build_context(estimate, 1, levels);
    Var z = model.decode(
        model.encode(obs_tok, context, levels, mask), levels, mask);

    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    EpsFn eps_fn = [&](const std::vector<double>& x_t, int step) {
      Var e = model.eps_predict(x_t, {step}, levels, z);
      return e->data;
    };
    estimate =
        ddim_sample(model.schedule(), eps_fn, std::move(x), ddim_steps, eta,
                    rng, &nfe);

    shrink_mask(&mask, cosine_mask_ratio(i, n_iter), rng);
    if (trace) {
      GenerationIteration it;
      it.level = level;
      it.masked = hidden;
      it.estimate = estimate;
      it.refeed = model.build_context(estimate, 1, {schedule.levels[i + 1]});
      trace->iterations.push_back(it);
    }
  }
  if (trace) trace->nfe = nfe;
  return estimate;
}

}  // namespace freqact
