#include "freqact/optim.hpp"

#include <algorithm>
#include <cmath>

#include "freqact/errors.hpp"

namespace freqact {

AdamW::AdamW(const ParamStore& store, double lr, double beta1, double beta2,
             double weight_decay)
    : lr(lr), beta1(beta1), beta2(beta2), weight_decay(weight_decay) {
  if (lr <= 0.0) throw ConfigError("adamw: learning rate must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("adamw: betas must lie in [0, 1)");
  m.resize(store.params.size());
  v.resize(store.params.size());
  for (size_t i = 0; i < store.params.size(); ++i) {
    m[i].assign(store.params[i]->size(), 0.0);
    v[i].assign(store.params[i]->size(), 0.0);
  }
}

void AdamW::step(ParamStore& store, double lr_now) {
  if (store.params.size() != m.size())
    throw ConfigError("adamw: parameter set changed since construction");
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, (double)step_count);
  const double bc2 = 1.0 - std::pow(beta2, (double)step_count);
  for (size_t i = 0; i < store.params.size(); ++i) {
    Tensor& p = *store.params[i];
    p.ensure_grad();
    double* mi = m[i].data();
    double* vi = v[i].data();
    const long n = (long)p.size();
#pragma omp parallel for if (n >= 4096) schedule(static)
    for (long j = 0; j < n; ++j) {
      const double g = p.grad[j];
      mi[j] = beta1 * mi[j] + (1.0 - beta1) * g;
      vi[j] = beta2 * vi[j] + (1.0 - beta2) * g * g;
      const double mhat = mi[j] / bc1;
      const double vhat = vi[j] / bc2;
      p.data[j] -= lr_now * weight_decay * p.data[j];
      p.data[j] -= lr_now * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double cosine_lr(double peak, long step, long total_steps) {
  if (total_steps <= 0) return peak;
  const double frac = std::clamp((double)step / (double)total_steps, 0.0, 1.0);
  return peak * 0.5 * (1.0 + std::cos(M_PI * frac));
}

GradCheckReport grad_check(const std::function<Var()>& make_loss,
                           ParamStore& store, double tolerance, Rng& rng,
                           int max_probes, double eps) {
  store.zero_grad();
  Var loss = make_loss();
  {
    Var again = make_loss();
    if (loss->data[0] != again->data[0])
      throw NumericError(
          "grad_check: loss function is not deterministic (" +
          std::to_string(loss->data[0]) + " vs " +
          std::to_string(again->data[0]) + ")");
  }
  backward(loss);

  std::vector<std::vector<double>> analytic(store.params.size());
  for (size_t i = 0; i < store.params.size(); ++i)
    analytic[i] = store.params[i]->grad;

  std::vector<std::pair<size_t, size_t>> probes;
  const size_t total = store.total_size();
  if ((long)total <= (long)max_probes) {
    for (size_t i = 0; i < store.params.size(); ++i)
      for (size_t j = 0; j < store.params[i]->size(); ++j)
        probes.push_back({i, j});
  } else {
    for (int t = 0; t < max_probes; ++t) {
      size_t flat = (size_t)rng.uniform_int(0, (long)total - 1);
      size_t i = 0;
      while (flat >= store.params[i]->size()) {
        flat -= store.params[i]->size();
        ++i;
      }
      probes.push_back({i, flat});
    }
  }

  GradCheckReport report;
  double sum_rel = 0.0;
  for (auto [i, j] : probes) {
    double& slot = store.params[i]->data[j];
    const double saved = slot;
    slot = saved + eps;
    const double fp = make_loss()->data[0];
    slot = saved - eps;
    const double fm = make_loss()->data[0];
    slot = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i][j];
    const double rel =
        std::fabs(a - numeric) /
        std::max({std::fabs(a), std::fabs(numeric), 1e-3});
    sum_rel += rel;
    ++report.checked;
    if (rel > report.max_rel) {
      report.max_rel = rel;
      report.worst_param = store.params[i]->name + "[" + std::to_string(j) +
                           "] analytic=" + std::to_string(a) +
                           " numeric=" + std::to_string(numeric);
    }
  }
  report.mean_rel = report.checked ? sum_rel / report.checked : 0.0;
  report.pass = report.max_rel < tolerance;
  return report;
}

}  // namespace freqact
