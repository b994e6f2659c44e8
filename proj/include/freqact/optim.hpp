#pragma once

#include <functional>
#include <string>
#include <vector>

#include "freqact/nn.hpp"

namespace freqact {

// Decoupled weight decay: p -= lr*wd*p, then the bias-corrected Adam step
// p -= lr * mhat / (sqrt(vhat) + eps).
struct AdamW {
  double lr, beta1, beta2, weight_decay;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<std::vector<double>> m, v;

  AdamW(const ParamStore& store, double lr, double beta1, double beta2,
        double weight_decay);
  // lr_now overrides the stored peak rate for this step (scheduler hook).
  void step(ParamStore& store, double lr_now);
  void step(ParamStore& store) { step(store, lr); }
};

// Half-cosine decay from peak to 0 across total_steps.
double cosine_lr(double peak, long step, long total_steps);

struct GradCheckReport {
  double max_rel = 0.0;
  double mean_rel = 0.0;
  int checked = 0;
  std::string worst_param;
  bool pass = false;
};

// Compares backward() gradients against central differences (eps) on up to
// max_probes randomly chosen parameter entries. make_loss must rebuild the
// scalar loss graph from current parameter values; two evaluations that
// disagree bitwise abort with NumericError. Relative error uses a 1e-3
// denominator floor so finite-difference noise on near-zero gradients does
// not dominate.
GradCheckReport grad_check(const std::function<Var()>& make_loss,
                           ParamStore& store, double tolerance, Rng& rng,
                           int max_probes = 256, double eps = 1e-5);

}  // namespace freqact
