#include <cmath>
#include <vector>

#include "doctest.h"
#include "freqact/errors.hpp"
#include "freqact/sampler.hpp"
#include "freqact/trajectory.hpp"

using namespace freqact;

namespace {

ModelConfig sampler_config() {
  ModelConfig c;
  c.horizon = 16;
  c.action_dim = 2;
  c.obs_dim = 3;
  c.obs_step = 2;
  c.enc_embed = 16;
  c.enc_depth = 1;
  c.enc_heads = 2;
  c.dec_embed = 16;
  c.dec_depth = 1;
  c.dec_heads = 2;
  c.mlp_ratio = 2;
  c.state_mlp = 8;
  c.diff_steps = 20;
  c.head_depth = 1;
  c.head_width = 16;
  return c;
}

std::vector<double> ramp_obs(const ModelConfig& c) {
  std::vector<double> v((size_t)c.obs_step * c.obs_dim);
  for (size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * (double)i - 0.2;
  return v;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("even level schedules hit the documented spacings") {
  CHECK(default_schedule(16, 4).levels == std::vector<int>{0, 4, 8, 12, 16});
  CHECK(default_schedule(16, 1).levels == std::vector<int>{0, 16});
  CHECK(default_schedule(16, 2).levels == std::vector<int>{0, 8, 16});
  CHECK(default_schedule(16, 8).levels ==
        std::vector<int>{0, 2, 4, 6, 8, 10, 12, 14, 16});
  CHECK(default_schedule(16, 16).levels.size() == 17);
  CHECK_THROWS_AS(default_schedule(16, 0), ConfigError);
  CHECK_THROWS_AS(default_schedule(16, 17), ConfigError);
}

TEST_CASE("schedule validation catches malformed level lists") {
  FreqSchedule s;
  s.levels = {0, 4, 16};
  CHECK_NOTHROW(s.validate(16));
  s.levels = {1, 16};
  CHECK_THROWS_AS(s.validate(16), ConfigError);
  s.levels = {0, 12};
  CHECK_THROWS_AS(s.validate(16), ConfigError);
  s.levels = {0, 8, 8, 16};
  CHECK_THROWS_AS(s.validate(16), ConfigError);
  s.levels = {0};
  CHECK_THROWS_AS(s.validate(16), ConfigError);
}

TEST_CASE("mask schedule is the literal cosine formula") {
  for (int n : {1, 2, 4, 8, 16}) {
    for (int step = 0; step < n; ++step) {
      const double expect =
          std::cos(M_PI / 2.0 * ((double)(step + 1) / (double)n));
      CHECK(cosine_mask_ratio(step, n) == expect);
    }
    CHECK(cosine_mask_ratio(n - 1, n) < 1e-15);
  }
  CHECK_THROWS_AS(cosine_mask_ratio(-1, 4), DataError);
  CHECK_THROWS_AS(cosine_mask_ratio(4, 4), DataError);
}

TEST_CASE("denoising step grid strides up from 1 and skips the tail") {
  CHECK(ddim_taus(100, 10) ==
        std::vector<int>{1, 11, 21, 31, 41, 51, 61, 71, 81, 91});
  CHECK(ddim_taus(100, 2) == std::vector<int>{1, 51});
  CHECK(ddim_taus(10, 10) ==
        std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(ddim_taus(20, 5) == std::vector<int>{1, 5, 9, 13, 17});
  CHECK(ddim_taus(10, 3) == std::vector<int>{1, 4, 7});
  CHECK_THROWS_AS(ddim_taus(100, 0), ConfigError);
  CHECK_THROWS_AS(ddim_taus(10, 11), ConfigError);
}

TEST_CASE("a perfect noise predictor recovers the target exactly") {
  auto sched = DiffusionSchedule::cosine(100);
  Rng rng(71);
  const size_t n = 32;
  std::vector<double> target(n);
  for (double& v : target) v = rng.uniform(-1.0, 1.0);
  // Knows the target, so it reports the exact noise present in x_t.
  EpsFn oracle = [&](const std::vector<double>& x, int t) {
    const double ab = sched.abar(t);
    std::vector<double> e(n);
    for (size_t i = 0; i < n; ++i)
      e[i] = (x[i] - std::sqrt(ab) * target[i]) / std::sqrt(1.0 - ab);
    return e;
  };
  for (double eta : {0.0, 1.0}) {
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    int nfe = 0;
    auto out = ddim_sample(sched, oracle, x, 10, eta, rng, &nfe);
    CHECK(nfe == 10);
    for (size_t i = 0; i < n; ++i)
      CHECK(std::fabs(out[i] - target[i]) < 1e-6);
  }
}

TEST_CASE("a zero predictor rescales the chain by the final signal level") {
  auto sched = DiffusionSchedule::cosine(50);
  EpsFn zero = [](const std::vector<double>& x, int) {
    return std::vector<double>(x.size(), 0.0);
  };
  Rng rng(73);
  std::vector<double> x = {0.4, -1.3, 2.0};
  auto out = ddim_sample(sched, zero, x, 5, 0.0, rng);
  // The chain telescopes from its own starting step, the largest tau.
  const double gain = 1.0 / std::sqrt(sched.abar(ddim_taus(50, 5).back()));
  for (size_t i = 0; i < x.size(); ++i)
    CHECK(out[i] == doctest::Approx(x[i] * gain).epsilon(1e-12));
}

TEST_CASE("deterministic chains ignore the noise stream") {
  auto sched = DiffusionSchedule::cosine(30);
  EpsFn half = [](const std::vector<double>& x, int) {
    std::vector<double> e(x.size());
    for (size_t i = 0; i < x.size(); ++i) e[i] = 0.5 * x[i];
    return e;
  };
  std::vector<double> x = {1.0, -0.5};
  Rng ra(75), rb(76);
  auto a = ddim_sample(sched, half, x, 6, 0.0, ra);
  auto b = ddim_sample(sched, half, x, 6, 0.0, rb);
  CHECK(a == b);
  CHECK(ra.state() == Rng(75).state());

  // Stochastic chains consume noise and depend on the stream.
  auto c = ddim_sample(sched, half, x, 6, 1.0, ra);
  auto d = ddim_sample(sched, half, x, 6, 1.0, rb);
  CHECK(c != d);
}

TEST_CASE("predictor shape mismatches are rejected") {
  auto sched = DiffusionSchedule::cosine(10);
  EpsFn bad = [](const std::vector<double>&, int) {
    return std::vector<double>(1, 0.0);
  };
  Rng rng(77);
  std::vector<double> x = {1.0, 2.0};
  CHECK_THROWS_AS(ddim_sample(sched, bad, x, 2, 0.0, rng), ShapeError);
}

TEST_CASE("coarse-to-fine generation walks the level schedule") {
  auto cfg = sampler_config();
  FreqPolicyModel m(cfg, 81);
  auto schedule = default_schedule(cfg.horizon, 4);
  Rng rng(83);
  GenerationTrace trace;
  auto out = hierarchical_generate(m, ramp_obs(cfg), schedule, 10, 0.0, rng,
                                   &trace);
  REQUIRE((int)out.size() == cfg.horizon * cfg.action_dim);
  REQUIRE((int)trace.iterations.size() == 4);
  CHECK(trace.nfe == 4 * 10);
  for (int i = 0; i < 4; ++i)
    CHECK(trace.iterations[i].level == schedule.levels[i]);

  // The mask starts full and shrinks along the cosine schedule.
  CHECK(trace.iterations[0].masked == cfg.horizon);
  int prev = cfg.horizon;
  for (int i = 1; i < 4; ++i) {
    const int expect = std::min(
        prev, (int)std::lround(cosine_mask_ratio(i - 1, 4) * cfg.horizon));
    CHECK(trace.iterations[i].masked == expect);
    prev = trace.iterations[i].masked;
  }
  CHECK(out == trace.iterations.back().estimate);
}

TEST_CASE("every refeed is band limited to the next level") {
  auto cfg = sampler_config();
  FreqPolicyModel m(cfg, 85);
  auto schedule = default_schedule(cfg.horizon, 4);
  Rng rng(87);
  GenerationTrace trace;
  hierarchical_generate(m, ramp_obs(cfg), schedule, 5, 0.0, rng, &trace);
  for (size_t i = 0; i < trace.iterations.size(); ++i) {
    const auto& it = trace.iterations[i];
    const int next_level = schedule.levels[i + 1];
    Trajectory refeed(cfg.horizon, cfg.action_dim);
    refeed.values = it.refeed;
    Trajectory est(cfg.horizon, cfg.action_dim);
    est.values = it.estimate;
    Spectrum sr = dct_forward(refeed), se = dct_forward(est);
    for (int d = 0; d < cfg.action_dim; ++d) {
      for (int j = 0; j < next_level; ++j)
        CHECK(sr.at(j, d) == doctest::Approx(se.at(j, d)).epsilon(1e-9));
      for (int j = next_level; j < cfg.horizon; ++j)
        CHECK(std::fabs(sr.at(j, d)) < 1e-9);
    }
  }
}

TEST_CASE("ablated generation refeeds the raw estimate") {
  auto cfg = sampler_config();
  cfg.use_dct = false;
  FreqPolicyModel m(cfg, 89);
  auto schedule = default_schedule(cfg.horizon, 2);
  Rng rng(91);
  GenerationTrace trace;
  hierarchical_generate(m, ramp_obs(cfg), schedule, 5, 0.0, rng, &trace);
  for (const auto& it : trace.iterations) CHECK(it.refeed == it.estimate);
}

TEST_CASE("generation is reproducible from the seed") {
  auto cfg = sampler_config();
  FreqPolicyModel m(cfg, 93);
  auto schedule = default_schedule(cfg.horizon, 4);
  Rng ra(95), rb(95), rc(96);
  auto a = hierarchical_generate(m, ramp_obs(cfg), schedule, 5, 0.0, ra);
  auto b = hierarchical_generate(m, ramp_obs(cfg), schedule, 5, 0.0, rb);
  auto c = hierarchical_generate(m, ramp_obs(cfg), schedule, 5, 0.0, rc);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("single iteration generation degenerates to plain denoising") {
  auto cfg = sampler_config();
  FreqPolicyModel m(cfg, 97);
  auto schedule = default_schedule(cfg.horizon, 1);
  Rng rng(99);
  GenerationTrace trace;
  hierarchical_generate(m, ramp_obs(cfg), schedule, 10, 0.0, rng, &trace);
  REQUIRE((int)trace.iterations.size() == 1);
  CHECK(trace.iterations[0].level == 0);
  CHECK(trace.iterations[0].masked == cfg.horizon);
  CHECK(trace.nfe == 10);
}

}  // TEST_SUITE
