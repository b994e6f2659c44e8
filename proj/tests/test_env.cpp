#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "freqact/dataset.hpp"
#include "freqact/env.hpp"
#include "freqact/errors.hpp"
#include "freqact/eval.hpp"

using namespace freqact;

namespace {

ModelConfig reach_micro() {
  ModelConfig c;
  c.horizon = 16;
  c.action_dim = 2;
  c.obs_dim = 6;
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

int run_expert_episode(ToyEnv env, uint64_t seed, uint64_t id,
                       bool* success) {
  Rng rng = Rng::stream(seed, (long)id);
  auto obs = env.reset(rng);
  *success = false;
  for (;;) {
    auto r = env.step(expert_action(env, obs));
    obs = r.obs;
    if (r.done) {
      *success = r.success;
      return env.steps_taken();
    }
  }
}

}  // namespace

TEST_SUITE("env") {

TEST_CASE("episodes are pure functions of seed and actions") {
  for (auto proto : {ToyEnv::reach2d(), ToyEnv::pusht_lite()}) {
    ToyEnv a = proto, b = proto;
    Rng ra(301), rb(301);
    auto oa = a.reset(ra);
    auto ob = b.reset(rb);
    CHECK(oa == ob);
    Rng script(303);
    for (int s = 0; s < 20; ++s) {
      std::vector<double> act = {script.uniform(-1.0, 1.0),
                                 script.uniform(-1.0, 1.0)};
      auto sa = a.step(act);
      auto sb = b.step(act);
      CHECK(sa.obs == sb.obs);
      CHECK(sa.done == sb.done);
      if (sa.done) break;
    }
  }
}

TEST_CASE("reach2d expert succeeds essentially always") {
  int ok = 0, worst = 0;
  for (int e = 0; e < 500; ++e) {
    bool success;
    const int len = run_expert_episode(ToyEnv::reach2d(), 11, e, &success);
    ok += success ? 1 : 0;
    worst = std::max(worst, len);
  }
  CHECK(ok >= 495);
  CHECK(worst <= 60);
}

TEST_CASE("pusht expert clears the scripted-controller bar") {
  int ok = 0;
  for (int e = 0; e < 200; ++e) {
    bool success;
    run_expert_episode(ToyEnv::pusht_lite(), 13, e, &success);
    ok += success ? 1 : 0;
  }
  CHECK(ok >= 190);
}

TEST_CASE("actions clamp to the unit box") {
  ToyEnv a = ToyEnv::reach2d(), b = ToyEnv::reach2d();
  Rng ra(305), rb(305);
  a.reset(ra);
  b.reset(rb);
  auto sa = a.step({5.0, -9.0});
  auto sb = b.step({1.0, -1.0});
  CHECK(sa.obs == sb.obs);
}

TEST_CASE("reach2d speed never exceeds the clamp") {
  ToyEnv env = ToyEnv::reach2d();
  Rng rng(307);
  env.reset(rng);
  for (int s = 0; s < 60; ++s) {
    auto r = env.step({1.0, 1.0});
    const double speed = std::hypot(r.obs[2], r.obs[3]);
    CHECK(speed <= 1.0 + 1e-12);
    if (r.done) break;
  }
}

TEST_CASE("finished episodes reject further steps") {
  ToyEnv env = ToyEnv::reach2d();
  CHECK_THROWS_AS(env.step({0.0, 0.0}), DataError);
  Rng rng(309);
  auto obs = env.reset(rng);
  for (;;) {
    auto r = env.step(expert_action(env, obs));
    obs = r.obs;
    if (r.done) break;
  }
  CHECK_THROWS_AS(env.step({0.0, 0.0}), DataError);
}

TEST_CASE("angle wrapping stays in the principal interval") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(3.0 * M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-3.0 * M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(0.3) == doctest::Approx(0.3));
  CHECK(wrap_angle(2.0 * M_PI) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("radial pushes keep the block heading, tangential rubs twist it") {
  // Steering straight at the block center keeps the contact normal parallel
  // to the motion, so the heading must stay put (up to rounding).
  ToyEnv env = ToyEnv::pusht_lite();
  Rng rng(311);
  auto obs = env.reset(rng);
  const double th0 = std::atan2(obs[5], obs[4]);
  bool touched = false;
  std::vector<double> b0 = {obs[2], obs[3]};
  for (int s = 0; s < 40; ++s) {
    double ux = obs[2] - obs[0], uy = obs[3] - obs[1];
    const double d = std::max(std::hypot(ux, uy), 1e-12);
    auto r = env.step({0.5 * ux / d, 0.5 * uy / d});
    obs = r.obs;
    if (obs[2] != b0[0] || obs[3] != b0[1]) touched = true;
    CHECK(std::fabs(std::atan2(obs[5], obs[4]) - th0) < 1e-9);
    if (r.done) break;
  }
  CHECK(touched);

  // Aiming past the center produces an off-center contact whose tangential
  // component twists the heading.
  ToyEnv env2 = ToyEnv::pusht_lite();
  Rng rng2(311);
  obs = env2.reset(rng2);
  double ux = obs[2] - obs[0], uy = obs[3] - obs[1];
  double d = std::hypot(ux, uy);
  const double px = -uy / d, py = ux / d;
  double max_twist = 0.0;
  for (int s = 0; s < 40; ++s) {
    const double tx = obs[2] + 0.12 * px, ty = obs[3] + 0.12 * py;
    double vx = tx - obs[0], vy = ty - obs[1];
    const double vd = std::max(std::hypot(vx, vy), 1e-12);
    auto r = env2.step({0.5 * vx / vd, 0.5 * vy / vd});
    obs = r.obs;
    max_twist = std::max(
        max_twist, std::fabs(wrap_angle(std::atan2(obs[5], obs[4]) - th0)));
    if (r.done) break;
  }
  CHECK(max_twist > 1e-6);
}

TEST_CASE("environment lookup by name") {
  CHECK(ToyEnv::by_name("reach2d").variant() == "reach2d");
  CHECK(ToyEnv::by_name("pusht_lite").obs_dim() == 9);
  CHECK(ToyEnv::reach2d().obs_dim() == 6);
  CHECK_THROWS_AS(ToyEnv::by_name("cartpole"), ConfigError);
}

}  // TEST_SUITE

TEST_SUITE("dataset") {

TEST_CASE("generated demonstrations are consistent and all successful") {
  auto set = generate_demos(ToyEnv::reach2d(), 16, 0.0, 21);
  CHECK(set.variant == "reach2d");
  CHECK((int)set.episodes.size() == 16);
  for (const auto& ep : set.episodes) {
    CHECK(ep.success);
    CHECK(ep.length >= 1);
    CHECK(ep.length <= 60);
    CHECK(ep.obs.size() == (size_t)(ep.length + 1) * 6);
    CHECK(ep.actions.size() == (size_t)ep.length * 2);
  }
  for (int d = 0; d < 2; ++d) CHECK(set.act_lo[d] < set.act_hi[d]);
}

TEST_CASE("clean demonstrations replay to success deterministically") {
  auto set = generate_demos(ToyEnv::reach2d(), 12, 0.0, 23);
  auto report = replay_demos(ToyEnv::reach2d(), set);
  CHECK(report.success_rate == 1.0);
  auto pt = generate_demos(ToyEnv::pusht_lite(), 8, 0.0, 25);
  CHECK(replay_demos(ToyEnv::pusht_lite(), pt).success_rate == 1.0);
}

TEST_CASE("normalization maps the corpus into the unit box and back") {
  auto set = generate_demos(ToyEnv::reach2d(), 8, 0.0, 27);
  auto windows = demo_windows(set, 2, 16, 8);
  for (const auto& w : windows)
    for (double v : w.actions) {
      CHECK(v >= -1.0 - 1e-12);
      CHECK(v <= 1.0 + 1e-12);
    }
  CHECK(normalize_value(unnormalize_value(0.37, -2.0, 3.0), -2.0, 3.0) ==
        doctest::Approx(0.37).epsilon(1e-15));
  CHECK(normalize_value(5.0, 1.0, 1.0) == 0.0);
  CHECK(unnormalize_value(0.9, 1.0, 1.0) == 1.0);
}

TEST_CASE("windows pad the front with the first observation and the tail with the last action") {
  auto set = generate_demos(ToyEnv::reach2d(), 4, 0.0, 29);
  const auto& ep = set.episodes[0];
  auto windows = demo_windows(set, 2, 16, 8);
  // Window count per episode: one start per action_step over the length.
  size_t expect = 0;
  for (const auto& e : set.episodes) expect += (size_t)(e.length + 7) / 8;
  CHECK(windows.size() == expect);

  const auto& w0 = windows[0];
  for (int d = 0; d < 6; ++d) {
    const double n0 = normalize_value(ep.obs[d], set.obs_lo[d], set.obs_hi[d]);
    CHECK(w0.obs[d] == n0);
    CHECK(w0.obs[6 + d] == n0);
  }
  // Find the episode's final window and check its tail repeats.
  const size_t last_start = ((size_t)(ep.length - 1) / 8) * 8;
  const size_t widx = last_start / 8;
  const auto& wl = windows[widx];
  const int last = ep.length - 1;
  for (int h = 0; h < 16; ++h) {
    const int idx = std::min((int)last_start + h, last);
    for (int d = 0; d < 2; ++d)
      CHECK(wl.actions[(size_t)h * 2 + d] ==
            normalize_value(ep.actions[(size_t)idx * 2 + d], set.act_lo[d],
                            set.act_hi[d]));
  }
}

TEST_CASE("noise presets perturb normalized actions with the right variance") {
  auto clean = generate_demos(ToyEnv::reach2d(), 320, 0.0, 31);
  auto noisy = generate_demos(ToyEnv::reach2d(), 320, 0.1, 31);
  REQUIRE(clean.episodes.size() == noisy.episodes.size());
  CHECK(clean.act_lo == noisy.act_lo);
  CHECK(clean.act_hi == noisy.act_hi);
  double sum = 0.0, sumsq = 0.0;
  long n = 0;
  for (size_t e = 0; e < clean.episodes.size(); ++e) {
    const auto& ce = clean.episodes[e];
    const auto& ne = noisy.episodes[e];
    REQUIRE(ce.length == ne.length);
    CHECK(ce.obs == ne.obs);
    for (size_t i = 0; i < ce.actions.size(); ++i) {
      const int d = (int)(i % 2);
      const double dc = normalize_value(ne.actions[i], clean.act_lo[d],
                                        clean.act_hi[d]) -
                        normalize_value(ce.actions[i], clean.act_lo[d],
                                        clean.act_hi[d]);
      sum += dc;
      sumsq += dc * dc;
      ++n;
    }
  }
  REQUIRE(n >= 10000);
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::fabs(var - 0.01) < 0.0005);
}

TEST_CASE("datasets survive a save and load round trip bit for bit") {
  namespace fs = std::filesystem;
  auto set = generate_demos(ToyEnv::pusht_lite(), 6, 0.05, 33);
  const std::string dir =
      (fs::temp_directory_path() / "freqact_demo_rt").string();
  fs::remove_all(dir);
  save_demos(set, dir);
  auto back = load_demos(dir);
  CHECK(back.variant == set.variant);
  CHECK(back.obs_dim == set.obs_dim);
  CHECK(back.action_dim == set.action_dim);
  CHECK(back.noise_std == set.noise_std);
  CHECK(back.base_seed == set.base_seed);
  CHECK(back.obs_lo == set.obs_lo);
  CHECK(back.obs_hi == set.obs_hi);
  CHECK(back.act_lo == set.act_lo);
  CHECK(back.act_hi == set.act_hi);
  REQUIRE(back.episodes.size() == set.episodes.size());
  for (size_t e = 0; e < set.episodes.size(); ++e) {
    CHECK(back.episodes[e].seed == set.episodes[e].seed);
    CHECK(back.episodes[e].length == set.episodes[e].length);
    CHECK(back.episodes[e].success == set.episodes[e].success);
    CHECK(back.episodes[e].obs == set.episodes[e].obs);
    CHECK(back.episodes[e].actions == set.episodes[e].actions);
  }
  fs::remove_all(dir);
}

TEST_CASE("malformed dataset directories are rejected with context") {
  namespace fs = std::filesystem;
  const std::string dir =
      (fs::temp_directory_path() / "freqact_demo_bad").string();
  fs::remove_all(dir);
  CHECK_THROWS_AS(load_demos(dir), DataError);
  auto set = generate_demos(ToyEnv::reach2d(), 2, 0.0, 35);
  save_demos(set, dir);
  {
    std::ofstream m(dir + "/manifest.txt", std::ios::trunc);
    m << "variant=reach2d\n";
  }
  CHECK_THROWS_WITH_AS(load_demos(dir), doctest::Contains("missing key"),
                       DataError);
  fs::remove_all(dir);
}

TEST_CASE("batch sampling draws complete windows") {
  auto set = generate_demos(ToyEnv::reach2d(), 4, 0.0, 37);
  auto windows = demo_windows(set, 2, 16, 8);
  Rng rng(39);
  auto b = sample_batch(windows, 5, rng);
  CHECK(b.count == 5);
  CHECK(b.obs.size() == (size_t)5 * 2 * 6);
  CHECK(b.actions.size() == (size_t)5 * 16 * 2);
  CHECK_THROWS_AS(sample_batch({}, 4, rng), DataError);
  CHECK_THROWS_AS(generate_demos(ToyEnv::reach2d(), 0, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(generate_demos(ToyEnv::reach2d(), 2, -0.5, 1), ConfigError);
}

}  // TEST_SUITE

TEST_SUITE("eval") {

TEST_CASE("lossless compression replay equals verbatim replay") {
  auto set = generate_demos(ToyEnv::reach2d(), 16, 0.0, 41);
  auto verbatim = replay_demos(ToyEnv::reach2d(), set);
  auto lossless = replay_compressed(ToyEnv::reach2d(), set, 1.0);
  CHECK(lossless.success_rate == verbatim.success_rate);
  CHECK(verbatim.success_rate == 1.0);
}

TEST_CASE("heavier compression cannot beat lighter compression here") {
  auto set = generate_demos(ToyEnv::reach2d(), 24, 0.0, 43);
  auto mid = replay_compressed(ToyEnv::reach2d(), set, 0.5);
  auto low = replay_compressed(ToyEnv::reach2d(), set, 0.125);
  CHECK(mid.success_rate >= low.success_rate);
  CHECK_THROWS_AS(replay_compressed(ToyEnv::reach2d(), set, 0.0), ConfigError);
  CHECK_THROWS_AS(replay_compressed(ToyEnv::reach2d(), set, 1.5), ConfigError);
}

TEST_CASE("random actions are a weak baseline on reach2d") {
  auto report = random_baseline(ToyEnv::reach2d(), 100, 45);
  CHECK(report.success_rate < 0.3);
  auto again = random_baseline(ToyEnv::reach2d(), 100, 45);
  CHECK(eval_report_json(report) == eval_report_json(again));
}

TEST_CASE("closed-loop rollout of an untrained model completes and stays near chance") {
  auto cfg = reach_micro();
  FreqPolicyModel m(cfg, 47);
  auto set = generate_demos(ToyEnv::reach2d(), 8, 0.0, 49);
  RolloutConfig rc;
  rc.episodes = 10;
  rc.seed = 51;
  auto report = rollout_policy(ToyEnv::reach2d(), m, stats_of(set), rc);
  CHECK(report.episodes == 10);
  CHECK(report.success_rate <= 0.5);
  for (const auto& r : report.records) {
    CHECK(r.length >= 1);
    CHECK(r.length <= 60);
  }
}

TEST_CASE("rollouts are byte deterministic for a fixed seed") {
  auto cfg = reach_micro();
  FreqPolicyModel m(cfg, 53);
  auto set = generate_demos(ToyEnv::reach2d(), 8, 0.0, 55);
  RolloutConfig rc;
  rc.episodes = 4;
  rc.seed = 57;
  auto a = rollout_policy(ToyEnv::reach2d(), m, stats_of(set), rc);
  auto b = rollout_policy(ToyEnv::reach2d(), m, stats_of(set), rc);
  CHECK(eval_report_json(a) == eval_report_json(b));
  CHECK(eval_report_json(a).find("wall_ms") == std::string::npos);
  CHECK(eval_report_jsonl(a).find("wall_ms") != std::string::npos);
}

TEST_CASE("spectral traces cover every iteration and stay finite") {
  auto cfg = reach_micro();
  FreqPolicyModel m(cfg, 59);
  auto set = generate_demos(ToyEnv::reach2d(), 8, 0.0, 61);
  RolloutConfig rc;
  rc.episodes = 3;
  rc.seed = 63;
  rc.collect_spectral = true;
  auto report = rollout_policy(ToyEnv::reach2d(), m, stats_of(set), rc);
  for (const auto& r : report.records) {
    REQUIRE((int)r.spectral_distance.size() == rc.n_iter);
    for (double d : r.spectral_distance) CHECK(std::isfinite(d));
  }
}

TEST_CASE("rollout validates dimension agreement") {
  auto cfg = reach_micro();
  cfg.obs_dim = 9;
  FreqPolicyModel m(cfg, 65);
  auto set = generate_demos(ToyEnv::reach2d(), 4, 0.0, 67);
  RolloutConfig rc;
  rc.episodes = 1;
  CHECK_THROWS_AS(rollout_policy(ToyEnv::reach2d(), m, stats_of(set), rc),
                  DataError);
}

TEST_CASE("relative-change rows render like the comparison table") {
  CHECK(format_with_relative(0.85, 0.9) == "0.850^{-5.6%}");
  CHECK(format_with_relative(0.9, 0.9) == "0.900^{+0.0%}");
  CHECK(format_with_relative(0.95, 0.9) == "0.950^{+5.6%}");
  CHECK(format_with_relative(0.5, 0.0) == "0.500^{+0.0%}");
}

}  // TEST_SUITE
