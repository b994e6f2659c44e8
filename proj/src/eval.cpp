#include "freqact/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "freqact/csv.hpp"
#include "freqact/errors.hpp"
#include "freqact/trajectory.hpp"
#include "json.hpp"

namespace freqact {

namespace {

using json = nlohmann::json;

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void finalize(EvalReport* report) {
  report->episodes = (int)report->records.size();
  int successes = 0;
  double total_len = 0.0;
  for (const auto& r : report->records) {
    successes += r.success ? 1 : 0;
    total_len += r.length;
  }
  report->success_rate =
      report->episodes ? (double)successes / report->episodes : 0.0;
  report->mean_length = report->episodes ? total_len / report->episodes : 0.0;
}

json record_json(const EpisodeRecord& r, bool with_wall) {
  json j;
  j["seed"] = r.seed;
  j["success"] = r.success;
  j["length"] = r.length;
  if (!r.spectral_distance.empty()) {
    j["spectral_distance"] = r.spectral_distance;
    j["spectral_nonincreasing"] = r.spectral_nonincreasing;
  }
  if (with_wall) j["wall_ms"] = r.wall_ms;
  return j;
}

// First horizon expert actions for the identically seeded episode, repeating
// the last action when the expert finishes early.
std::vector<double> expert_window(const ToyEnv& proto, uint64_t base_seed,
                                  int episode, int horizon) {
  ToyEnv env = proto;
  Rng rng = Rng::stream(base_seed, episode);
  auto obs = env.reset(rng);
  std::vector<double> actions;
  const int d = env.action_dim();
  for (int s = 0; s < horizon; ++s) {
    auto a = expert_action(env, obs);
    actions.insert(actions.end(), a.begin(), a.end());
    auto r = env.step(a);
    obs = r.obs;
    if (r.done) break;
  }
  while ((int)actions.size() < horizon * d) {
    const size_t tail = actions.size() - d;
    for (int c = 0; c < d; ++c) actions.push_back(actions[tail + c]);
  }
  return actions;
}

double spectrum_distance(const Spectrum& a, const Spectrum& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.coeffs.size(); ++i) {
    const double diff = a.coeffs[i] - b.coeffs[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace

std::string eval_report_json(const EvalReport& report) {
  json j;
  j["variant"] = report.variant;
  j["episodes"] = report.episodes;
  j["success_rate"] = report.success_rate;
  j["mean_length"] = report.mean_length;
  j["config"] = report.config_echo;
  json recs = json::array();
  for (const auto& r : report.records) recs.push_back(record_json(r, false));
  j["records"] = recs;
  return j.dump(2) + "\n";
}

std::string eval_report_jsonl(const EvalReport& report) {
  std::ostringstream out;
  for (const auto& r : report.records) out << record_json(r, true).dump() << "\n";
  return out.str();
}

std::string eval_report_table(const EvalReport& report) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-12s episodes %-4d success %.3f mean_len %.1f\n",
                report.variant.c_str(), report.episodes, report.success_rate,
                report.mean_length);
  out << buf;
  for (const auto& [k, v] : report.config_echo) out << "  " << k << "=" << v << "\n";
  return out.str();
}

EvalReport rollout_policy(const ToyEnv& proto, const FreqPolicyModel& model,
                          const NormStats& norm, const RolloutConfig& rc) {
  const ModelConfig& cfg = model.config();
  if (rc.episodes < 1) throw ConfigError("need at least one episode");
  if (rc.action_step < 1 || rc.action_step > cfg.horizon)
    throw ConfigError("action step outside [1, horizon]");
  if ((int)norm.obs_lo.size() != proto.obs_dim() ||
      (int)norm.act_lo.size() != proto.action_dim())
    throw DataError("normalization ranges do not match the environment");
  if (proto.obs_dim() != cfg.obs_dim || proto.action_dim() != cfg.action_dim)
    throw DataError("model dimensions do not match the environment");

  const auto schedule = default_schedule(cfg.horizon, rc.n_iter);
  EvalReport report;
  report.variant = proto.variant();
  report.config_echo["n_iter"] = std::to_string(rc.n_iter);
  report.config_echo["ddim_steps"] = std::to_string(rc.ddim_steps);
  report.config_echo["eta"] = csv::fmt(rc.eta);
  report.config_echo["episodes"] = std::to_string(rc.episodes);
  report.config_echo["seed"] = std::to_string(rc.seed);
  report.config_echo["action_step"] = std::to_string(rc.action_step);

  for (int e = 0; e < rc.episodes; ++e) {
    const double t0 = now_ms();
    ToyEnv env = proto;
    Rng rng = Rng::stream(rc.seed, e);
    auto obs = env.reset(rng);
    std::vector<std::vector<double>> history(cfg.obs_step, obs);

    EpisodeRecord rec;
    rec.seed = (uint64_t)e;
    bool done = false, success = false;
    bool first_window = true;
    while (!done) {
      std::vector<double> window;
      for (const auto& o : history) {
        auto n = o;
        normalize_rows(norm.obs_lo, norm.obs_hi, &n);
        window.insert(window.end(), n.begin(), n.end());
      }
      GenerationTrace trace;
      auto actions = hierarchical_generate(
          model, window, schedule, rc.ddim_steps, rc.eta, rng,
          rc.collect_spectral && first_window ? &trace : nullptr);
      if (rc.collect_spectral && first_window) {
        auto exp = expert_window(proto, rc.seed, e, cfg.horizon);
        normalize_rows(norm.act_lo, norm.act_hi, &exp);
        Trajectory exp_traj(cfg.horizon, cfg.action_dim);
        exp_traj.values = exp;
        const Spectrum exp_spec = dct_forward(exp_traj);
        for (size_t i = 0; i < trace.iterations.size(); ++i) {
          const int level = schedule.levels[i + 1];
          Trajectory ref(cfg.horizon, cfg.action_dim);
          ref.values = trace.iterations[i].refeed;
          const Spectrum got = dct_forward(ref);
          const Spectrum want = truncate(exp_spec, level);
          rec.spectral_distance.push_back(spectrum_distance(got, want));
        }
        rec.spectral_nonincreasing = true;
        for (size_t i = 1; i < rec.spectral_distance.size(); ++i)
          if (rec.spectral_distance[i] >
              rec.spectral_distance[i - 1] + 1e-9)
            rec.spectral_nonincreasing = false;
      }
      first_window = false;
      unnormalize_rows(norm.act_lo, norm.act_hi, &actions);
      for (int s = 0; s < rc.action_step && !done; ++s) {
        std::vector<double> a(actions.begin() + (size_t)s * cfg.action_dim,
                              actions.begin() + (size_t)(s + 1) * cfg.action_dim);
        auto r = env.step(a);
        history.erase(history.begin());
        history.push_back(r.obs);
        done = r.done;
        success = r.success;
      }
    }
    rec.success = success;
    rec.length = env.steps_taken();
    rec.wall_ms = now_ms() - t0;
    report.records.push_back(std::move(rec));
  }
  finalize(&report);
  return report;
}

namespace {

EvalReport replay_impl(const ToyEnv& proto, const DemoSet& set, double p,
                       bool compress) {
  set.validate();
  if (proto.variant() != set.variant)
    throw DataError("demo set was recorded on '" + set.variant + "'");
  EvalReport report;
  report.variant = proto.variant();
  report.config_echo["mode"] = compress ? "compressed" : "verbatim";
  if (compress) report.config_echo["p"] = csv::fmt(p);
  report.config_echo["episodes"] = std::to_string(set.episodes.size());

  for (const auto& ep : set.episodes) {
    const double t0 = now_ms();
    ToyEnv env = proto;
    Rng rng = Rng::stream(set.base_seed, (long)ep.seed);
    env.reset(rng);
    std::vector<double> actions = ep.actions;
    if (compress) {
      Trajectory traj(ep.length, set.action_dim);
      traj.values = actions;
      const int k = (int)std::min(std::max(1L, std::lround(p * ep.length)),
                                  (long)ep.length);
      actions = idct_k(dct_forward(traj), k).values;
    }
    EpisodeRecord rec;
    rec.seed = ep.seed;
    bool done = false;
    for (int s = 0; s < ep.length && !done; ++s) {
      std::vector<double> a(actions.begin() + (size_t)s * set.action_dim,
                            actions.begin() + (size_t)(s + 1) * set.action_dim);
      auto r = env.step(a);
      done = r.done;
      rec.success = r.success;
    }
    rec.length = env.steps_taken();
    rec.wall_ms = now_ms() - t0;
    report.records.push_back(std::move(rec));
  }
  finalize(&report);
  return report;
}

}  // namespace

EvalReport replay_demos(const ToyEnv& proto, const DemoSet& set) {
  return replay_impl(proto, set, 1.0, false);
}

EvalReport replay_compressed(const ToyEnv& proto, const DemoSet& set,
                             double p) {
  if (!(p > 0.0) || p > 1.0)
    throw ConfigError("frequency ratio must lie in (0, 1]");
  return replay_impl(proto, set, p, true);
}

EvalReport random_baseline(const ToyEnv& proto, int episodes, uint64_t seed) {
  if (episodes < 1) throw ConfigError("need at least one episode");
  EvalReport report;
  report.variant = proto.variant();
  report.config_echo["mode"] = "random";
  report.config_echo["episodes"] = std::to_string(episodes);
  report.config_echo["seed"] = std::to_string(seed);
  for (int e = 0; e < episodes; ++e) {
    ToyEnv env = proto;
    Rng rng = Rng::stream(seed, e);
    env.reset(rng);
    EpisodeRecord rec;
    rec.seed = (uint64_t)e;
    bool done = false;
    while (!done) {
      std::vector<double> a(env.action_dim());
      for (double& v : a) v = rng.uniform(-1.0, 1.0);
      auto r = env.step(a);
      done = r.done;
      rec.success = r.success;
    }
    rec.length = env.steps_taken();
    report.records.push_back(std::move(rec));
  }
  finalize(&report);
  return report;
}

std::string format_with_relative(double value, double baseline) {
  double rel = 0.0;
  if (baseline != 0.0) rel = (value - baseline) / baseline * 100.0;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f^{%+.1f%%}", value, rel);
  return buf;
}

}  // namespace freqact
