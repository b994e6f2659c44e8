#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "freqact/checkpoint.hpp"
#include "freqact/config.hpp"
#include "freqact/csv.hpp"
#include "freqact/dataset.hpp"
#include "freqact/env.hpp"
#include "freqact/errors.hpp"
#include "freqact/eval.hpp"
#include "freqact/kernels.hpp"
#include "freqact/model.hpp"
#include "freqact/optim.hpp"
#include "freqact/sampler.hpp"
#include "freqact/svg.hpp"
#include "freqact/trajectory.hpp"

namespace fs = std::filesystem;
using namespace freqact;

namespace {

#ifndef FREQACT_GIT_SHA
#define FREQACT_GIT_SHA "unknown"
#endif

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + tmp + "' for writing");
    f.write(content.data(), (std::streamsize)content.size());
    if (!f) throw DataError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

// Common flags every subcommand carries.
struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  long seed = -1;  // -1 means "leave the config seeds alone"
  std::string ckpt_path;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_ckpt) {
  cmd->add_option("--config", a.config_path, "config file (key = value lines)");
  cmd->add_option("--set", a.sets, "override, key=value (repeatable)")
      ->take_all();
  cmd->add_option("--out", a.out_dir, "output directory")->required();
  cmd->add_option("--seed", a.seed,
                  "master seed; overrides data.seed, train.seed, eval.seed");
  if (with_ckpt)
    cmd->add_option("--ckpt", a.ckpt_path, "checkpoint file")->required();
}

RunConfig effective_config(const CommonArgs& a,
                           const CheckpointData* ckpt = nullptr) {
  RunConfig cfg;
  if (ckpt) {
    if (!a.config_path.empty())
      throw ConfigError(
          "--config cannot be combined with --ckpt; the checkpoint already "
          "carries its configuration (use --set for overrides)");
    cfg = config_from_map(ckpt->config);
  } else {
    cfg = a.config_path.empty() ? default_config() : load_config(a.config_path);
  }
  for (const auto& s : a.sets) apply_override(cfg, s);
  if (a.seed >= 0) {
    apply_override(cfg, "data.seed=" + std::to_string(a.seed));
    apply_override(cfg, "train.seed=" + std::to_string(a.seed));
    apply_override(cfg, "eval.seed=" + std::to_string(a.seed));
  }
  return cfg;
}

void write_provenance(const std::string& out_dir, const RunConfig& cfg,
                      int argc, char** argv) {
  fs::create_directories(out_dir);
  write_atomic(out_dir + "/config.txt", config_echo(cfg));
  std::string p;
  p += "command =";
  for (int i = 0; i < argc; ++i) p += std::string(" ") + argv[i];
  p += "\ncommit = " FREQACT_GIT_SHA "\n";
  for (const char* k : {"data.seed", "train.seed", "eval.seed"})
    p += std::string(k) + " = " + cfg.gets(k) + "\n";
  write_atomic(out_dir + "/provenance.txt", p);
}

// Loads data.dir if set, otherwise generates demonstrations from the config
// and saves them under <out>/demos for reuse and inspection.
DemoSet obtain_dataset(const RunConfig& cfg, const std::string& out_dir) {
  const std::string dir = cfg.gets("data.dir");
  if (!dir.empty()) return load_demos(dir);
  const ToyEnv proto = ToyEnv::by_name(cfg.gets("env.name"));
  DemoSet set =
      generate_demos(proto, cfg.geti("data.episodes"),
                     cfg.getd("data.noise_std"), (uint64_t)cfg.geti("data.seed"));
  save_demos(set, out_dir + "/demos");
  return set;
}

std::vector<double> parse_fraction_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : csv::split(text)) {
    const double v = csv::parse_double(tok, "fraction list");
    if (v <= 0.0 || v > 1.0)
      throw ConfigError("fraction " + tok + " outside (0, 1]");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty fraction list");
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& tok : csv::split(text))
    out.push_back((int)csv::parse_long(tok, "integer list"));
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

// Episode actions normalized into the training view, as one trajectory.
Trajectory episode_trajectory(const DemoSet& set, const Demonstration& ep) {
  Trajectory t(ep.length, set.action_dim);
  for (int n = 0; n < ep.length; ++n)
    for (int j = 0; j < set.action_dim; ++j)
      t.at(n, j) = normalize_value(ep.actions[(size_t)n * set.action_dim + j],
                                   set.act_lo[j], set.act_hi[j]);
  return t;
}

int run_analyze(const CommonArgs& a, int argc, char** argv) {
  RunConfig cfg = effective_config(a);
  write_provenance(a.out_dir, cfg, argc, argv);
  DemoSet set = obtain_dataset(cfg, a.out_dir);

  std::vector<Trajectory> trajs;
  for (const auto& ep : set.episodes)
    trajs.push_back(episode_trajectory(set, ep));

  const int bands = cfg.geti("analyze.bands");
  if (bands < 1) throw ConfigError("analyze.bands must be positive");
  std::vector<double> edges;
  for (int b = 0; b <= bands; ++b) edges.push_back((double)b / bands);
  const BandEnergyTable table = band_energy_table(trajs, edges);
  write_atomic(a.out_dir + "/band_energy.csv", band_table_to_csv(table));
  write_atomic(
      a.out_dir + "/band_energy.svg",
      svg::heatmap("band energy share by action dimension", "frequency band",
                   "action dimension", table.dim, table.bands(), table.energy));

  // Mean retained-energy curve over episodes and dimensions.
  std::string curve = "p,energy_share\n";
  svg::Series cs{"mean energy share", {}, {}};
  for (int p = 0; p <= 100; p += 2) {
    double acc = 0.0;
    long n = 0;
    for (const auto& t : trajs) {
      const auto share = energy_proportion(dct_forward(t), (double)p);
      for (double v : share) {
        acc += v;
        ++n;
      }
    }
    const double mean = acc / (double)n;
    curve += std::to_string(p) + "," + csv::fmt(mean) + "\n";
    cs.x.push_back(p);
    cs.y.push_back(mean);
  }
  write_atomic(a.out_dir + "/energy_curve.csv", curve);
  write_atomic(a.out_dir + "/energy_curve.svg",
               svg::line_chart("retained energy vs kept-coefficient share",
                               "kept coefficients (%)", "energy share", {cs}));

  // Reconstruction overlays on the first episode.
  const auto fractions = parse_fraction_list(cfg.gets("analyze.fractions"));
  const Trajectory& first = trajs.at(0);
  const Spectrum spec = dct_forward(first);
  for (int j = 0; j < first.dim; ++j) {
    std::string head = "t,original";
    for (double f : fractions) head += ",p" + csv::fmt(f);
    std::string body;
    std::vector<svg::Series> series;
    series.push_back({"original", {}, {}});
    std::vector<Trajectory> recon;
    for (double f : fractions) {
      const int k = std::clamp((int)std::lround(f * first.horizon), 1,
                               first.horizon);
      recon.push_back(idct_k(spec, k));
      series.push_back({"p=" + csv::fmt(f), {}, {}});
    }
    for (int n = 0; n < first.horizon; ++n) {
      body += std::to_string(n) + "," + csv::fmt(first.at(n, j));
      series[0].x.push_back(n);
      series[0].y.push_back(first.at(n, j));
      for (size_t fi = 0; fi < recon.size(); ++fi) {
        body += "," + csv::fmt(recon[fi].at(n, j));
        series[fi + 1].x.push_back(n);
        series[fi + 1].y.push_back(recon[fi].at(n, j));
      }
      body += "\n";
    }
    const std::string stem = a.out_dir + "/overlay_dim" + std::to_string(j);
    write_atomic(stem + ".csv", head + "\n" + body);
    write_atomic(stem + ".svg",
                 svg::line_chart("band-limited reconstructions, dimension " +
                                     std::to_string(j),
                                 "time step", "normalized action", series));
  }
  std::cout << "analyze: " << trajs.size() << " episodes, " << bands
            << " bands -> " << a.out_dir << "\n";
  return 0;
}

struct TrainState {
  FreqPolicyModel model;
  AdamW opt;
  Rng rng;
  uint64_t start_step;
};

int run_train(const CommonArgs& a, const std::string& resume_path, int argc,
              char** argv) {
  RunConfig cfg;
  CheckpointData resume;
  const bool resuming = !resume_path.empty();
  if (resuming) {
    resume = read_checkpoint(resume_path);
    CommonArgs wrapped = a;
    cfg = effective_config(wrapped, &resume);
  } else {
    cfg = effective_config(a);
  }
  write_provenance(a.out_dir, cfg, argc, argv);

  DemoSet set = obtain_dataset(cfg, a.out_dir);
  const ModelConfig mcfg = model_config(cfg);
  auto windows = demo_windows(set, mcfg.obs_step, mcfg.horizon,
                              cfg.geti("model.action_step"));
  const NormStats norm = stats_of(set);

  const uint64_t seed = (uint64_t)cfg.geti("train.seed");
  FreqPolicyModel model(mcfg, seed);
  AdamW opt(model.params(), cfg.getd("train.lr"), cfg.getd("train.beta1"),
            cfg.getd("train.beta2"), cfg.getd("train.weight_decay"));
  Rng rng = Rng::stream(seed, 1);
  uint64_t start_step = 0;
  if (resuming) {
    restore_model(resume, model);
    restore_optimizer(resume, opt);
    if (!resume.has_rng)
      throw DataError("checkpoint '" + resume_path +
                      "' carries no rng state; training cannot resume");
    rng.set_state(resume.rng_state);
    start_step = resume.step;
  }

  const long total = cfg.geti("train.steps");
  if ((long)start_step > total)
    throw ConfigError("checkpoint is at step " + std::to_string(start_step) +
                      " but train.steps is " + std::to_string(total));
  const int batch_size = cfg.geti("train.batch_size");
  const int ckpt_every = cfg.geti("train.checkpoint_every");
  const int log_every = cfg.geti("train.log_every");
  const bool cosine = cfg.gets("train.lr_schedule") == "cosine";
  const double peak = cfg.getd("train.lr");

  auto echo_map = cfg.values;
  auto save = [&](const std::string& name, uint64_t step) {
    save_checkpoint(a.out_dir + "/" + name, model, echo_map, norm, step, &opt,
                    &rng);
  };

  std::string curve = "step,loss,lr\n";
  svg::Series ls{"batch loss", {}, {}};
  for (long s = (long)start_step; s < total; ++s) {
    const double lr_now = cosine ? cosine_lr(peak, s, total) : peak;
    TrainBatch batch = sample_batch(windows, batch_size, rng);
    const double loss = model.training_step(batch, opt, lr_now, rng);
    if (!std::isfinite(loss))
      throw NumericError("loss became non-finite at step " +
                         std::to_string(s));
    if (s % log_every == 0 || s + 1 == total) {
      curve += std::to_string(s) + "," + csv::fmt(loss) + "," +
               csv::fmt(lr_now) + "\n";
      ls.x.push_back((double)s);
      ls.y.push_back(loss);
    }
    if (ckpt_every > 0 && (s + 1) % ckpt_every == 0 && s + 1 != total)
      save("ckpt_" + std::to_string(s + 1) + ".bin", (uint64_t)(s + 1));
  }
  save("checkpoint.bin", (uint64_t)total);
  write_atomic(a.out_dir + "/loss_curve.csv", curve);
  write_atomic(a.out_dir + "/loss_curve.svg",
               svg::line_chart("training loss", "optimizer step", "loss",
                               {ls}));
  std::cout << "train: " << (total - (long)start_step) << " steps ("
            << start_step << ".." << total << ") -> " << a.out_dir
            << "/checkpoint.bin\n";
  return 0;
}

struct LoadedModel {
  RunConfig cfg;
  ModelConfig mcfg;
  FreqPolicyModel model;
  NormStats norm;
};

LoadedModel load_model(const CommonArgs& a, const CheckpointData& ckpt) {
  RunConfig cfg = effective_config(a, &ckpt);
  ModelConfig mcfg = model_config(cfg);
  FreqPolicyModel model(mcfg, (uint64_t)cfg.geti("train.seed"));
  restore_model(ckpt, model);
  return {std::move(cfg), mcfg, std::move(model), ckpt.norm};
}

RolloutConfig rollout_config(const RunConfig& cfg) {
  RolloutConfig rc;
  rc.n_iter = cfg.geti("sampler.n_iter");
  rc.ddim_steps = cfg.geti("sampler.num_sampling_steps");
  rc.eta = cfg.getd("sampler.eta");
  rc.episodes = cfg.geti("eval.episodes");
  rc.seed = (uint64_t)cfg.geti("eval.seed");
  rc.action_step = cfg.geti("model.action_step");
  return rc;
}

int run_eval(const CommonArgs& a, bool spectral, int argc, char** argv) {
  CheckpointData ckpt = read_checkpoint(a.ckpt_path);
  LoadedModel lm = load_model(a, ckpt);
  write_provenance(a.out_dir, lm.cfg, argc, argv);

  RolloutConfig rc = rollout_config(lm.cfg);
  rc.collect_spectral = spectral;
  const ToyEnv proto = ToyEnv::by_name(lm.cfg.gets("env.name"));
  EvalReport report = rollout_policy(proto, lm.model, lm.norm, rc);
  write_atomic(a.out_dir + "/report.json", eval_report_json(report));
  write_atomic(a.out_dir + "/report.jsonl", eval_report_jsonl(report));
  std::cout << eval_report_table(report);
  return 0;
}

int run_sample(const CommonArgs& a, const std::string& obs_path, int argc,
               char** argv) {
  CheckpointData ckpt = read_checkpoint(a.ckpt_path);
  LoadedModel lm = load_model(a, ckpt);
  write_provenance(a.out_dir, lm.cfg, argc, argv);

  // Raw observation history, one row per step.
  std::vector<double> obs;
  const auto rows = csv::lines(read_file(obs_path));
  for (const auto& row : rows) {
    const auto fields = csv::split(row);
    if ((int)fields.size() != lm.mcfg.obs_dim)
      throw ShapeError("observation row has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(lm.mcfg.obs_dim));
    for (const auto& f : fields) obs.push_back(csv::parse_double(f, obs_path));
  }
  if ((int)rows.size() != lm.mcfg.obs_step)
    throw ShapeError("observation file has " + std::to_string(rows.size()) +
                     " rows, expected " + std::to_string(lm.mcfg.obs_step));
  for (size_t i = 0; i < obs.size(); ++i) {
    const int j = (int)(i % lm.mcfg.obs_dim);
    obs[i] = normalize_value(obs[i], lm.norm.obs_lo[j], lm.norm.obs_hi[j]);
  }

  const FreqSchedule schedule =
      default_schedule(lm.mcfg.horizon, lm.cfg.geti("sampler.n_iter"));
  Rng rng = Rng::stream((uint64_t)lm.cfg.geti("eval.seed"), 0);
  GenerationTrace trace;
  const auto actions = hierarchical_generate(
      lm.model, obs, schedule, lm.cfg.geti("sampler.num_sampling_steps"),
      lm.cfg.getd("sampler.eta"), rng, &trace);

  auto unnorm_traj = [&](const std::vector<double>& flat) {
    Trajectory t(lm.mcfg.horizon, lm.mcfg.action_dim);
    for (int n = 0; n < t.horizon; ++n)
      for (int j = 0; j < t.dim; ++j)
        t.at(n, j) = unnormalize_value(flat[(size_t)n * t.dim + j],
                                       lm.norm.act_lo[j], lm.norm.act_hi[j]);
    return t;
  };

  write_atomic(a.out_dir + "/trajectory.csv",
               trajectory_to_csv(unnorm_traj(actions)));
  for (size_t i = 0; i < trace.iterations.size(); ++i) {
    const auto& it = trace.iterations[i];
    const Trajectory recon = unnorm_traj(it.refeed);
    write_atomic(a.out_dir + "/iter" + std::to_string(i) + "_recon.csv",
                 trajectory_to_csv(recon));
    const Spectrum spec = dct_forward(recon);
    std::string s = "index";
    for (int j = 0; j < spec.dim; ++j) s += ",dim" + std::to_string(j);
    s += "\n";
    for (int n = 0; n < spec.horizon; ++n) {
      s += std::to_string(n);
      for (int j = 0; j < spec.dim; ++j) s += "," + csv::fmt(spec.at(n, j));
      s += "\n";
    }
    write_atomic(a.out_dir + "/iter" + std::to_string(i) + "_spectrum.csv", s);
  }
  std::cout << "sample: " << trace.iterations.size() << " iterations, nfe "
            << trace.nfe << " -> " << a.out_dir << "\n";
  return 0;
}

int run_bench(const CommonArgs& a, int argc, char** argv) {
  CheckpointData ckpt = read_checkpoint(a.ckpt_path);
  LoadedModel lm = load_model(a, ckpt);
  write_provenance(a.out_dir, lm.cfg, argc, argv);

  const auto n_iters = parse_int_list(lm.cfg.gets("bench.n_iters"));
  const ToyEnv proto = ToyEnv::by_name(lm.cfg.gets("env.name"));

  std::string pareto = "n_iter,nfe,wall_ms_mean,success_rate\n";
  std::vector<double> xs, ys;
  std::vector<std::string> labels;
  for (int n : n_iters) {
    RolloutConfig rc = rollout_config(lm.cfg);
    rc.n_iter = n;
    rc.episodes = lm.cfg.geti("bench.episodes");
    EvalReport report = rollout_policy(proto, lm.model, lm.norm, rc);
    double wall = 0.0;
    long gens = 0;
    for (const auto& r : report.records) {
      wall += r.wall_ms;
      gens += (r.length + rc.action_step - 1) / rc.action_step;
    }
    const double wall_mean = gens > 0 ? wall / (double)gens : 0.0;
    const long nfe = (long)n * rc.ddim_steps;
    pareto += std::to_string(n) + "," + std::to_string(nfe) + "," +
              csv::fmt(wall_mean) + "," + csv::fmt(report.success_rate) + "\n";
    xs.push_back(wall_mean);
    ys.push_back(report.success_rate);
    labels.push_back("n_iter=" + std::to_string(n));
    std::cout << "bench n_iter=" << n << " nfe=" << nfe << " wall_ms_mean="
              << wall_mean << " success=" << report.success_rate << "\n";
  }
  write_atomic(a.out_dir + "/pareto.csv", pareto);
  write_atomic(a.out_dir + "/pareto.svg",
               svg::scatter("success rate vs generation wall time",
                            "wall ms per generation", "success rate", xs, ys,
                            labels));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("FREQACT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(t, &end, 10);
    if (end == t || *end != '\0' || n < 0) {
      std::cerr << "error: FREQACT_THREADS must be a nonnegative integer\n";
      return 2;
    }
    kernels::set_max_threads((int)n);
  }

  CLI::App app{
      "Frequency-space visuomotor policy: analyze datasets, train, "
      "evaluate, sample, and benchmark"};
  app.require_subcommand(1);

  CommonArgs analyze_args, train_args, eval_args, sample_args, bench_args;
  std::string resume_path, obs_path;
  bool eval_spectral = false;

  auto* analyze = app.add_subcommand(
      "analyze", "frequency-band energy structure of a demo set");
  add_common(analyze, analyze_args, false);

  auto* train =
      app.add_subcommand("train", "train a policy on demonstrations");
  add_common(train, train_args, false);
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "closed-loop policy evaluation");
  add_common(eval, eval_args, true);
  eval->add_flag("--spectral", eval_spectral,
                 "record per-iteration spectral distances to the expert");

  auto* sample = app.add_subcommand(
      "sample", "generate one trajectory from an observation history");
  add_common(sample, sample_args, true);
  sample->add_option("--obs", obs_path, "observation history CSV")->required();

  auto* bench = app.add_subcommand(
      "bench", "success/latency sweep over iteration counts");
  add_common(bench, bench_args, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) return run_analyze(analyze_args, argc, argv);
    if (train->parsed()) return run_train(train_args, resume_path, argc, argv);
    if (eval->parsed()) return run_eval(eval_args, eval_spectral, argc, argv);
    if (sample->parsed()) return run_sample(sample_args, obs_path, argc, argv);
    if (bench->parsed()) return run_bench(bench_args, argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
