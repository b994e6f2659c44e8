#include "freqact/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "freqact/csv.hpp"
#include "freqact/errors.hpp"
#include "freqact/trajectory.hpp"

namespace fs = std::filesystem;

namespace freqact {

namespace {

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp + "' for writing");
    out << content;
    if (!out) throw DataError("write failed for '" + tmp + "'");
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string ep_name(int index, const char* what) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ep%04d.%s.csv", index, what);
  return buf;
}

Trajectory as_trajectory(const std::vector<double>& values, int rows,
                         int cols) {
  Trajectory t(rows, cols);
  t.values = values;
  return t;
}

void fit_range(const std::vector<double>& values, int dim,
               std::vector<double>* lo, std::vector<double>* hi) {
  for (size_t i = 0; i < values.size(); ++i) {
    const int d = (int)(i % dim);
    (*lo)[d] = std::min((*lo)[d], values[i]);
    (*hi)[d] = std::max((*hi)[d], values[i]);
  }
}

}  // namespace

void DemoSet::validate() const {
  if (episodes.empty()) throw DataError("demo set has no episodes");
  if (obs_dim < 1 || action_dim < 1)
    throw DataError("demo set has invalid dimensions");
  if ((int)obs_lo.size() != obs_dim || (int)obs_hi.size() != obs_dim ||
      (int)act_lo.size() != action_dim || (int)act_hi.size() != action_dim)
    throw DataError("demo set normalization ranges have the wrong size");
  for (size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    if (ep.length < 1 ||
        ep.obs.size() != (size_t)(ep.length + 1) * obs_dim ||
        ep.actions.size() != (size_t)ep.length * action_dim)
      throw DataError("episode " + std::to_string(e) +
                      " has inconsistent lengths");
  }
}

NormStats stats_of(const DemoSet& set) {
  return {set.obs_lo, set.obs_hi, set.act_lo, set.act_hi};
}

double normalize_value(double v, double lo, double hi) {
  if (hi <= lo) return 0.0;
  return 2.0 * (v - lo) / (hi - lo) - 1.0;
}

double unnormalize_value(double y, double lo, double hi) {
  if (hi <= lo) return lo;
  return lo + (y + 1.0) * 0.5 * (hi - lo);
}

void normalize_rows(const std::vector<double>& lo,
                    const std::vector<double>& hi, std::vector<double>* v) {
  const size_t dim = lo.size();
  for (size_t i = 0; i < v->size(); ++i)
    (*v)[i] = normalize_value((*v)[i], lo[i % dim], hi[i % dim]);
}

void unnormalize_rows(const std::vector<double>& lo,
                      const std::vector<double>& hi, std::vector<double>* v) {
  const size_t dim = lo.size();
  for (size_t i = 0; i < v->size(); ++i)
    (*v)[i] = unnormalize_value((*v)[i], lo[i % dim], hi[i % dim]);
}

DemoSet generate_demos(const ToyEnv& proto, int n_episodes, double noise_std,
                       uint64_t base_seed) {
  if (n_episodes < 1) throw ConfigError("need at least one episode");
  if (noise_std < 0.0) throw ConfigError("noise std must be nonnegative");
  DemoSet set;
  set.variant = proto.variant();
  set.obs_dim = proto.obs_dim();
  set.action_dim = proto.action_dim();
  set.noise_std = noise_std;
  set.base_seed = base_seed;

  const int max_attempts = std::max(n_episodes + 10, n_episodes * 10 / 9);
  int attempts = 0;
  while ((int)set.episodes.size() < n_episodes) {
    if (attempts >= max_attempts)
      throw ConfigError("expert success rate below the 95% threshold on '" +
                        set.variant + "'");
    ToyEnv env = proto;
    Rng rng = Rng::stream(base_seed, attempts);
    Demonstration demo;
    demo.seed = (uint64_t)attempts;
    auto obs = env.reset(rng);
    demo.obs.insert(demo.obs.end(), obs.begin(), obs.end());
    bool success = false;
    for (int s = 0; s < env.max_steps(); ++s) {
      auto action = expert_action(env, obs);
      demo.actions.insert(demo.actions.end(), action.begin(), action.end());
      auto r = env.step(action);
      obs = r.obs;
      demo.obs.insert(demo.obs.end(), obs.begin(), obs.end());
      ++demo.length;
      if (r.done) {
        success = r.success;
        break;
      }
    }
    ++attempts;
    if (success) {
      demo.success = true;
      set.episodes.push_back(std::move(demo));
    }
  }
  if ((double)n_episodes / attempts < 0.95)
    throw ConfigError("expert success rate below the 95% threshold on '" +
                      set.variant + "'");

  set.obs_lo.assign(set.obs_dim, std::numeric_limits<double>::infinity());
  set.obs_hi.assign(set.obs_dim, -std::numeric_limits<double>::infinity());
  set.act_lo.assign(set.action_dim, std::numeric_limits<double>::infinity());
  set.act_hi.assign(set.action_dim, -std::numeric_limits<double>::infinity());
  for (const auto& ep : set.episodes) {
    fit_range(ep.obs, set.obs_dim, &set.obs_lo, &set.obs_hi);
    fit_range(ep.actions, set.action_dim, &set.act_lo, &set.act_hi);
  }

  if (noise_std > 0.0) {
    Rng noise = Rng::stream(base_seed, 1 << 20);
    for (auto& ep : set.episodes)
      for (size_t i = 0; i < ep.actions.size(); ++i) {
        const int d = (int)(i % set.action_dim);
        double y = normalize_value(ep.actions[i], set.act_lo[d], set.act_hi[d]);
        y += noise_std * noise.normal();
        ep.actions[i] = unnormalize_value(y, set.act_lo[d], set.act_hi[d]);
      }
  }
  set.validate();
  return set;
}

std::vector<TrainBatch> demo_windows(const DemoSet& set, int obs_step,
                                     int horizon, int action_step) {
  set.validate();
  if (obs_step < 1 || horizon < 1 || action_step < 1 || action_step > horizon)
    throw ConfigError("invalid window chunking");
  std::vector<TrainBatch> windows;
  for (const auto& ep : set.episodes) {
    for (int s = 0; s < ep.length; s += action_step) {
      TrainBatch w;
      w.count = 1;
      for (int j = 0; j < obs_step; ++j) {
        const int idx = std::max(s - (obs_step - 1 - j), 0);
        for (int d = 0; d < set.obs_dim; ++d)
          w.obs.push_back(normalize_value(
              ep.obs[(size_t)idx * set.obs_dim + d], set.obs_lo[d],
              set.obs_hi[d]));
      }
      for (int h = 0; h < horizon; ++h) {
        const int idx = std::min(s + h, ep.length - 1);
        for (int d = 0; d < set.action_dim; ++d)
          w.actions.push_back(normalize_value(
              ep.actions[(size_t)idx * set.action_dim + d], set.act_lo[d],
              set.act_hi[d]));
      }
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

TrainBatch sample_batch(const std::vector<TrainBatch>& windows, int batch_size,
                        Rng& rng) {
  if (windows.empty()) throw DataError("no training windows");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  TrainBatch b;
  b.count = batch_size;
  for (int i = 0; i < batch_size; ++i) {
    const auto& w = windows[rng.uniform_int(0, (long)windows.size() - 1)];
    b.obs.insert(b.obs.end(), w.obs.begin(), w.obs.end());
    b.actions.insert(b.actions.end(), w.actions.begin(), w.actions.end());
  }
  return b;
}

void save_demos(const DemoSet& set, const std::string& dir) {
  set.validate();
  fs::create_directories(dir);
  {
    std::ostringstream m;
    m << "variant=" << set.variant << "\n";
    m << "episodes=" << set.episodes.size() << "\n";
    m << "obs_dim=" << set.obs_dim << "\n";
    m << "action_dim=" << set.action_dim << "\n";
    m << "noise_std=" << csv::fmt(set.noise_std) << "\n";
    m << "seed=" << set.base_seed << "\n";
    write_file_atomic(dir + "/manifest.txt", m.str());
  }
  {
    std::ostringstream s;
    s << "kind,dim,lo,hi\n";
    for (int d = 0; d < set.obs_dim; ++d)
      s << "obs," << d << "," << csv::fmt(set.obs_lo[d]) << ","
        << csv::fmt(set.obs_hi[d]) << "\n";
    for (int d = 0; d < set.action_dim; ++d)
      s << "act," << d << "," << csv::fmt(set.act_lo[d]) << ","
        << csv::fmt(set.act_hi[d]) << "\n";
    write_file_atomic(dir + "/stats.csv", s.str());
  }
  {
    std::ostringstream e;
    e << "index,seed,length,success\n";
    for (size_t i = 0; i < set.episodes.size(); ++i)
      e << i << "," << set.episodes[i].seed << "," << set.episodes[i].length
        << "," << (set.episodes[i].success ? 1 : 0) << "\n";
    write_file_atomic(dir + "/episodes.csv", e.str());
  }
  for (size_t i = 0; i < set.episodes.size(); ++i) {
    const auto& ep = set.episodes[i];
    write_file_atomic(
        dir + "/" + ep_name((int)i, "obs"),
        trajectory_to_csv(as_trajectory(ep.obs, ep.length + 1, set.obs_dim)));
    write_file_atomic(dir + "/" + ep_name((int)i, "actions"),
                      trajectory_to_csv(as_trajectory(
                          ep.actions, ep.length, set.action_dim)));
  }
}

DemoSet load_demos(const std::string& dir) {
  DemoSet set;
  std::map<std::string, std::string> kv;
  for (const auto& line : csv::lines(read_file(dir + "/manifest.txt"))) {
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("manifest line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key :
       {"variant", "episodes", "obs_dim", "action_dim", "noise_std", "seed"})
    if (!kv.count(key))
      throw DataError(std::string("manifest missing key '") + key + "'");
  set.variant = kv["variant"];
  const long n = csv::parse_long(kv["episodes"], "manifest episodes");
  set.obs_dim = (int)csv::parse_long(kv["obs_dim"], "manifest obs_dim");
  set.action_dim =
      (int)csv::parse_long(kv["action_dim"], "manifest action_dim");
  set.noise_std = csv::parse_double(kv["noise_std"], "manifest noise_std");
  set.base_seed = (uint64_t)csv::parse_long(kv["seed"], "manifest seed");

  set.obs_lo.assign(set.obs_dim, 0.0);
  set.obs_hi.assign(set.obs_dim, 0.0);
  set.act_lo.assign(set.action_dim, 0.0);
  set.act_hi.assign(set.action_dim, 0.0);
  {
    const auto rows = csv::lines(read_file(dir + "/stats.csv"));
    for (size_t i = 1; i < rows.size(); ++i) {
      const auto f = csv::split(rows[i], ',');
      if (f.size() != 4) throw DataError("stats.csv row has wrong arity");
      const int d = (int)csv::parse_long(f[1], "stats dim");
      const double lo = csv::parse_double(f[2], "stats lo");
      const double hi = csv::parse_double(f[3], "stats hi");
      if (f[0] == "obs" && d >= 0 && d < set.obs_dim) {
        set.obs_lo[d] = lo;
        set.obs_hi[d] = hi;
      } else if (f[0] == "act" && d >= 0 && d < set.action_dim) {
        set.act_lo[d] = lo;
        set.act_hi[d] = hi;
      } else {
        throw DataError("stats.csv row out of range: " + rows[i]);
      }
    }
  }
  {
    const auto rows = csv::lines(read_file(dir + "/episodes.csv"));
    for (size_t i = 1; i < rows.size(); ++i) {
      const auto f = csv::split(rows[i], ',');
      if (f.size() != 4) throw DataError("episodes.csv row has wrong arity");
      Demonstration ep;
      ep.seed = (uint64_t)csv::parse_long(f[1], "episode seed");
      ep.length = (int)csv::parse_long(f[2], "episode length");
      ep.success = csv::parse_long(f[3], "episode success") != 0;
      const int idx = (int)csv::parse_long(f[0], "episode index");
      Trajectory obs = trajectory_from_csv(read_file(dir + "/" +
                                                     ep_name(idx, "obs")));
      Trajectory act = trajectory_from_csv(
          read_file(dir + "/" + ep_name(idx, "actions")));
      if (obs.dim != set.obs_dim || act.dim != set.action_dim ||
          obs.horizon != ep.length + 1 || act.horizon != ep.length)
        throw DataError("episode " + std::to_string(idx) +
                        " files disagree with episodes.csv");
      ep.obs = obs.values;
      ep.actions = act.values;
      set.episodes.push_back(std::move(ep));
    }
  }
  if ((long)set.episodes.size() != n)
    throw DataError("manifest episode count disagrees with episodes.csv");
  set.validate();
  return set;
}

}  // namespace freqact
