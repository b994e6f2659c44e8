#include "freqact/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "freqact/errors.hpp"

namespace freqact {

namespace {

constexpr char kMagic[4] = {'F', 'Q', 'A', 'C'};
constexpr char kTrailer[4] = {'F', 'Q', 'E', 'D'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((char)((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((char)((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, (uint32_t)s.size());
  out += s;
}

void put_f64_span(std::string& out, const double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) put_f64(out, p[i]);
}

struct Reader {
  const std::string& buf;
  const std::string& path;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("corrupt checkpoint '" + path + "': " + what +
                    " at byte offset " + std::to_string(pos));
  }
  void need(size_t n, const char* what) {
    if (pos + n > buf.size()) fail(std::string("truncated ") + what);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= (uint32_t)(uint8_t)buf[pos + i] << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= (uint64_t)(uint8_t)buf[pos + i] << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* what) {
    const uint64_t bits = u64(what);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string str(const char* what) {
    const uint32_t n = u32(what);
    if (n > (1u << 20)) fail(std::string("oversized ") + what);
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  std::vector<double> f64_block(size_t n, const char* what) {
    if (n > (1u << 28)) fail(std::string("oversized ") + what);
    std::vector<double> v(n);
    for (size_t i = 0; i < n; ++i) v[i] = f64(what);
    return v;
  }
};

void put_range(std::string& out, const std::vector<double>& v) {
  put_u32(out, (uint32_t)v.size());
  put_f64_span(out, v.data(), v.size());
}

std::vector<double> read_range(Reader& r, const char* what) {
  const uint32_t n = r.u32(what);
  return r.f64_block(n, what);
}

}  // namespace

void save_checkpoint(const std::string& path, const FreqPolicyModel& model,
                     const std::map<std::string, std::string>& config_echo,
                     const NormStats& norm, uint64_t step, const AdamW* opt,
                     const Rng* rng) {
  const ParamStore& store = model.params();
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, step);

  put_u32(out, (uint32_t)config_echo.size());
  for (const auto& [k, v] : config_echo) {
    put_str(out, k);
    put_str(out, v);
  }

  put_range(out, norm.obs_lo);
  put_range(out, norm.obs_hi);
  put_range(out, norm.act_lo);
  put_range(out, norm.act_hi);

  put_u32(out, (uint32_t)store.params.size());
  for (const auto& p : store.params) {
    put_str(out, p->name);
    put_u32(out, (uint32_t)p->rows);
    put_u32(out, (uint32_t)p->cols);
    put_f64_span(out, p->data.data(), p->size());
  }

  out.push_back(opt ? 1 : 0);
  if (opt) {
    if (opt->m.size() != store.params.size())
      throw DataError("optimizer tracks " + std::to_string(opt->m.size()) +
                      " tensors but the model has " +
                      std::to_string(store.params.size()));
    put_u64(out, (uint64_t)opt->step_count);
    for (size_t i = 0; i < store.params.size(); ++i) {
      put_f64_span(out, opt->m[i].data(), opt->m[i].size());
      put_f64_span(out, opt->v[i].data(), opt->v[i].size());
    }
  }

  out.push_back(rng ? 1 : 0);
  if (rng)
    for (uint64_t w : rng->state()) put_u64(out, w);

  out.append(kTrailer, 4);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + tmp + "' for writing");
    f.write(out.data(), (std::streamsize)out.size());
    if (!f) throw DataError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());

  Reader r{buf, path};
  r.need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) r.fail("bad magic");
  r.pos = 4;

  CheckpointData c;
  c.version = r.u32("version");
  if (c.version != kCheckpointVersion) {
    r.pos = 4;
    r.fail("unsupported version " + std::to_string(c.version) + ", expected " +
           std::to_string(kCheckpointVersion));
  }
  c.step = r.u64("step counter");

  const uint32_t n_cfg = r.u32("config count");
  if (n_cfg > (1u << 16)) r.fail("oversized config table");
  for (uint32_t i = 0; i < n_cfg; ++i) {
    std::string k = r.str("config key");
    std::string v = r.str("config value");
    c.config[std::move(k)] = std::move(v);
  }

  c.norm.obs_lo = read_range(r, "obs range");
  c.norm.obs_hi = read_range(r, "obs range");
  c.norm.act_lo = read_range(r, "action range");
  c.norm.act_hi = read_range(r, "action range");
  if (c.norm.obs_lo.size() != c.norm.obs_hi.size() ||
      c.norm.act_lo.size() != c.norm.act_hi.size())
    r.fail("normalization ranges disagree in size");

  const uint32_t n_params = r.u32("parameter count");
  if (n_params > (1u << 20)) r.fail("oversized parameter table");
  c.params.resize(n_params);
  for (auto& e : c.params) {
    e.name = r.str("parameter name");
    e.rows = r.u32("parameter rows");
    e.cols = r.u32("parameter cols");
    e.values = r.f64_block((size_t)e.rows * e.cols, "parameter values");
  }

  r.need(1, "optimizer flag");
  c.has_optimizer = buf[r.pos++] != 0;
  if (c.has_optimizer) {
    c.optimizer_steps = r.u64("optimizer step count");
    c.opt_m.resize(n_params);
    c.opt_v.resize(n_params);
    for (uint32_t i = 0; i < n_params; ++i) {
      const size_t n = (size_t)c.params[i].rows * c.params[i].cols;
      c.opt_m[i] = r.f64_block(n, "optimizer first moment");
      c.opt_v[i] = r.f64_block(n, "optimizer second moment");
    }
  }

  r.need(1, "rng flag");
  c.has_rng = buf[r.pos++] != 0;
  if (c.has_rng)
    for (auto& w : c.rng_state) w = r.u64("rng state");

  r.need(4, "trailer");
  if (std::memcmp(buf.data() + r.pos, kTrailer, 4) != 0) r.fail("bad trailer");
  r.pos += 4;
  if (r.pos != buf.size()) r.fail("trailing garbage");
  return c;
}

void restore_model(const CheckpointData& ckpt, FreqPolicyModel& model) {
  ParamStore& store = model.params();
  if (ckpt.params.size() != store.params.size())
    throw DataError("checkpoint has " + std::to_string(ckpt.params.size()) +
                    " tensors but the model has " +
                    std::to_string(store.params.size()));
  for (const auto& e : ckpt.params) {
    if (!store.has(e.name))
      throw DataError("checkpoint tensor '" + e.name +
                      "' does not exist in the model");
    Var p = store.get(e.name);
    if (p->rows != (int)e.rows || p->cols != (int)e.cols)
      throw ShapeError("checkpoint tensor '" + e.name + "' is " +
                       std::to_string(e.rows) + "x" + std::to_string(e.cols) +
                       " but the model expects " + std::to_string(p->rows) +
                       "x" + std::to_string(p->cols));
    p->data = e.values;
  }
}

void restore_optimizer(const CheckpointData& ckpt, AdamW& opt) {
  if (!ckpt.has_optimizer)
    throw DataError("checkpoint carries no optimizer state");
  if (ckpt.opt_m.size() != opt.m.size())
    throw DataError("checkpoint optimizer tracks " +
                    std::to_string(ckpt.opt_m.size()) +
                    " tensors but this optimizer has " +
                    std::to_string(opt.m.size()));
  for (size_t i = 0; i < opt.m.size(); ++i) {
    if (ckpt.opt_m[i].size() != opt.m[i].size())
      throw ShapeError("optimizer moment " + std::to_string(i) + " has " +
                       std::to_string(ckpt.opt_m[i].size()) +
                       " entries, expected " + std::to_string(opt.m[i].size()));
    opt.m[i] = ckpt.opt_m[i];
    opt.v[i] = ckpt.opt_v[i];
  }
  opt.step_count = (long)ckpt.optimizer_steps;
}

}  // namespace freqact
