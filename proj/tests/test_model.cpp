#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "freqact/csv.hpp"
#include "freqact/errors.hpp"
#include "freqact/masking.hpp"
#include "freqact/model.hpp"
#include "freqact/trajectory.hpp"

using namespace freqact;

namespace {

ModelConfig micro_config() {
  ModelConfig c;
  c.horizon = 4;
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
  c.diff_steps = 10;
  c.head_depth = 1;
  c.head_width = 16;
  return c;
}

TrainBatch make_batch(const ModelConfig& c, int count, double phase = 0.0) {
  TrainBatch b;
  b.count = count;
  b.obs.resize((size_t)count * c.obs_step * c.obs_dim);
  b.actions.resize((size_t)count * c.horizon * c.action_dim);
  for (size_t i = 0; i < b.obs.size(); ++i)
    b.obs[i] = std::sin(0.37 * (double)i + phase);
  for (size_t i = 0; i < b.actions.size(); ++i)
    b.actions[i] = 0.8 * std::sin(0.23 * (double)i + 1.1 * phase);
  return b;
}

// Gives the zero-initialized denoising head nonzero modulation and output
// weights so its per-position behavior becomes observable.
void randomize_head(FreqPolicyModel& model, uint64_t seed) {
  Rng rng(seed);
  auto& store = model.params();
  for (const auto& p : store.params)
    if (p->name.rfind("head.", 0) == 0) init_trunc_normal(p, 0.05, rng);
}

std::string golden_path(const std::string& name) {
  return std::string(FREQACT_TEST_DIR) + "/golden/" + name;
}

bool load_values(const std::string& path, std::vector<double>* out) {
  std::ifstream in(path);
  if (!in) return false;
  out->clear();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out->push_back(csv::parse_double(line, "golden value"));
  }
  return true;
}

void save_values(const std::string& path, const std::vector<double>& values) {
  std::ofstream out(path);
  for (double v : values) out << csv::fmt(v) << "\n";
}

// Compares against a frozen reference, creating it when FREQACT_BLESS is set.
void check_golden(const std::string& name, const std::vector<double>& values) {
  const std::string path = golden_path(name);
  std::vector<double> ref;
  if (!load_values(path, &ref)) {
    if (std::getenv("FREQACT_BLESS")) {
      save_values(path, values);
      MESSAGE("blessed new golden file ", name);
      return;
    }
    FAIL("missing golden file ", path,
         " (run once with FREQACT_BLESS=1 to create)");
  }
  REQUIRE(ref.size() == values.size());
  for (size_t i = 0; i < ref.size(); ++i)
    CHECK(values[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation rejects bad settings") {
  ModelConfig ok;
  CHECK_NOTHROW(ok.validate());
  auto broken = [](auto mutate) {
    ModelConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  broken([](ModelConfig& c) { c.horizon = 0; });
  broken([](ModelConfig& c) { c.enc_embed = 100; });  // not divisible by heads
  broken([](ModelConfig& c) { c.mask_m = 1.5; });
  broken([](ModelConfig& c) { c.truncnorm_std = 0.0; });
  broken([](ModelConfig& c) { c.head_width = -1; });
}

TEST_CASE("construction is seed deterministic") {
  auto cfg = micro_config();
  FreqPolicyModel a(cfg, 42), b(cfg, 42), c(cfg, 43);
  REQUIRE(a.params().total_size() == b.params().total_size());
  bool all_equal = true, any_diff = false;
  for (size_t i = 0; i < a.params().params.size(); ++i) {
    if (a.params().params[i]->data != b.params().params[i]->data)
      all_equal = false;
    if (a.params().params[i]->data != c.params().params[i]->data)
      any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("parameter table contains every module") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 1);
  for (const char* name :
       {"obs.fc1.w", "obs.fc2.b", "enc.act_proj.w", "enc.lvl", "enc.pos",
        "enc.blk0.q.w", "enc.norm.g", "dec.proj.w", "dec.mask_token",
        "dec.lvl", "dec.pos", "dec.blk0.fc2.b", "dec.norm.o", "head.in.w",
        "head.cond.w", "head.temb", "head.lvl", "head.res0.mod.w",
        "head.res0.fc1.w", "head.final_mod.w", "head.out.w"})
    CHECK(m.params().has(name));
  CHECK(m.params().get("enc.lvl")->rows == cfg.horizon + 1);
  CHECK(m.params().get("head.temb")->rows == cfg.diff_steps);
  CHECK(m.params().get("head.res0.mod.w")->rows == 3 * cfg.head_width);
}

TEST_CASE("observation encoder reduces to its norm offset on constant features") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 7);
  // Zeroed MLP weights make every feature row constant; the feature norm
  // maps constants to zero, leaving exactly its own offset.
  for (const char* name : {"obs.fc1.w", "obs.fc1.b", "obs.fc2.w"})
    fill_value(m.params().get(name), 0.0);
  fill_value(m.params().get("obs.fc2.b"), 17.5);
  fill_value(m.params().get("obs.norm.o"), 0.25);
  auto batch = make_batch(cfg, 3);
  Var f = m.encode_observation(batch.obs, 3);
  REQUIRE(f->rows == 3 * cfg.obs_step);
  REQUIRE(f->cols == cfg.enc_embed);
  for (double v : f->data) CHECK(v == 0.25);
}

TEST_CASE("observation features are deterministic across calls") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 7);
  auto batch = make_batch(cfg, 2);
  Var a = m.encode_observation(batch.obs, 2);
  Var b = m.encode_observation(batch.obs, 2);
  CHECK(a->data == b->data);
}

TEST_CASE("shape mismatches are rejected with typed errors") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 7);
  std::vector<double> short_obs(3, 0.0);
  CHECK_THROWS_AS(m.encode_observation(short_obs, 2), ShapeError);
  auto batch = make_batch(cfg, 2);
  Var obs_tok = m.encode_observation(batch.obs, 2);
  std::vector<int> levels = {1, 2};
  std::vector<bool> mask((size_t)2 * cfg.horizon, false);
  std::vector<double> bad_ctx(3, 0.0);
  CHECK_THROWS_AS(m.encode(obs_tok, bad_ctx, levels, mask), ShapeError);
  auto ctx = m.build_context(batch.actions, 2, levels);
  Var enc = m.encode(obs_tok, ctx, levels, mask);
  Var z = m.decode(enc, levels, mask);
  std::vector<int> bad_t = {0, 5};
  std::vector<double> x_t((size_t)2 * cfg.horizon * cfg.action_dim, 0.1);
  CHECK_THROWS_AS(m.eps_predict(x_t, bad_t, levels, z), DataError);
}

TEST_CASE("level context is the band-limited reconstruction") {
  auto cfg = micro_config();
  cfg.horizon = 8;
  FreqPolicyModel m(cfg, 9);
  auto batch = make_batch(cfg, 3);
  auto ctx = m.build_context(batch.actions, 3, {0, 3, 8});

  const size_t per = (size_t)cfg.horizon * cfg.action_dim;
  for (size_t i = 0; i < per; ++i) CHECK(ctx[i] == 0.0);
  for (size_t i = 0; i < per; ++i)
    CHECK(ctx[2 * per + i] ==
          doctest::Approx(batch.actions[2 * per + i]).epsilon(1e-9));

  // The level-3 element keeps only the first three frequency components.
  Trajectory rec(cfg.horizon, cfg.action_dim);
  std::copy_n(ctx.data() + per, per, rec.values.data());
  Trajectory orig(cfg.horizon, cfg.action_dim);
  std::copy_n(batch.actions.data() + per, per, orig.values.data());
  Spectrum rec_spec = dct_forward(rec), orig_spec = dct_forward(orig);
  for (int d = 0; d < cfg.action_dim; ++d) {
    for (int i = 0; i < 3; ++i)
      CHECK(rec_spec.at(i, d) ==
            doctest::Approx(orig_spec.at(i, d)).epsilon(1e-9));
    for (int i = 3; i < cfg.horizon; ++i)
      CHECK(std::fabs(rec_spec.at(i, d)) < 1e-9);
  }
  CHECK_THROWS_AS(m.build_context(batch.actions, 3, {0, 9, 1}), DataError);
}

TEST_CASE("ablated context passes raw actions through") {
  auto cfg = micro_config();
  cfg.use_dct = false;
  FreqPolicyModel m(cfg, 9);
  auto batch = make_batch(cfg, 2);
  auto ctx = m.build_context(batch.actions, 2, {0, 2});
  const size_t per = (size_t)cfg.horizon * cfg.action_dim;
  for (size_t i = 0; i < per; ++i) CHECK(ctx[i] == 0.0);
  for (size_t i = 0; i < per; ++i) CHECK(ctx[per + i] == batch.actions[per + i]);
}

TEST_CASE("masked context values cannot reach the decoder") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 11);
  auto batch = make_batch(cfg, 2);
  Var obs_tok = m.encode_observation(batch.obs, 2);
  std::vector<int> levels = {2, 3};
  std::vector<bool> mask((size_t)2 * cfg.horizon, false);
  mask[1] = true;
  mask[cfg.horizon + 2] = true;

  auto ctx_a = m.build_context(batch.actions, 2, levels);
  auto ctx_b = ctx_a;
  // Perturb the context only at masked positions.
  for (int e = 0; e < 2; ++e)
    for (int i = 0; i < cfg.horizon; ++i)
      if (mask[(size_t)e * cfg.horizon + i])
        for (int d = 0; d < cfg.action_dim; ++d)
          ctx_b[((size_t)e * cfg.horizon + i) * cfg.action_dim + d] += 37.5;

  Var za = m.decode(m.encode(obs_tok, ctx_a, levels, mask), levels, mask);
  Var zb = m.decode(m.encode(obs_tok, ctx_b, levels, mask), levels, mask);
  CHECK(za->data == zb->data);

  // Unmasked perturbations must propagate.
  auto ctx_c = ctx_a;
  ctx_c[0] += 0.5;
  Var zc = m.decode(m.encode(obs_tok, ctx_c, levels, mask), levels, mask);
  CHECK(za->data != zc->data);
}

TEST_CASE("encoder rows outside a masked position are unaffected by it") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 11);
  auto batch = make_batch(cfg, 1);
  Var obs_tok = m.encode_observation(batch.obs, 1);
  std::vector<int> levels = {2};
  std::vector<bool> mask(cfg.horizon, false);
  mask[2] = true;
  auto ctx_a = m.build_context(batch.actions, 1, levels);
  auto ctx_b = ctx_a;
  for (int d = 0; d < cfg.action_dim; ++d)
    ctx_b[(size_t)2 * cfg.action_dim + d] = -4.0;
  Var ea = m.encode(obs_tok, ctx_a, levels, mask);
  Var eb = m.encode(obs_tok, ctx_b, levels, mask);
  const int seq = m.seq_len(), we = cfg.enc_embed;
  const int masked_row = 1 + cfg.obs_step + 2;
  for (int r = 0; r < seq; ++r) {
    bool same = true;
    for (int c = 0; c < we; ++c)
      if (ea->data[(size_t)r * we + c] != eb->data[(size_t)r * we + c])
        same = false;
    if (r == masked_row)
      CHECK_FALSE(same);
    else
      CHECK(same);
  }
}

TEST_CASE("decoder output shape and mask-token sensitivity") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 13);
  auto batch = make_batch(cfg, 2);
  Var obs_tok = m.encode_observation(batch.obs, 2);
  std::vector<int> levels = {1, 4};
  std::vector<bool> mask((size_t)2 * cfg.horizon, false);
  mask[0] = true;
  mask[3] = true;
  auto ctx = m.build_context(batch.actions, 2, levels);
  Var enc = m.encode(obs_tok, ctx, levels, mask);
  Var z1 = m.decode(enc, levels, mask);
  REQUIRE(z1->rows == 2 * cfg.horizon);
  REQUIRE(z1->cols == cfg.dec_embed);

  auto tok = m.params().get("dec.mask_token");
  for (double& v : tok->data) v += 0.3;
  Var z2 = m.decode(enc, levels, mask);
  CHECK(z1->data != z2->data);

  // With nothing masked the mask token is inert.
  std::vector<bool> empty((size_t)2 * cfg.horizon, false);
  Var enc2 = m.encode(obs_tok, ctx, levels, empty);
  Var z3 = m.decode(enc2, levels, empty);
  for (double& v : tok->data) v -= 0.7;
  Var z4 = m.decode(enc2, levels, empty);
  CHECK(z3->data == z4->data);
}

TEST_CASE("fully masked encoding still conditions on observations") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 15);
  auto batch_a = make_batch(cfg, 1, 0.0);
  auto batch_b = make_batch(cfg, 1, 2.0);
  std::vector<int> levels = {0};
  std::vector<bool> mask(cfg.horizon, true);
  auto ctx = m.build_context(batch_a.actions, 1, levels);
  Var za = m.decode(
      m.encode(m.encode_observation(batch_a.obs, 1), ctx, levels, mask),
      levels, mask);
  Var zb = m.decode(
      m.encode(m.encode_observation(batch_b.obs, 1), ctx, levels, mask),
      levels, mask);
  CHECK(za->data != zb->data);
}

TEST_CASE("denoising head starts as the zero function") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 17);
  auto batch = make_batch(cfg, 2);
  std::vector<int> levels = {1, 3};
  std::vector<bool> mask((size_t)2 * cfg.horizon, false);
  auto ctx = m.build_context(batch.actions, 2, levels);
  Var z = m.decode(
      m.encode(m.encode_observation(batch.obs, 2), ctx, levels, mask), levels,
      mask);
  std::vector<double> x_t((size_t)2 * cfg.horizon * cfg.action_dim);
  for (size_t i = 0; i < x_t.size(); ++i) x_t[i] = std::cos(0.71 * (double)i);
  Var eps = m.eps_predict(x_t, {3, 9}, levels, z);
  REQUIRE(eps->rows == 2 * cfg.horizon);
  REQUIRE(eps->cols == cfg.action_dim);
  for (double v : eps->data) CHECK(v == 0.0);
}

TEST_CASE("head predictions are per position") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 19);
  randomize_head(m, 515);
  const int b = 1, t = cfg.horizon, d = cfg.action_dim;
  std::vector<double> zdata((size_t)t * cfg.dec_embed);
  Rng rng(21);
  for (double& v : zdata) v = rng.normal();
  std::vector<double> x_t((size_t)b * t * d);
  for (double& v : x_t) v = rng.normal();

  Var z1 = make_const(t, cfg.dec_embed, zdata);
  Var e1 = m.eps_predict(x_t, {5}, {2}, z1);
  auto zdata2 = zdata;
  for (int c = 0; c < cfg.dec_embed; ++c) zdata2[(size_t)1 * cfg.dec_embed + c] += 1.0;
  Var e2 = m.eps_predict(x_t, {5}, {2}, make_const(t, cfg.dec_embed, zdata2));
  for (int r = 0; r < t; ++r) {
    bool same = true;
    for (int c = 0; c < d; ++c)
      if (e1->data[(size_t)r * d + c] != e2->data[(size_t)r * d + c])
        same = false;
    if (r == 1)
      CHECK_FALSE(same);
    else
      CHECK(same);
  }
}

TEST_CASE("head conditions on the diffusion step and the level") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 23);
  randomize_head(m, 616);
  const int t = cfg.horizon, d = cfg.action_dim;
  Rng rng(25);
  std::vector<double> zdata((size_t)t * cfg.dec_embed);
  for (double& v : zdata) v = rng.normal();
  std::vector<double> x_t((size_t)t * d);
  for (double& v : x_t) v = rng.normal();
  Var z = make_const(t, cfg.dec_embed, zdata);
  Var a = m.eps_predict(x_t, {2}, {1}, z);
  Var b = m.eps_predict(x_t, {7}, {1}, z);
  Var c = m.eps_predict(x_t, {2}, {4}, z);
  CHECK(a->data != b->data);
  CHECK(a->data != c->data);
}

TEST_CASE("noise objective matches a hand-rolled replica at zero head") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 27);
  const int b = 3, t = cfg.horizon, d = cfg.action_dim;
  auto batch = make_batch(cfg, b);
  std::vector<int> levels = {0, 2, 4};
  std::vector<bool> mask((size_t)b * t, false);
  mask[1] = true;
  mask[t + 0] = true;
  mask[t + 3] = true;
  auto ctx = m.build_context(batch.actions, b, levels);
  Var z = m.decode(
      m.encode(m.encode_observation(batch.obs, b), ctx, levels, mask), levels,
      mask);

  Rng rng_model(31), rng_replica(31);
  Var loss = m.diffusion_loss(z, batch.actions, levels, mask, rng_model);

  // Replica follows the documented draw order: t per element, then noise.
  std::vector<int> steps(b);
  for (int e = 0; e < b; ++e)
    steps[e] = 1 + (int)rng_replica.uniform_int(0, cfg.diff_steps - 1);
  std::vector<double> eps((size_t)b * t * d);
  for (double& v : eps) v = rng_replica.normal();
  double acc = 0.0;
  int selected = popcount(mask);
  for (int row = 0; row < b * t; ++row) {
    const double w = mask[row] ? 1.0 : 0.0;
    for (int c = 0; c < d; ++c) acc += w * eps[(size_t)row * d + c] * eps[(size_t)row * d + c];
  }
  CHECK(loss->data[0] ==
        doctest::Approx(acc / (double)selected).epsilon(1e-14));
}

TEST_CASE("empty mask falls back to averaging over every position") {
  auto cfg = micro_config();
  cfg.masked_loss_only = true;
  FreqPolicyModel a(cfg, 29);
  cfg.masked_loss_only = false;
  FreqPolicyModel b(cfg, 29);
  const int n = 2, t = cfg.horizon;
  auto batch = make_batch(cfg, n);
  std::vector<int> levels = {4, 4};
  std::vector<bool> empty((size_t)n * t, false);
  auto ctx = a.build_context(batch.actions, n, levels);
  Var za = a.decode(
      a.encode(a.encode_observation(batch.obs, n), ctx, levels, empty), levels,
      empty);
  Var zb = b.decode(
      b.encode(b.encode_observation(batch.obs, n), ctx, levels, empty), levels,
      empty);
  Rng ra(33), rb(33);
  Var la = a.diffusion_loss(za, batch.actions, levels, empty, ra);
  Var lb = b.diffusion_loss(zb, batch.actions, levels, empty, rb);
  CHECK(la->data[0] == lb->data[0]);
}

TEST_CASE("initial training loss sits near the action dimension") {
  auto cfg = micro_config();
  cfg.horizon = 8;
  FreqPolicyModel m(cfg, 35);
  auto batch = make_batch(cfg, 64);
  Rng rng(37);
  Var loss = m.training_forward(batch, rng, nullptr);
  CHECK(loss->data[0] > 0.8 * cfg.action_dim);
  CHECK(loss->data[0] < 1.2 * cfg.action_dim);
}

TEST_CASE("trace reports one level and one mask row per element") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 39);
  auto batch = make_batch(cfg, 5);
  Rng rng(41);
  FreqPolicyModel::StepTrace trace;
  m.training_forward(batch, rng, &trace);
  REQUIRE((int)trace.levels.size() == 5);
  REQUIRE((int)trace.mask.size() == 5 * cfg.horizon);
  for (int k : trace.levels) {
    CHECK(k >= 0);
    CHECK(k <= cfg.horizon);
  }
  // Level T forces the mask ratio to zero.
  for (int e = 0; e < 5; ++e)
    if (trace.levels[e] == cfg.horizon)
      for (int i = 0; i < cfg.horizon; ++i)
        CHECK_FALSE(trace.mask[(size_t)e * cfg.horizon + i]);
}

TEST_CASE("reconstruction levels are drawn uniformly across steps") {
  auto cfg = micro_config();
  cfg.horizon = 16;
  cfg.enc_embed = 16;
  cfg.dec_embed = 16;
  FreqPolicyModel m(cfg, 43);
  auto batch = make_batch(cfg, 1);
  Rng rng(45);
  const int draws = 10000;
  std::vector<int> hist(cfg.horizon + 1, 0);
  FreqPolicyModel::StepTrace trace;
  for (int i = 0; i < draws; ++i) {
    NoGrad guard;
    m.training_forward(batch, rng, &trace);
    ++hist[trace.levels[0]];
  }
  const double expected = (double)draws / (cfg.horizon + 1);
  double chi2 = 0.0;
  for (int c : hist) chi2 += (c - expected) * (c - expected) / expected;
  // 17 bins, 16 degrees of freedom, 1% critical value.
  CHECK(chi2 < 32.0);
}

TEST_CASE("gradients reach every module after the head warms up") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 47);
  AdamW opt(m.params(), 1e-3, 0.9, 0.999, 0.0);
  auto batch = make_batch(cfg, 4);
  Rng rng(49);
  for (int i = 0; i < 3; ++i) m.training_step(batch, opt, 1e-3, rng);
  auto max_grad = [&](const std::string& prefix) {
    double best = 0.0;
    for (const auto& p : m.params().params) {
      if (p->name.rfind(prefix, 0) != 0 || p->grad.empty()) continue;
      for (double g : p->grad) best = std::max(best, std::fabs(g));
    }
    return best;
  };
  CHECK(max_grad("obs.") > 0.0);
  CHECK(max_grad("enc.") > 0.0);
  CHECK(max_grad("dec.") > 0.0);
  CHECK(max_grad("head.") > 0.0);
}

TEST_CASE("a zero learning rate leaves parameters bit identical") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 51);
  AdamW opt(m.params(), 1e-3, 0.9, 0.999, 1e-6);
  auto batch = make_batch(cfg, 4);
  std::vector<std::vector<double>> before;
  for (const auto& p : m.params().params) before.push_back(p->data);
  Rng rng(53);
  const double loss = m.training_step(batch, opt, 0.0, rng);
  CHECK(std::isfinite(loss));
  for (size_t i = 0; i < before.size(); ++i)
    CHECK(m.params().params[i]->data == before[i]);
}

TEST_CASE("whole-model gradients match finite differences") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 55);
  // Two optimizer steps push the zero-initialized head off its saddle so the
  // finite-difference probe sees nonzero gradients everywhere.
  AdamW opt(m.params(), 1e-3, 0.9, 0.999, 0.0);
  auto batch = make_batch(cfg, 2);
  Rng warm(57);
  for (int i = 0; i < 2; ++i) m.training_step(batch, opt, 1e-2, warm);
  auto make_loss = [&]() {
    Rng fixed(59);
    return m.training_forward(batch, fixed, nullptr);
  };
  Rng probe(61);
  auto report = grad_check(make_loss, m.params(), 1e-4, probe, 512);
  INFO("worst parameter: ", report.worst_param, " rel ", report.max_rel);
  CHECK(report.pass);
}

TEST_CASE("short optimization run halves the loss") {
  ModelConfig cfg;
  cfg.horizon = 8;
  cfg.action_dim = 2;
  cfg.obs_dim = 3;
  cfg.obs_step = 2;
  cfg.enc_embed = 32;
  cfg.enc_depth = 1;
  cfg.enc_heads = 4;
  cfg.dec_embed = 32;
  cfg.dec_depth = 1;
  cfg.dec_heads = 4;
  cfg.mlp_ratio = 2;
  cfg.state_mlp = 16;
  cfg.diff_steps = 50;
  cfg.head_depth = 2;
  cfg.head_width = 64;
  FreqPolicyModel m(cfg, 63);
  AdamW opt(m.params(), 1e-3, 0.95, 0.999, 1e-6);
  Rng rng(65);
  Rng data_rng(66);

  // Small synthetic corpus of smooth normalized trajectories.
  const int n = 64;
  std::vector<TrainBatch> pool;
  for (int i = 0; i < n; ++i) {
    TrainBatch one = make_batch(cfg, 1, 0.13 * i);
    for (double& v : one.actions) v += 0.05 * data_rng.normal();
    for (double& v : one.actions) v = std::clamp(v, -1.0, 1.0);
    pool.push_back(one);
  }
  auto draw_batch = [&](int size, Rng& r) {
    TrainBatch b;
    b.count = size;
    for (int i = 0; i < size; ++i) {
      const auto& src = pool[r.uniform_int(0, n - 1)];
      b.obs.insert(b.obs.end(), src.obs.begin(), src.obs.end());
      b.actions.insert(b.actions.end(), src.actions.begin(),
                       src.actions.end());
    }
    return b;
  };

  double initial = 0.0;
  const int steps = 300;
  double recent = 0.0;
  for (int s = 0; s < steps; ++s) {
    auto b = draw_batch(16, rng);
    const double lr = cosine_lr(2e-3, s, steps);
    const double loss = m.training_step(b, opt, lr, rng);
    if (s == 0) initial = loss;
    if (s >= steps - 20) recent += loss;
  }
  recent /= 20.0;
  INFO("initial ", initial, " final-20 mean ", recent);
  CHECK(recent < 0.5 * initial);
}

TEST_CASE("frozen network outputs stay put") {
  auto cfg = micro_config();
  FreqPolicyModel m(cfg, 101);
  auto batch = make_batch(cfg, 2);

  Var obs = m.encode_observation(batch.obs, 2);
  check_golden("model_obs_features.csv", obs->data);

  std::vector<int> levels = {1, 3};
  std::vector<bool> mask((size_t)2 * cfg.horizon, false);
  mask[0] = true;
  mask[2] = true;
  mask[cfg.horizon + 1] = true;
  auto ctx = m.build_context(batch.actions, 2, levels);
  Var z = m.decode(m.encode(obs, ctx, levels, mask), levels, mask);
  check_golden("model_decode_tokens.csv", z->data);

  AdamW opt(m.params(), 1e-3, 0.95, 0.999, 1e-6);
  Rng rng(103);
  std::vector<double> losses;
  for (int i = 0; i < 4; ++i)
    losses.push_back(m.training_step(batch, opt, 1e-3, rng));
  check_golden("model_train_losses.csv", losses);
}

}  // TEST_SUITE
