#include "freqact/model.hpp"

#include <cmath>

#include "freqact/errors.hpp"
#include "freqact/masking.hpp"
#include "freqact/trajectory.hpp"

namespace freqact {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(horizon, "horizon");
  positive(action_dim, "action_dim");
  positive(obs_dim, "obs_dim");
  positive(obs_step, "observation_step");
  positive(enc_embed, "encoder_embed_dim");
  positive(enc_depth, "encoder_depth");
  positive(enc_heads, "encoder_num_heads");
  positive(dec_embed, "decoder_embed_dim");
  positive(dec_depth, "decoder_depth");
  positive(dec_heads, "decoder_num_heads");
  positive(mlp_ratio, "mlp_ratio");
  positive(state_mlp, "state_mlp_size");
  positive(diff_steps, "num_training_steps");
  positive(head_depth, "diffloss_d");
  positive(head_width, "diffloss_w");
  if (enc_embed % enc_heads != 0 || dec_embed % dec_heads != 0)
    throw ConfigError("embed dims must be divisible by their head counts");
  if (mask_m < 0.0 || mask_m > 1.0)
    throw ConfigError("mask_ratio_m outside [0, 1]");
  if (truncnorm_std <= 0.0)
    throw ConfigError("truncnorm_std must be positive");
}

FreqPolicyModel::FreqPolicyModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg), sched_(DiffusionSchedule::cosine(cfg.diff_steps)) {
  cfg_.validate();
  Rng rng = Rng::stream(seed, 0);
  const int we = cfg_.enc_embed, wd = cfg_.dec_embed, wh = cfg_.head_width;
  const int seq = seq_len();

  obs_fc1_ = LinearLayer::create(store_, "obs.fc1", cfg_.obs_dim,
                                 cfg_.state_mlp, rng);
  obs_fc2_ =
      LinearLayer::create(store_, "obs.fc2", cfg_.state_mlp, we, rng);
  // Normalizing the extracted features keeps observation tokens at unit
  // scale; two small-init linear layers otherwise leave them orders of
  // magnitude below the positional embeddings, and the encoder learns to
  // ignore them before the conditioning pathway can form.
  obs_norm_ = LayerNormLayer::create(store_, "obs.norm", we);
  act_proj_ = LinearLayer::create(store_, "enc.act_proj", cfg_.action_dim, we,
                                  rng);
  enc_lvl_ = store_.create("enc.lvl", cfg_.horizon + 1, we);
  enc_pos_ = store_.create("enc.pos", seq, we);
  init_trunc_normal(enc_lvl_, 0.02, rng);
  init_trunc_normal(enc_pos_, 0.02, rng);
  for (int i = 0; i < cfg_.enc_depth; ++i)
    enc_blocks_.push_back(TransformerBlock::create(
        store_, "enc.blk" + std::to_string(i), we, cfg_.enc_heads,
        cfg_.mlp_ratio * we, rng));
  enc_norm_ = LayerNormLayer::create(store_, "enc.norm", we);

  dec_proj_ = LinearLayer::create(store_, "dec.proj", we, wd, rng);
  mask_token_ = store_.create("dec.mask_token", 1, wd);
  dec_lvl_ = store_.create("dec.lvl", cfg_.horizon + 1, wd);
  dec_pos_ = store_.create("dec.pos", seq, wd);
  init_trunc_normal(mask_token_, 0.02, rng);
  init_trunc_normal(dec_lvl_, 0.02, rng);
  init_trunc_normal(dec_pos_, 0.02, rng);
  for (int i = 0; i < cfg_.dec_depth; ++i)
    dec_blocks_.push_back(TransformerBlock::create(
        store_, "dec.blk" + std::to_string(i), wd, cfg_.dec_heads,
        cfg_.mlp_ratio * wd, rng));
  dec_norm_ = LayerNormLayer::create(store_, "dec.norm", wd);

  head_in_ =
      LinearLayer::create(store_, "head.in", cfg_.action_dim, wh, rng);
  head_cond_ = LinearLayer::create(store_, "head.cond", wd, wh, rng);
  head_cmix_ = LinearLayer::create(store_, "head.cmix", wh, wh, rng);
  head_temb_ = store_.create("head.temb", cfg_.diff_steps, wh);
  head_lvl_ = store_.create("head.lvl", cfg_.horizon + 1, wh);
  init_trunc_normal(head_temb_, 0.02, rng);
  init_trunc_normal(head_lvl_, 0.02, rng);
  for (int i = 0; i < cfg_.head_depth; ++i) {
    HeadBlock blk;
    const std::string base = "head.res" + std::to_string(i);
    // Random modulation weights give the conditioning signal a first-order
    // path into every branch from the first optimizer step; starting them
    // at zero makes the early gradient into the conditioning vanish, and
    // the head then settles on an unconditional predictor it never leaves.
    blk.mod = LinearLayer::create(store_, base + ".mod", wh, 3 * wh, rng);
    blk.fc1 = LinearLayer::create(store_, base + ".fc1", wh, wh, rng);
    blk.fc2 = LinearLayer::create(store_, base + ".fc2", wh, wh, rng);
    head_blocks_.push_back(blk);
  }
  // The output projection and final modulation stay zeroed, so the head is
  // exactly the zero function until training moves them.
  head_final_mod_ = LinearLayer::create_zeroed(store_, "head.final_mod", wh,
                                               2 * wh + cfg_.action_dim);
  head_out_ =
      LinearLayer::create_zeroed(store_, "head.out", wh, cfg_.action_dim);
  head_skip_ = LinearLayer::create(store_, "head.skip", cfg_.action_dim,
                                   cfg_.action_dim, rng);
}

Var FreqPolicyModel::encode_observation(const std::vector<double>& obs,
                                        int count) const {
  const size_t want = (size_t)count * cfg_.obs_step * cfg_.obs_dim;
  if (obs.size() != want)
    throw ShapeError("encode_observation: got " + std::to_string(obs.size()) +
                     " values, expected " + std::to_string(want));
  Var x = make_const(count * cfg_.obs_step, cfg_.obs_dim, obs);
  return obs_norm_(obs_fc2_(gelu(obs_fc1_(x))));
}

Var FreqPolicyModel::encode(const Var& obs_tokens,
                            const std::vector<double>& context,
                            const std::vector<int>& levels,
                            const std::vector<bool>& mask) const {
  const int b = (int)levels.size();
  const int t = cfg_.horizon, to = cfg_.obs_step, seq = seq_len();
  if (obs_tokens->rows != b * to || obs_tokens->cols != cfg_.enc_embed)
    throw ShapeError("encode: observation tokens have shape " +
                     std::to_string(obs_tokens->rows) + "x" +
                     std::to_string(obs_tokens->cols));
  if (context.size() != (size_t)b * t * cfg_.action_dim)
    throw ShapeError("encode: context length mismatch");
  if ((int)mask.size() != b * t)
    throw ShapeError("encode: mask length mismatch");

  Var act_tok =
      act_proj_(make_const(b * t, cfg_.action_dim, context));
  Var lvl_tok = gather_rows(enc_lvl_, levels);
  Var x = stack3(lvl_tok, 1, obs_tokens, to, act_tok, t);
  x = add_tiled(x, enc_pos_);

  // Masked action tokens get a large negative key bias: their softmax weight
  // underflows to exactly zero, so unmasked positions behave as if those
  // tokens were absent.
  std::vector<double> bias((size_t)b * seq, 0.0);
  for (int e = 0; e < b; ++e)
    for (int i = 0; i < t; ++i)
      if (mask[(size_t)e * t + i]) bias[(size_t)e * seq + 1 + to + i] = -1e30;

  for (const auto& blk : enc_blocks_) x = blk(x, seq, bias);
  return enc_norm_(x);
}

Var FreqPolicyModel::decode(const Var& enc_seq, const std::vector<int>& levels,
                            const std::vector<bool>& mask) const {
  const int b = (int)levels.size();
  const int t = cfg_.horizon, to = cfg_.obs_step, seq = seq_len();
  if (enc_seq->rows != b * seq || enc_seq->cols != cfg_.enc_embed)
    throw ShapeError("decode: encoded sequence has shape " +
                     std::to_string(enc_seq->rows) + "x" +
                     std::to_string(enc_seq->cols));
  if ((int)mask.size() != b * t)
    throw ShapeError("decode: mask length mismatch");

  Var x = dec_proj_(enc_seq);
  std::vector<bool> flags((size_t)b * seq, false);
  for (int e = 0; e < b; ++e)
    for (int i = 0; i < t; ++i)
      if (mask[(size_t)e * t + i]) flags[(size_t)e * seq + 1 + to + i] = true;
  x = mask_blend(x, mask_token_, flags);
  x = add_tiled(x, dec_pos_);
  x = add_block_broadcast(x, gather_rows(dec_lvl_, levels), seq);
  for (const auto& blk : dec_blocks_) x = blk(x, seq, {});
  x = dec_norm_(x);
  return extract_rows(x, seq, 1 + to, t);
}

Var FreqPolicyModel::eps_predict(const std::vector<double>& x_t,
                                 const std::vector<int>& t,
                                 const std::vector<int>& levels,
                                 const Var& z) const {
  const int b = (int)levels.size();
  const int horizon = cfg_.horizon;
  if (x_t.size() != (size_t)b * horizon * cfg_.action_dim)
    throw ShapeError("eps_predict: noisy input length mismatch");
  if ((int)t.size() != b)
    throw ShapeError("eps_predict: timestep count mismatch");
  if (z->rows != b * horizon || z->cols != cfg_.dec_embed)
    throw ShapeError("eps_predict: conditioning tokens have shape " +
                     std::to_string(z->rows) + "x" + std::to_string(z->cols));
  std::vector<int> t0(b);
  for (int e = 0; e < b; ++e) {
    if (t[e] < 1 || t[e] > cfg_.diff_steps)
      throw DataError("eps_predict: timestep " + std::to_string(t[e]) +
                      " outside [1, " + std::to_string(cfg_.diff_steps) + "]");
    t0[e] = t[e] - 1;
  }

  Var x_in = make_const(b * horizon, cfg_.action_dim, x_t);
  Var cond = head_cond_(z);
  cond = add_block_broadcast(cond, gather_rows(head_temb_, t0), horizon);
  cond = add_block_broadcast(cond, gather_rows(head_lvl_, levels), horizon);
  return head_mlp(x_in, silu(cond));
}

Var FreqPolicyModel::head_mlp(const Var& x_in, const Var& c_act) const {
  const int wh = cfg_.head_width;
  // Mixing the conditioning into the stream additively keeps the head
  // sensitive to it even while the modulation pathways are still weak.
  Var h = add(head_in_(x_in), head_cmix_(c_act));
  for (const auto& blk : head_blocks_) {
    Var mod = blk.mod(c_act);
    Var sc = slice_cols(mod, 0, wh);
    Var sh = slice_cols(mod, wh, 2 * wh);
    Var gate = slice_cols(mod, 2 * wh, 3 * wh);
    Var hn = layernorm_noaffine(h);
    Var modded = add(add(hn, hadamard(hn, sc)), sh);
    Var mlp_out = blk.fc2(silu(blk.fc1(modded)));
    h = add(h, hadamard(gate, mlp_out));
  }
  Var mod = head_final_mod_(c_act);
  Var sc = slice_cols(mod, 0, wh);
  Var sh = slice_cols(mod, wh, 2 * wh);
  Var sg = slice_cols(mod, 2 * wh, 2 * wh + cfg_.action_dim);
  Var hn = layernorm_noaffine(h);
  Var core = head_out_(add(add(hn, hadamard(hn, sc)), sh));
  // The layer norms erase the noisy input's scale, but the noise target
  // contains that input linearly; a conditioning-gated linear skip
  // restores the path, with the gate deciding per timestep how much of
  // the input to pass through.
  return add(core, hadamard(sg, head_skip_(x_in)));
}

std::vector<double> FreqPolicyModel::build_context(
    const std::vector<double>& actions, int count,
    const std::vector<int>& levels) const {
  const int t = cfg_.horizon, d = cfg_.action_dim;
  if (actions.size() != (size_t)count * t * d)
    throw ShapeError("build_context: action length mismatch");
  std::vector<double> out((size_t)count * t * d, 0.0);
  for (int e = 0; e < count; ++e) {
    const int k = levels[e];
    if (k < 0 || k > t)
      throw DataError("build_context: level " + std::to_string(k) +
                      " outside [0, " + std::to_string(t) + "]");
    if (k == 0) continue;
    const double* src = actions.data() + (size_t)e * t * d;
    double* dst = out.data() + (size_t)e * t * d;
    if (!cfg_.use_dct) {
      std::copy_n(src, (size_t)t * d, dst);
      continue;
    }
    Trajectory traj(t, d);
    std::copy_n(src, (size_t)t * d, traj.values.data());
    Trajectory rec = idct_k(dct_forward(traj), k);
    std::copy_n(rec.values.data(), (size_t)t * d, dst);
  }
  return out;
}

Var FreqPolicyModel::diffusion_loss(const Var& z,
                                    const std::vector<double>& actions,
                                    const std::vector<int>& levels,
                                    const std::vector<bool>& mask,
                                    Rng& rng) const {
  const int b = (int)levels.size();
  const int t = cfg_.horizon, d = cfg_.action_dim;
  if (actions.size() != (size_t)b * t * d)
    throw ShapeError("diffusion_loss: action length mismatch");

  std::vector<int> steps(b);
  for (int e = 0; e < b; ++e)
    steps[e] = 1 + (int)rng.uniform_int(0, cfg_.diff_steps - 1);
  std::vector<double> eps((size_t)b * t * d);
  for (double& v : eps) v = rng.normal();

  std::vector<double> x_t((size_t)b * t * d);
  for (int e = 0; e < b; ++e) {
    const double ab = sched_.abar(steps[e]);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    for (int i = 0; i < t * d; ++i) {
      const size_t idx = (size_t)e * t * d + i;
      x_t[idx] = sa * actions[idx] + sn * eps[idx];
    }
  }

  const int hidden = popcount(mask);
  if (cfg_.masked_loss_only && hidden > 0 && hidden < b * t) {
    // Only masked rows carry loss, so the head runs on those rows alone.
    // Each row's forward and every gradient term match the full pass
    // exactly; the dropped rows would have contributed exact zeros.
    std::vector<int> rows;
    rows.reserve(hidden);
    for (int i = 0; i < b * t; ++i)
      if (mask[i]) rows.push_back(i);
    std::vector<double> x_sel((size_t)hidden * d), e_sel((size_t)hidden * d);
    std::vector<int> t_rows(hidden), lvl_rows(hidden);
    for (int r = 0; r < hidden; ++r) {
      const int i = rows[r], e = i / t;
      std::copy_n(x_t.data() + (size_t)i * d, d, x_sel.data() + (size_t)r * d);
      std::copy_n(eps.data() + (size_t)i * d, d, e_sel.data() + (size_t)r * d);
      t_rows[r] = steps[e] - 1;
      lvl_rows[r] = levels[e];
    }
    Var x_in = make_const(hidden, d, x_sel);
    Var cond = head_cond_(gather_rows(z, rows));
    cond = add(cond, gather_rows(head_temb_, t_rows));
    cond = add(cond, gather_rows(head_lvl_, lvl_rows));
    Var eps_hat = head_mlp(x_in, silu(cond));
    Var diff = sub(eps_hat, make_const(hidden, d, e_sel));
    return scale(sum_all(hadamard(diff, diff)), 1.0 / (double)hidden);
  }

  Var eps_hat = eps_predict(x_t, steps, levels, z);
  Var diff = sub(eps_hat, make_const(b * t, d, eps));
  Var sq = hadamard(diff, diff);
  return scale(sum_all(sq), 1.0 / (double)(b * t));
}

Var FreqPolicyModel::training_forward(const TrainBatch& batch, Rng& rng,
                                      StepTrace* trace) {
  const int b = batch.count;
  if (b < 1) throw DataError("training_forward: empty batch");
  const int t = cfg_.horizon;

  std::vector<int> levels(b);
  for (int e = 0; e < b; ++e) levels[e] = (int)rng.uniform_int(0, t);
  std::vector<bool> mask;
  mask.reserve((size_t)b * t);
  for (int e = 0; e < b; ++e) {
    const double ratio = adaptive_mask_ratio(levels[e], t, cfg_.mask_m);
    auto m = sample_mask(ratio, t, cfg_.truncnorm_std, rng);
    mask.insert(mask.end(), m.begin(), m.end());
  }

  Var obs_tok = encode_observation(batch.obs, b);
  auto context = build_context(batch.actions, b, levels);
  Var enc = encode(obs_tok, context, levels, mask);
  Var z = decode(enc, levels, mask);
  Var loss = diffusion_loss(z, batch.actions, levels, mask, rng);
  if (trace) {
    trace->levels = levels;
    trace->mask = mask;
  }
  return loss;
}

double FreqPolicyModel::training_step(const TrainBatch& batch, AdamW& opt,
                                      double lr_now, Rng& rng) {
  Var loss = training_forward(batch, rng, nullptr);
  if (!std::isfinite(loss->data[0]))
    throw NumericError("training_step: loss is not finite");
  store_.zero_grad();
  backward(loss);
  opt.step(store_, lr_now);
  return loss->data[0];
}

}  // namespace freqact
