#pragma once

#include <vector>

#include "freqact/diffusion.hpp"
#include "freqact/nn.hpp"
#include "freqact/optim.hpp"

namespace freqact {

struct ModelConfig {
  int horizon = 16;
  int action_dim = 2;
  int obs_dim = 6;
  int obs_step = 2;
  int enc_embed = 512, enc_depth = 4, enc_heads = 8;
  int dec_embed = 512, dec_depth = 4, dec_heads = 8;
  int mlp_ratio = 4;
  int state_mlp = 64;
  int diff_steps = 100;
  int head_depth = 3;
  int head_width = 1024;
  double mask_m = 0.7;
  double truncnorm_std = 0.1;
  bool masked_loss_only = true;
  bool use_dct = true;

  void validate() const;
};

struct TrainBatch {
  int count = 0;
  std::vector<double> obs;      // count * obs_step * obs_dim
  std::vector<double> actions;  // count * horizon * action_dim, normalized
};

// Masked encoder-decoder over [level token | observation tokens | action
// tokens] plus a per-position adaptively modulated denoising head. Batches
// ride as row blocks; masked action tokens are hidden from the encoder by an
// additive key bias, which leaves unmasked positions bitwise identical to
// dropping the masked tokens outright, and the decoder replaces them with a
// learned mask token so their encoder outputs never propagate.
class FreqPolicyModel {
 public:
  FreqPolicyModel(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const DiffusionSchedule& schedule() const { return sched_; }
  int seq_len() const { return 1 + cfg_.obs_step + cfg_.horizon; }

  // obs is count * obs_step * obs_dim flat; returns [count*obs_step x enc_embed].
  Var encode_observation(const std::vector<double>& obs, int count) const;

  // context: count * horizon * action_dim level-k reconstructions; levels and
  // mask are per element (mask concatenated, horizon flags each).
  Var encode(const Var& obs_tokens, const std::vector<double>& context,
             const std::vector<int>& levels,
             const std::vector<bool>& mask) const;

  // Returns per-position conditioning tokens [count*horizon x dec_embed].
  Var decode(const Var& enc_seq, const std::vector<int>& levels,
             const std::vector<bool>& mask) const;

  // t is 1-based per element; x_t is count * horizon * action_dim.
  Var eps_predict(const std::vector<double>& x_t, const std::vector<int>& t,
                  const std::vector<int>& levels, const Var& z) const;

  // Level-k contexts: band-limited reconstruction per element, or the raw
  // trajectory when the frequency decomposition is ablated away (level 0 is
  // the zero context in both modes).
  std::vector<double> build_context(const std::vector<double>& actions,
                                    int count,
                                    const std::vector<int>& levels) const;

  // Noise-matching objective: corrupts the actions at a per-element random
  // step, predicts the noise, and averages squared error over masked
  // positions (over all positions when nothing is masked or masked-only mode
  // is off). Draw order: t per element, then noise.
  Var diffusion_loss(const Var& z, const std::vector<double>& actions,
                     const std::vector<int>& levels,
                     const std::vector<bool>& mask, Rng& rng) const;

  struct StepTrace {
    std::vector<int> levels;
    std::vector<bool> mask;
  };

  // Draw order: level per element, then each element's mask.
  Var training_forward(const TrainBatch& batch, Rng& rng, StepTrace* trace);

  double training_step(const TrainBatch& batch, AdamW& opt, double lr_now,
                       Rng& rng);

 private:
  ModelConfig cfg_;
  ParamStore store_;
  DiffusionSchedule sched_;

  LinearLayer obs_fc1_, obs_fc2_;
  LayerNormLayer obs_norm_;
  LinearLayer act_proj_;
  Var enc_lvl_, enc_pos_;
  std::vector<TransformerBlock> enc_blocks_;
  LayerNormLayer enc_norm_;

  LinearLayer dec_proj_;
  Var mask_token_, dec_lvl_, dec_pos_;
  std::vector<TransformerBlock> dec_blocks_;
  LayerNormLayer dec_norm_;

  LinearLayer head_in_, head_cond_, head_cmix_;
  Var head_temb_, head_lvl_;
  struct HeadBlock {
    LinearLayer mod, fc1, fc2;
  };
  std::vector<HeadBlock> head_blocks_;
  LinearLayer head_final_mod_, head_out_, head_skip_;

  // Modulated MLP stack shared by the full and masked-row head paths;
  // c_act is the already-activated conditioning signal, x_in the raw noisy
  // input feeding both the stream and the gated linear skip at the output.
  Var head_mlp(const Var& x_in, const Var& c_act) const;
};

}  // namespace freqact
