#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "freqact/rng.hpp"
#include "freqact/tensor.hpp"

namespace freqact {

// Owns every learnable tensor under a stable name; creation order is the
// checkpoint order.
struct ParamStore {
  std::vector<Var> params;
  std::unordered_map<std::string, size_t> index;

  Var create(const std::string& name, int rows, int cols);
  Var get(const std::string& name) const;
  bool has(const std::string& name) const { return index.count(name) > 0; }
  size_t total_size() const;
  void zero_grad();
};

// Resamples anything beyond two standard deviations.
void init_trunc_normal(const Var& t, double std, Rng& rng);
void fill_value(const Var& t, double v);

// Throws NumericError naming the first non-finite parameter.
void check_params_finite(const ParamStore& store);

struct LinearLayer {
  Var w, b;
  static LinearLayer create(ParamStore& store, const std::string& name, int in,
                            int out, Rng& rng);
  // All-zero weights and bias; used for the modulation and output layers of
  // the denoising head so it starts as the zero function.
  static LinearLayer create_zeroed(ParamStore& store, const std::string& name,
                                   int in, int out);
  Var operator()(const Var& x) const { return linear(x, w, b); }
};

struct LayerNormLayer {
  Var gain, offset;
  static LayerNormLayer create(ParamStore& store, const std::string& name,
                               int width);
  Var operator()(const Var& x) const { return layernorm(x, gain, offset); }
};

// Pre-norm block: x + proj(attn(ln1 x)), then x + mlp(ln2 x).
struct TransformerBlock {
  LayerNormLayer ln1, ln2;
  LinearLayer q, k, v, proj, fc1, fc2;
  int heads = 1;
  static TransformerBlock create(ParamStore& store, const std::string& name,
                                 int width, int heads, int mlp_hidden,
                                 Rng& rng);
  // key_bias, when nonempty, additively masks keys per row of the batch
  // (large negative = invisible).
  Var operator()(const Var& x, int seq,
                 const std::vector<double>& key_bias) const;
};

}  // namespace freqact
