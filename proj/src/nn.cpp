#include "freqact/nn.hpp"

#include <cmath>

#include "freqact/errors.hpp"

namespace freqact {

Var ParamStore::create(const std::string& name, int rows, int cols) {
  if (index.count(name))
    throw ConfigError("parameter '" + name + "' created twice");
  Var t = make_leaf(rows, cols, true, name);
  index[name] = params.size();
  params.push_back(t);
  return t;
}

Var ParamStore::get(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end())
    throw ConfigError("unknown parameter '" + name + "'");
  return params[it->second];
}

size_t ParamStore::total_size() const {
  size_t n = 0;
  for (const auto& p : params) n += p->size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params) p->zero_grad();
}

void init_trunc_normal(const Var& t, double std, Rng& rng) {
  for (double& v : t->data) {
    double z;
    do {
      z = rng.normal();
    } while (std::fabs(z) > 2.0);
    v = z * std;
  }
}

void fill_value(const Var& t, double v) {
  for (double& x : t->data) x = v;
}

void check_params_finite(const ParamStore& store) {
  for (const auto& p : store.params)
    for (size_t i = 0; i < p->size(); ++i)
      if (!std::isfinite(p->data[i]))
        throw NumericError("non-finite value in parameter '" + p->name +
                           "' at flat index " + std::to_string(i));
}

LinearLayer LinearLayer::create(ParamStore& store, const std::string& name,
                                int in, int out, Rng& rng) {
  LinearLayer l;
  l.w = store.create(name + ".w", out, in);
  l.b = store.create(name + ".b", 1, out);
  init_trunc_normal(l.w, 0.02, rng);
  return l;
}

LinearLayer LinearLayer::create_zeroed(ParamStore& store,
                                       const std::string& name, int in,
                                       int out) {
  LinearLayer l;
  l.w = store.create(name + ".w", out, in);
  l.b = store.create(name + ".b", 1, out);
  return l;
}

LayerNormLayer LayerNormLayer::create(ParamStore& store,
                                      const std::string& name, int width) {
  LayerNormLayer l;
  l.gain = store.create(name + ".g", 1, width);
  l.offset = store.create(name + ".o", 1, width);
  fill_value(l.gain, 1.0);
  return l;
}

TransformerBlock TransformerBlock::create(ParamStore& store,
                                          const std::string& name, int width,
                                          int heads, int mlp_hidden,
                                          Rng& rng) {
  if (width % heads != 0)
    throw ConfigError(name + ": width " + std::to_string(width) +
                      " not divisible by " + std::to_string(heads) + " heads");
  TransformerBlock blk;
  blk.heads = heads;
  blk.ln1 = LayerNormLayer::create(store, name + ".ln1", width);
  blk.ln2 = LayerNormLayer::create(store, name + ".ln2", width);
  blk.q = LinearLayer::create(store, name + ".q", width, width, rng);
  blk.k = LinearLayer::create(store, name + ".k", width, width, rng);
  blk.v = LinearLayer::create(store, name + ".v", width, width, rng);
  blk.proj = LinearLayer::create(store, name + ".proj", width, width, rng);
  blk.fc1 = LinearLayer::create(store, name + ".fc1", width, mlp_hidden, rng);
  blk.fc2 = LinearLayer::create(store, name + ".fc2", mlp_hidden, width, rng);
  return blk;
}

Var TransformerBlock::operator()(const Var& x, int seq,
                                 const std::vector<double>& key_bias) const {
  Var h = ln1(x);
  Var scores = block_scores(q(h), k(h), heads, seq, key_bias);
  Var att = block_apply(softmax_rows(scores), v(h), heads, seq);
  Var x1 = add(x, proj(att));
  Var h2 = ln2(x1);
  return add(x1, fc2(gelu(fc1(h2))));
}

}  // namespace freqact
