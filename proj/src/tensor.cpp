#include "freqact/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "freqact/errors.hpp"
#include "freqact/kernels.hpp"

namespace freqact {

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows) + "x" + std::to_string(t.cols);
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a,
                             const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " vs " + shape_str(b));
}

Var make_node(int rows, int cols, std::vector<Var> parents) {
  auto t = std::make_shared<Tensor>();
  t->rows = rows;
  t->cols = cols;
  t->data.resize((size_t)rows * cols);
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p->needs_grad) t->needs_grad = true;
    if (t->needs_grad) t->parents = std::move(parents);
  }
  return t;
}

inline bool par(size_t n) {
  return n >= 4096 && !kernels::force_serial();
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Var make_leaf(int rows, int cols, bool requires_grad, const std::string& name) {
  auto t = std::make_shared<Tensor>();
  t->rows = rows;
  t->cols = cols;
  t->data.assign((size_t)rows * cols, 0.0);
  t->requires_grad = requires_grad;
  t->needs_grad = requires_grad;
  t->name = name;
  if (requires_grad) t->ensure_grad();
  return t;
}

Var make_const(int rows, int cols, const std::vector<double>& data) {
  auto t = make_leaf(rows, cols, false);
  if (data.size() != t->size())
    throw ShapeError("make_const: data length " + std::to_string(data.size()) +
                     " does not fill " + shape_str(*t));
  t->data = data;
  return t;
}

void backward(const Var& loss) {
  if (loss->rows != 1 || loss->cols != 1)
    throw ShapeError("backward: loss must be 1x1, got " + shape_str(*loss));

  // Iterative post-order over parent edges; reversed it is a topological
  // order with every consumer ahead of its producers.
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> seen;
  std::vector<std::pair<Tensor*, size_t>> stack;
  stack.push_back({loss.get(), 0});
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Tensor* p = node->parents[next++].get();
      if (p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Tensor* t : order) {
    if (t->backward_fn) {
      t->grad.assign(t->size(), 0.0);
    } else {
      t->ensure_grad();
    }
  }
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor* t = *it;
    if (t->backward_fn) t->backward_fn(*t);
  }
}

Var add(const Var& a, const Var& b) {
  if (a->rows != b->rows || a->cols != b->cols) shape_fail("add", *a, *b);
  Var out = make_node(a->rows, a->cols, {a, b});
  const long n = (long)out->size();
#pragma omp parallel for if (par(n)) schedule(static)
  for (long i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  if (out->needs_grad) {
    out->backward_fn = [a, b](Tensor& self) {
      const long n = (long)self.size();
      if (a->needs_grad) {
        a->ensure_grad();
#pragma omp parallel for if (par(n)) schedule(static)
        for (long i = 0; i < n; ++i) a->grad[i] += self.grad[i];
      }
      if (b->needs_grad) {
        b->ensure_grad();
#pragma omp parallel for if (par(n)) schedule(static)
        for (long i = 0; i < n; ++i) b->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

Var sub(const Var& a, const Var& b) {
  if (a->rows != b->rows || a->cols != b->cols) shape_fail("sub", *a, *b);
  Var out = make_node(a->rows, a->cols, {a, b});
  const long n = (long)out->size();
#pragma omp parallel for if (par(n)) schedule(static)
  for (long i = 0; i < n; ++i) out->data[i] = a->data[i] - b->data[i];
  if (out->needs_grad) {
    out->backward_fn = [a, b](Tensor& self) {
      const long n = (long)self.size();
      if (a->needs_grad) {
        a->ensure_grad();
#pragma omp parallel for if (par(n)) schedule(static)
        for (long i = 0; i < n; ++i) a->grad[i] += self.grad[i];
      }
      if (b->needs_grad) {
        b->ensure_grad();
#pragma omp parallel for if (par(n)) schedule(static)
        for (long i = 0; i < n; ++i) b->grad[i] -= self.grad[i];
      }
    };
  }
  return out;
}

Var hadamard(const Var& a, const Var& b) {
  if (a->rows != b->rows || a->cols != b->cols) shape_fail("hadamard", *a, *b);
  Var out = make_node(a->rows, a->cols, {a, b});
  const long n = (long)out->size();
#pragma omp parallel for if (par(n)) schedule(static)
  for (long i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
  if (out->needs_grad) {
    out->backward_fn = [a, b](Tensor& self) {
      const long n = (long)self.size();
      if (a->needs_grad) {
        a->ensure_grad();
#pragma omp parallel for if (par(n)) schedule(static)
        for (long i = 0; i < n; ++i) a->grad[i] += self.grad[i] * b->data[i];
      }
      if (b->needs_grad) {
        b->ensure_grad();
#pragma omp parallel for if (par(n)) schedule(static)
        for (long i = 0; i < n; ++i) b->grad[i] += self.grad[i] * a->data[i];
      }
    };
  }
  return out;
}

Var scale(const Var& a, double s) {
  Var out = make_node(a->rows, a->cols, {a});
  const long n = (long)out->size();
#pragma omp parallel for if (par(n)) schedule(static)
  for (long i = 0; i < n; ++i) out->data[i] = a->data[i] * s;
  if (out->needs_grad) {
    out->backward_fn = [a, s](Tensor& self) {
      a->ensure_grad();
      const long n = (long)self.size();
#pragma omp parallel for if (par(n)) schedule(static)
      for (long i = 0; i < n; ++i) a->grad[i] += self.grad[i] * s;
    };
  }
  return out;
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x->cols != w->cols)
    shape_fail("linear (input vs weight)", *x, *w);
  if (b->rows != 1 || b->cols != w->rows)
    shape_fail("linear (weight vs bias)", *w, *b);
  const int m = x->rows, in = x->cols, out_dim = w->rows;
  Var out = make_node(m, out_dim, {x, w, b});
  kernels::gemm_nt(x->data.data(), w->data.data(), out->data.data(), m, in,
                   out_dim, false);
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long r = 0; r < m; ++r)
    for (int j = 0; j < out_dim; ++j)
      out->data[(size_t)r * out_dim + j] += b->data[j];
  if (out->needs_grad) {
    out->backward_fn = [x, w, b, m, in, out_dim](Tensor& self) {
      if (x->needs_grad) {
        x->ensure_grad();
        kernels::gemm_nn(self.grad.data(), w->data.data(), x->grad.data(), m,
                         out_dim, in, true);
      }
      if (w->needs_grad) {
        w->ensure_grad();
        kernels::gemm_tn(self.grad.data(), x->data.data(), w->grad.data(),
                         out_dim, m, in, true);
      }
      if (b->needs_grad) {
        b->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
        for (int j = 0; j < out_dim; ++j) {
          double s = 0.0;
          for (long r = 0; r < m; ++r) s += self.grad[(size_t)r * out_dim + j];
          b->grad[j] += s;
        }
      }
    };
  }
  return out;
}

namespace {

constexpr double kLnEps = 1e-5;

void row_moments(const double* row, int c, double* mean, double* rstd) {
  double m = 0.0;
  for (int j = 0; j < c; ++j) m += row[j];
  m /= c;
  double v = 0.0;
  for (int j = 0; j < c; ++j) {
    const double d = row[j] - m;
    v += d * d;
  }
  v /= c;
  *mean = m;
  *rstd = 1.0 / std::sqrt(v + kLnEps);
}

// Shared layer-norm backward for the affine and plain variants.
void layernorm_backward(const Var& x, const Var& gain, const Var& offset,
                        Tensor& self) {
  const int m = x->rows, c = x->cols;
  const bool affine = gain != nullptr;
  if (x->needs_grad) x->ensure_grad();
  if (affine && gain->needs_grad) gain->ensure_grad();
  if (affine && offset->needs_grad) offset->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
  for (long r = 0; r < m; ++r) {
    const double* xr = x->data.data() + (size_t)r * c;
    const double* gr = self.grad.data() + (size_t)r * c;
    double mean, rstd;
    row_moments(xr, c, &mean, &rstd);
    if (!x->needs_grad) continue;
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (int j = 0; j < c; ++j) {
      const double xh = (xr[j] - mean) * rstd;
      const double dxh = affine ? gr[j] * gain->data[j] : gr[j];
      sum_dxh += dxh;
      sum_dxh_xh += dxh * xh;
    }
    double* dxr = x->grad.data() + (size_t)r * c;
    for (int j = 0; j < c; ++j) {
      const double xh = (xr[j] - mean) * rstd;
      const double dxh = affine ? gr[j] * gain->data[j] : gr[j];
      dxr[j] += rstd * (dxh - sum_dxh / c - xh * sum_dxh_xh / c);
    }
  }
  if (affine && (gain->needs_grad || offset->needs_grad)) {
#pragma omp parallel for if (par(self.size())) schedule(static)
    for (int j = 0; j < c; ++j) {
      double dg = 0.0, db = 0.0;
      for (long r = 0; r < m; ++r) {
        const double* xr = x->data.data() + (size_t)r * c;
        double mean, rstd;
        row_moments(xr, c, &mean, &rstd);
        const double xh = (xr[j] - mean) * rstd;
        const double g = self.grad[(size_t)r * c + j];
        dg += g * xh;
        db += g;
      }
      if (gain->needs_grad) gain->grad[j] += dg;
      if (offset->needs_grad) offset->grad[j] += db;
    }
  }
}

}  // namespace

Var layernorm(const Var& x, const Var& gain, const Var& offset) {
  if (gain->rows != 1 || gain->cols != x->cols)
    shape_fail("layernorm (input vs gain)", *x, *gain);
  if (offset->rows != 1 || offset->cols != x->cols)
    shape_fail("layernorm (input vs offset)", *x, *offset);
  const int m = x->rows, c = x->cols;
  Var out = make_node(m, c, {x, gain, offset});
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long r = 0; r < m; ++r) {
    const double* xr = x->data.data() + (size_t)r * c;
    double* yr = out->data.data() + (size_t)r * c;
    double mean, rstd;
    row_moments(xr, c, &mean, &rstd);
    for (int j = 0; j < c; ++j)
      yr[j] = (xr[j] - mean) * rstd * gain->data[j] + offset->data[j];
  }
  if (out->needs_grad) {
    out->backward_fn = [x, gain, offset](Tensor& self) {
      layernorm_backward(x, gain, offset, self);
    };
  }
  return out;
}

Var layernorm_noaffine(const Var& x) {
  const int m = x->rows, c = x->cols;
  Var out = make_node(m, c, {x});
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long r = 0; r < m; ++r) {
    const double* xr = x->data.data() + (size_t)r * c;
    double* yr = out->data.data() + (size_t)r * c;
    double mean, rstd;
    row_moments(xr, c, &mean, &rstd);
    for (int j = 0; j < c; ++j) yr[j] = (xr[j] - mean) * rstd;
  }
  if (out->needs_grad) {
    out->backward_fn = [x](Tensor& self) {
      layernorm_backward(x, nullptr, nullptr, self);
    };
  }
  return out;
}

Var gelu(const Var& x) {
  Var out = make_node(x->rows, x->cols, {x});
  const long n = (long)out->size();
#pragma omp parallel for if (par(n)) schedule(static)
  for (long i = 0; i < n; ++i) {
    const double v = x->data[i];
    out->data[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  }
  if (out->needs_grad) {
    out->backward_fn = [x](Tensor& self) {
      x->ensure_grad();
      const long n = (long)self.size();
      const double inv_sqrt_2pi = 0.3989422804014326779;
#pragma omp parallel for if (par(n)) schedule(static)
      for (long i = 0; i < n; ++i) {
        const double v = x->data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        x->grad[i] += self.grad[i] * (cdf + v * pdf);
      }
    };
  }
  return out;
}

Var silu(const Var& x) {
  Var out = make_node(x->rows, x->cols, {x});
  const long n = (long)out->size();
#pragma omp parallel for if (par(n)) schedule(static)
  for (long i = 0; i < n; ++i) {
    const double v = x->data[i];
    out->data[i] = v / (1.0 + std::exp(-v));
  }
  if (out->needs_grad) {
    out->backward_fn = [x](Tensor& self) {
      x->ensure_grad();
      const long n = (long)self.size();
#pragma omp parallel for if (par(n)) schedule(static)
      for (long i = 0; i < n; ++i) {
        const double v = x->data[i];
        const double sig = 1.0 / (1.0 + std::exp(-v));
        x->grad[i] += self.grad[i] * sig * (1.0 + v * (1.0 - sig));
      }
    };
  }
  return out;
}

Var softmax_rows(const Var& x) {
  const int m = x->rows, c = x->cols;
  Var out = make_node(m, c, {x});
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long r = 0; r < m; ++r) {
    const double* xr = x->data.data() + (size_t)r * c;
    double* yr = out->data.data() + (size_t)r * c;
    double mx = xr[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (int j = 0; j < c; ++j) yr[j] /= z;
  }
  if (out->needs_grad) {
    out->backward_fn = [x, m, c](Tensor& self) {
      x->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
      for (long r = 0; r < m; ++r) {
        const double* yr = self.data.data() + (size_t)r * c;
        const double* gr = self.grad.data() + (size_t)r * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += yr[j] * gr[j];
        double* dxr = x->grad.data() + (size_t)r * c;
        for (int j = 0; j < c; ++j) dxr[j] += yr[j] * (gr[j] - dot);
      }
    };
  }
  return out;
}

Var block_scores(const Var& q, const Var& k, int heads, int seq,
                 const std::vector<double>& key_bias) {
  if (q->rows != k->rows || q->cols != k->cols)
    shape_fail("block_scores", *q, *k);
  if (q->cols % heads != 0)
    throw ShapeError("block_scores: width " + std::to_string(q->cols) +
                     " not divisible by " + std::to_string(heads) + " heads");
  if (q->rows % seq != 0)
    throw ShapeError("block_scores: rows " + std::to_string(q->rows) +
                     " not divisible by seq " + std::to_string(seq));
  const int bsz = q->rows / seq;
  const int hd = q->cols / heads;
  const int w = q->cols;
  if (!key_bias.empty() && (long)key_bias.size() != (long)bsz * seq)
    throw ShapeError("block_scores: key bias length mismatch");
  const double sc = 1.0 / std::sqrt((double)hd);
  Var out = make_node(bsz * heads * seq, seq, {q, k});
  const long total = (long)bsz * heads * seq;
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long f = 0; f < total; ++f) {
    const int i = (int)(f % seq);
    const int h = (int)((f / seq) % heads);
    const int b = (int)(f / ((long)seq * heads));
    const double* qr = q->data.data() + ((size_t)b * seq + i) * w + h * hd;
    double* yr = out->data.data() + (size_t)f * seq;
    for (int j = 0; j < seq; ++j) {
      const double* kr = k->data.data() + ((size_t)b * seq + j) * w + h * hd;
      double s = 0.0;
      for (int d = 0; d < hd; ++d) s += qr[d] * kr[d];
      yr[j] = s * sc;
      if (!key_bias.empty()) yr[j] += key_bias[(size_t)b * seq + j];
    }
  }
  if (out->needs_grad) {
    out->backward_fn = [q, k, heads, seq, bsz, hd, w, sc](Tensor& self) {
      const long total = (long)bsz * heads * seq;
      if (q->needs_grad) {
        q->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
        for (long f = 0; f < total; ++f) {
          const int i = (int)(f % seq);
          const int h = (int)((f / seq) % heads);
          const int b = (int)(f / ((long)seq * heads));
          const double* gr = self.grad.data() + (size_t)f * seq;
          double* dq = q->grad.data() + ((size_t)b * seq + i) * w + h * hd;
          for (int j = 0; j < seq; ++j) {
            const double* kr =
                k->data.data() + ((size_t)b * seq + j) * w + h * hd;
            const double g = gr[j] * sc;
            for (int d = 0; d < hd; ++d) dq[d] += g * kr[d];
          }
        }
      }
      if (k->needs_grad) {
        k->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
        for (long f = 0; f < total; ++f) {
          const int j = (int)(f % seq);
          const int h = (int)((f / seq) % heads);
          const int b = (int)(f / ((long)seq * heads));
          double* dk = k->grad.data() + ((size_t)b * seq + j) * w + h * hd;
          for (int i = 0; i < seq; ++i) {
            const double g =
                self.grad[(((size_t)b * heads + h) * seq + i) * seq + j] * sc;
            const double* qr =
                q->data.data() + ((size_t)b * seq + i) * w + h * hd;
            for (int d = 0; d < hd; ++d) dk[d] += g * qr[d];
          }
        }
      }
    };
  }
  return out;
}

Var block_apply(const Var& probs, const Var& v, int heads, int seq) {
  const int w = v->cols;
  if (w % heads != 0 || v->rows % seq != 0)
    shape_fail("block_apply", *probs, *v);
  const int bsz = v->rows / seq;
  const int hd = w / heads;
  if (probs->rows != bsz * heads * seq || probs->cols != seq)
    shape_fail("block_apply", *probs, *v);
  Var out = make_node(v->rows, w, {probs, v});
  const long total = (long)bsz * heads * seq;
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long f = 0; f < total; ++f) {
    const int i = (int)(f % seq);
    const int h = (int)((f / seq) % heads);
    const int b = (int)(f / ((long)seq * heads));
    const double* pr = probs->data.data() + (size_t)f * seq;
    double* yr = out->data.data() + ((size_t)b * seq + i) * w + h * hd;
    for (int d = 0; d < hd; ++d) yr[d] = 0.0;
    for (int j = 0; j < seq; ++j) {
      const double p = pr[j];
      const double* vr = v->data.data() + ((size_t)b * seq + j) * w + h * hd;
      for (int d = 0; d < hd; ++d) yr[d] += p * vr[d];
    }
  }
  if (out->needs_grad) {
    out->backward_fn = [probs, v, heads, seq, bsz, hd, w](Tensor& self) {
      const long total = (long)bsz * heads * seq;
      if (probs->needs_grad) {
        probs->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
        for (long f = 0; f < total; ++f) {
          const int i = (int)(f % seq);
          const int h = (int)((f / seq) % heads);
          const int b = (int)(f / ((long)seq * heads));
          const double* gr =
              self.grad.data() + ((size_t)b * seq + i) * w + h * hd;
          double* dp = probs->grad.data() + (size_t)f * seq;
          for (int j = 0; j < seq; ++j) {
            const double* vr =
                v->data.data() + ((size_t)b * seq + j) * w + h * hd;
            double s = 0.0;
            for (int d = 0; d < hd; ++d) s += gr[d] * vr[d];
            dp[j] += s;
          }
        }
      }
      if (v->needs_grad) {
        v->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
        for (long f = 0; f < total; ++f) {
          const int j = (int)(f % seq);
          const int h = (int)((f / seq) % heads);
          const int b = (int)(f / ((long)seq * heads));
          double* dv = v->grad.data() + ((size_t)b * seq + j) * w + h * hd;
          for (int i = 0; i < seq; ++i) {
            const double p =
                probs->data[(((size_t)b * heads + h) * seq + i) * seq + j];
            const double* gr =
                self.grad.data() + ((size_t)b * seq + i) * w + h * hd;
            for (int d = 0; d < hd; ++d) dv[d] += p * gr[d];
          }
        }
      }
    };
  }
  return out;
}

Var stack3(const Var& a, int ra, const Var& b, int rb, const Var& c, int rc) {
  const int w = a->cols;
  if (b->cols != w || c->cols != w) shape_fail("stack3", *a, *b);
  if (ra <= 0 || rb < 0 || rc < 0 || a->rows % ra != 0)
    throw ShapeError("stack3: bad block row counts");
  const int bsz = a->rows / ra;
  if (b->rows != bsz * rb || c->rows != bsz * rc)
    throw ShapeError("stack3: block count mismatch");
  const int s = ra + rb + rc;
  Var out = make_node(bsz * s, w, {a, b, c});
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (int blk = 0; blk < bsz; ++blk) {
    double* dst = out->data.data() + (size_t)blk * s * w;
    std::copy_n(a->data.data() + (size_t)blk * ra * w, (size_t)ra * w, dst);
    std::copy_n(b->data.data() + (size_t)blk * rb * w, (size_t)rb * w,
                dst + (size_t)ra * w);
    std::copy_n(c->data.data() + (size_t)blk * rc * w, (size_t)rc * w,
                dst + (size_t)(ra + rb) * w);
  }
  if (out->needs_grad) {
    out->backward_fn = [a, b, c, ra, rb, rc, bsz, s, w](Tensor& self) {
      if (a->needs_grad) a->ensure_grad();
      if (b->needs_grad) b->ensure_grad();
      if (c->needs_grad) c->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
      for (int blk = 0; blk < bsz; ++blk) {
        const double* src = self.grad.data() + (size_t)blk * s * w;
        if (a->needs_grad)
          for (size_t i = 0; i < (size_t)ra * w; ++i)
            a->grad[(size_t)blk * ra * w + i] += src[i];
        if (b->needs_grad)
          for (size_t i = 0; i < (size_t)rb * w; ++i)
            b->grad[(size_t)blk * rb * w + i] += src[(size_t)ra * w + i];
        if (c->needs_grad)
          for (size_t i = 0; i < (size_t)rc * w; ++i)
            c->grad[(size_t)blk * rc * w + i] +=
                src[(size_t)(ra + rb) * w + i];
      }
    };
  }
  return out;
}

Var extract_rows(const Var& x, int seq, int offset, int count) {
  if (x->rows % seq != 0 || offset < 0 || count < 0 || offset + count > seq)
    throw ShapeError("extract_rows: bad window [" + std::to_string(offset) +
                     ", +" + std::to_string(count) + ") in seq " +
                     std::to_string(seq));
  const int bsz = x->rows / seq;
  const int w = x->cols;
  Var out = make_node(bsz * count, w, {x});
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (int blk = 0; blk < bsz; ++blk)
    std::copy_n(x->data.data() + ((size_t)blk * seq + offset) * w,
                (size_t)count * w, out->data.data() + (size_t)blk * count * w);
  if (out->needs_grad) {
    out->backward_fn = [x, seq, offset, count, bsz, w](Tensor& self) {
      x->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
      for (int blk = 0; blk < bsz; ++blk) {
        const double* src = self.grad.data() + (size_t)blk * count * w;
        double* dst = x->grad.data() + ((size_t)blk * seq + offset) * w;
        for (size_t i = 0; i < (size_t)count * w; ++i) dst[i] += src[i];
      }
    };
  }
  return out;
}

Var add_tiled(const Var& x, const Var& table) {
  if (table->cols != x->cols || x->rows % table->rows != 0)
    shape_fail("add_tiled", *x, *table);
  const int s = table->rows, w = x->cols;
  const int bsz = x->rows / s;
  Var out = make_node(x->rows, w, {x, table});
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long r = 0; r < (long)x->rows; ++r) {
    const double* tr = table->data.data() + (size_t)(r % s) * w;
    const double* xr = x->data.data() + (size_t)r * w;
    double* yr = out->data.data() + (size_t)r * w;
    for (int j = 0; j < w; ++j) yr[j] = xr[j] + tr[j];
  }
  if (out->needs_grad) {
    out->backward_fn = [x, table, s, w, bsz](Tensor& self) {
      const long n = (long)self.size();
      if (x->needs_grad) {
        x->ensure_grad();
#pragma omp parallel for if (par(n)) schedule(static)
        for (long i = 0; i < n; ++i) x->grad[i] += self.grad[i];
      }
      if (table->needs_grad) {
        table->ensure_grad();
#pragma omp parallel for if (par(n)) schedule(static)
        for (int i = 0; i < s; ++i) {
          double* dst = table->grad.data() + (size_t)i * w;
          for (int blk = 0; blk < bsz; ++blk) {
            const double* src =
                self.grad.data() + ((size_t)blk * s + i) * w;
            for (int j = 0; j < w; ++j) dst[j] += src[j];
          }
        }
      }
    };
  }
  return out;
}

Var add_block_broadcast(const Var& x, const Var& v, int rows_per_block) {
  if (v->cols != x->cols || x->rows != v->rows * rows_per_block)
    shape_fail("add_block_broadcast", *x, *v);
  const int w = x->cols, bsz = v->rows;
  Var out = make_node(x->rows, w, {x, v});
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long r = 0; r < (long)x->rows; ++r) {
    const double* vr = v->data.data() + (size_t)(r / rows_per_block) * w;
    const double* xr = x->data.data() + (size_t)r * w;
    double* yr = out->data.data() + (size_t)r * w;
    for (int j = 0; j < w; ++j) yr[j] = xr[j] + vr[j];
  }
  if (out->needs_grad) {
    out->backward_fn = [x, v, rows_per_block, w, bsz](Tensor& self) {
      const long n = (long)self.size();
      if (x->needs_grad) {
        x->ensure_grad();
#pragma omp parallel for if (par(n)) schedule(static)
        for (long i = 0; i < n; ++i) x->grad[i] += self.grad[i];
      }
      if (v->needs_grad) {
        v->ensure_grad();
#pragma omp parallel for if (par(n)) schedule(static)
        for (int blk = 0; blk < bsz; ++blk) {
          double* dst = v->grad.data() + (size_t)blk * w;
          for (int i = 0; i < rows_per_block; ++i) {
            const double* src =
                self.grad.data() + ((size_t)blk * rows_per_block + i) * w;
            for (int j = 0; j < w; ++j) dst[j] += src[j];
          }
        }
      }
    };
  }
  return out;
}

Var mask_blend(const Var& x, const Var& token,
               const std::vector<bool>& flags) {
  if (token->rows != 1 || token->cols != x->cols)
    shape_fail("mask_blend", *x, *token);
  if ((long)flags.size() != (long)x->rows)
    throw ShapeError("mask_blend: flag count " + std::to_string(flags.size()) +
                     " vs rows " + std::to_string(x->rows));
  const int w = x->cols;
  Var out = make_node(x->rows, w, {x, token});
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long r = 0; r < (long)x->rows; ++r) {
    const double* src = flags[r] ? token->data.data()
                                 : x->data.data() + (size_t)r * w;
    std::copy_n(src, w, out->data.data() + (size_t)r * w);
  }
  if (out->needs_grad) {
    out->backward_fn = [x, token, flags, w](Tensor& self) {
      if (x->needs_grad) {
        x->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
        for (long r = 0; r < (long)self.rows; ++r) {
          if (flags[r]) continue;
          const double* src = self.grad.data() + (size_t)r * w;
          double* dst = x->grad.data() + (size_t)r * w;
          for (int j = 0; j < w; ++j) dst[j] += src[j];
        }
      }
      if (token->needs_grad) {
        token->ensure_grad();
        for (long r = 0; r < (long)self.rows; ++r) {
          if (!flags[r]) continue;
          const double* src = self.grad.data() + (size_t)r * w;
          for (int j = 0; j < w; ++j) token->grad[j] += src[j];
        }
      }
    };
  }
  return out;
}

Var gather_rows(const Var& table, const std::vector<int>& idx) {
  const int w = table->cols;
  for (int i : idx)
    if (i < 0 || i >= table->rows)
      throw ShapeError("gather_rows: index " + std::to_string(i) +
                       " outside table with " + std::to_string(table->rows) +
                       " rows");
  Var out = make_node((int)idx.size(), w, {table});
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy_n(table->data.data() + (size_t)idx[r] * w, w,
                out->data.data() + r * w);
  if (out->needs_grad) {
    out->backward_fn = [table, idx, w](Tensor& self) {
      table->ensure_grad();
      for (size_t r = 0; r < idx.size(); ++r) {
        const double* src = self.grad.data() + r * w;
        double* dst = table->grad.data() + (size_t)idx[r] * w;
        for (int j = 0; j < w; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

Var slice_cols(const Var& x, int c0, int c1) {
  if (c0 < 0 || c1 <= c0 || c1 > x->cols)
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") of " + std::to_string(x->cols));
  const int w = c1 - c0;
  Var out = make_node(x->rows, w, {x});
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long r = 0; r < (long)x->rows; ++r)
    std::copy_n(x->data.data() + (size_t)r * x->cols + c0, w,
                out->data.data() + (size_t)r * w);
  if (out->needs_grad) {
    out->backward_fn = [x, c0, w](Tensor& self) {
      x->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
      for (long r = 0; r < (long)self.rows; ++r) {
        const double* src = self.grad.data() + (size_t)r * w;
        double* dst = x->grad.data() + (size_t)r * x->cols + c0;
        for (int j = 0; j < w; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

Var row_scale(const Var& x, const std::vector<double>& w) {
  if ((long)w.size() != (long)x->rows)
    throw ShapeError("row_scale: weight count " + std::to_string(w.size()) +
                     " vs rows " + std::to_string(x->rows));
  const int c = x->cols;
  Var out = make_node(x->rows, c, {x});
#pragma omp parallel for if (par(out->size())) schedule(static)
  for (long r = 0; r < (long)x->rows; ++r) {
    const double s = w[r];
    const double* xr = x->data.data() + (size_t)r * c;
    double* yr = out->data.data() + (size_t)r * c;
    for (int j = 0; j < c; ++j) yr[j] = xr[j] * s;
  }
  if (out->needs_grad) {
    out->backward_fn = [x, w, c](Tensor& self) {
      x->ensure_grad();
#pragma omp parallel for if (par(self.size())) schedule(static)
      for (long r = 0; r < (long)self.rows; ++r) {
        const double s = w[r];
        const double* src = self.grad.data() + (size_t)r * c;
        double* dst = x->grad.data() + (size_t)r * c;
        for (int j = 0; j < c; ++j) dst[j] += src[j] * s;
      }
    };
  }
  return out;
}

Var sum_all(const Var& x) {
  Var out = make_node(1, 1, {x});
  double s = 0.0;
  for (double v : x->data) s += v;
  out->data[0] = s;
  if (out->needs_grad) {
    out->backward_fn = [x](Tensor& self) {
      x->ensure_grad();
      const double g = self.grad[0];
      const long n = (long)x->size();
#pragma omp parallel for if (par(n)) schedule(static)
      for (long i = 0; i < n; ++i) x->grad[i] += g;
    };
  }
  return out;
}

}  // namespace freqact
