#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace freqact {

// Reverse-mode graph node. All values are 2-d row-major [rows x cols];
// batches ride along the row axis as contiguous blocks. Ops build a DAG by
// linking parents; backward() walks it in reverse topological order.
//
// Gradients on leaves accumulate across backward() calls until zero_grad.
// Intermediate grads are reset at the start of every backward() pass, so each
// pass contributes exactly one copy of d(loss)/d(leaf).
struct Tensor {
  int rows = 0, cols = 0;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;  // leaf parameter or input under test
  bool needs_grad = false;     // true if any leaf below requires grad
  std::string name;            // set for parameters, empty for intermediates
  std::vector<std::shared_ptr<Tensor>> parents;
  std::function<void(Tensor&)> backward_fn;

  size_t size() const { return (size_t)rows * cols; }
  void ensure_grad() {
    if (grad.size() != size()) grad.assign(size(), 0.0);
  }
  void zero_grad() { grad.assign(size(), 0.0); }
};

using Var = std::shared_ptr<Tensor>;

// With grad recording off, ops produce plain values with no graph edges
// (inference mode). Thread-local.
bool grad_enabled();
void set_grad_enabled(bool on);
struct NoGrad {
  bool prev;
  NoGrad() : prev(grad_enabled()) { set_grad_enabled(false); }
  ~NoGrad() { set_grad_enabled(prev); }
};

Var make_leaf(int rows, int cols, bool requires_grad,
              const std::string& name = "");
Var make_const(int rows, int cols, const std::vector<double>& data);

// Seeds d(loss)/d(loss) = 1 and propagates. loss must be 1x1.
void backward(const Var& loss);

// Elementwise over equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);

// y = x * w^T + b with w [out x in], b [1 x out].
Var linear(const Var& x, const Var& w, const Var& b);

// Per-row normalization over the column axis; eps inside the sqrt.
Var layernorm(const Var& x, const Var& gain, const Var& offset);
Var layernorm_noaffine(const Var& x);

Var gelu(const Var& x);
Var silu(const Var& x);
Var softmax_rows(const Var& x);

// Attention plumbing over B row-blocks of S tokens, H heads of width
// cols/H. scores[(b*H+h)*S+i, j] = <q_i, k_j>_h / sqrt(head_dim), plus
// key_bias[b*S+j] when given (additive mask, no gradient).
Var block_scores(const Var& q, const Var& k, int heads, int seq,
                 const std::vector<double>& key_bias);
// out[b*S+i, h slice] = sum_j probs[(b*H+h)*S+i, j] * v[b*S+j, h slice]
Var block_apply(const Var& probs, const Var& v, int heads, int seq);

// Concatenates three per-block row groups into blocks of ra+rb+rc rows.
Var stack3(const Var& a, int ra, const Var& b, int rb, const Var& c, int rc);
// Pulls rows [offset, offset+count) out of every S-row block.
Var extract_rows(const Var& x, int seq, int offset, int count);

// x[b*S+i, :] += table[i, :] for every block b (shared positional table).
Var add_tiled(const Var& x, const Var& table);
// x[b*R+i, :] += v[b, :] (per-block conditioning vector).
Var add_block_broadcast(const Var& x, const Var& v, int rows_per_block);

// Row r of the result is flags[r] ? token[0,:] : x[r,:].
Var mask_blend(const Var& x, const Var& token, const std::vector<bool>& flags);

// out[r, :] = table[idx[r], :]; backward scatter-adds.
Var gather_rows(const Var& table, const std::vector<int>& idx);

Var slice_cols(const Var& x, int c0, int c1);

// out[r, :] = x[r, :] * w[r] with constant per-row weights.
Var row_scale(const Var& x, const std::vector<double>& w);

Var sum_all(const Var& x);

}  // namespace freqact
