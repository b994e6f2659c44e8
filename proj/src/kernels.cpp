#include "freqact/kernels.hpp"

#include <omp.h>

#include <cstring>

namespace freqact::kernels {

namespace {
int g_max_threads = 0;
bool g_force_serial = false;

// Work below this many multiply-adds is not worth a parallel region.
constexpr long kParallelCutoff = 64 * 1024;

inline int threads_for(long work) {
  if (g_force_serial || work < kParallelCutoff) return 1;
  int t = omp_get_max_threads();
  if (g_max_threads > 0 && g_max_threads < t) t = g_max_threads;
  return t;
}

// Row blocks share each streamed b row; every output element still
// accumulates over l in ascending order, so blocking leaves results
// bitwise identical to the naive loop.
inline void nn_rows4(const double* a, const double* b, double* c, int k, int n,
                     long i, long rows) {
  if (rows == 4) {
    const double *a0 = a + i * k, *a1 = a0 + k, *a2 = a1 + k, *a3 = a2 + k;
    double *c0 = c + i * n, *c1 = c0 + n, *c2 = c1 + n, *c3 = c2 + n;
    for (int l = 0; l < k; ++l) {
      const double v0 = a0[l], v1 = a1[l], v2 = a2[l], v3 = a3[l];
      const double* bl = b + static_cast<long>(l) * n;
      for (int j = 0; j < n; ++j) {
        const double bj = bl[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
    return;
  }
  for (long r = i; r < i + rows; ++r) {
    const double* ar = a + r * k;
    double* cr = c + r * n;
    for (int l = 0; l < k; ++l) {
      const double av = ar[l];
      const double* bl = b + static_cast<long>(l) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * bl[j];
    }
  }
}

inline void tn_rows4(const double* a, const double* b, double* c, int m, int k,
                     int n, long i, long rows) {
  // a is k x m, c[i][j] = sum_l a[l][i] * b[l][j]
  if (rows == 4) {
    double *c0 = c + i * n, *c1 = c0 + n, *c2 = c1 + n, *c3 = c2 + n;
    for (int l = 0; l < k; ++l) {
      const double* al = a + static_cast<long>(l) * m + i;
      const double v0 = al[0], v1 = al[1], v2 = al[2], v3 = al[3];
      const double* bl = b + static_cast<long>(l) * n;
      for (int j = 0; j < n; ++j) {
        const double bj = bl[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
    return;
  }
  for (long r = i; r < i + rows; ++r) {
    double* cr = c + r * n;
    for (int l = 0; l < k; ++l) {
      const double av = a[static_cast<long>(l) * m + r];
      const double* bl = b + static_cast<long>(l) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * bl[j];
    }
  }
}

// Four independent dot products per pass; each keeps its own accumulator,
// so per-element summation order matches the one-column loop.
inline void nt_row(const double* ai, const double* b, double* ci, int k, int n,
                   bool accumulate) {
  int j = 0;
  for (; j + 4 <= n; j += 4) {
    const double* b0 = b + static_cast<long>(j) * k;
    const double* b1 = b0 + k;
    const double* b2 = b1 + k;
    const double* b3 = b2 + k;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (int l = 0; l < k; ++l) {
      const double av = ai[l];
      s0 += av * b0[l];
      s1 += av * b1[l];
      s2 += av * b2[l];
      s3 += av * b3[l];
    }
    if (accumulate) {
      ci[j] += s0;
      ci[j + 1] += s1;
      ci[j + 2] += s2;
      ci[j + 3] += s3;
    } else {
      ci[j] = s0;
      ci[j + 1] = s1;
      ci[j + 2] = s2;
      ci[j + 3] = s3;
    }
  }
  for (; j < n; ++j) {
    const double* bj = b + static_cast<long>(j) * k;
    double s = 0.0;
    for (int l = 0; l < k; ++l) s += ai[l] * bj[l];
    ci[j] = accumulate ? ci[j] + s : s;
  }
}

}  // namespace

void set_max_threads(int n) {
  g_max_threads = n;
  if (n > 0) omp_set_num_threads(n);
}
int max_threads() { return g_max_threads; }
void set_force_serial(bool on) { g_force_serial = on; }
bool force_serial() { return g_force_serial; }

void gemm_nn_serial(const double* a, const double* b, double* c, int m, int k,
                    int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * m * n);
  long i = 0;
  for (; i + 4 <= m; i += 4) nn_rows4(a, b, c, k, n, i, 4);
  if (i < m) nn_rows4(a, b, c, k, n, i, m - i);
}

void gemm_nt_serial(const double* a, const double* b, double* c, int m, int k,
                    int n, bool accumulate) {
  for (int i = 0; i < m; ++i)
    nt_row(a + static_cast<long>(i) * k, b, c + static_cast<long>(i) * n, k, n,
           accumulate);
}

void gemm_tn_serial(const double* a, const double* b, double* c, int m, int k,
                    int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * m * n);
  long i = 0;
  for (; i + 4 <= m; i += 4) tn_rows4(a, b, c, m, k, n, i, 4);
  if (i < m) tn_rows4(a, b, c, m, k, n, i, m - i);
}

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate) {
  const long work = static_cast<long>(m) * k * n;
  const int nt = threads_for(work);
  if (nt == 1) {
    gemm_nn_serial(a, b, c, m, k, n, accumulate);
    return;
  }
  if (!accumulate) std::memset(c, 0, sizeof(double) * m * n);
  const long tiles = (m + 3) / 4;
#pragma omp parallel for num_threads(nt) schedule(static)
  for (long t = 0; t < tiles; ++t) {
    const long i = t * 4;
    nn_rows4(a, b, c, k, n, i, i + 4 <= m ? 4 : m - i);
  }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate) {
  const long work = static_cast<long>(m) * k * n;
  const int nt = threads_for(work);
  if (nt == 1) {
    gemm_nt_serial(a, b, c, m, k, n, accumulate);
    return;
  }
#pragma omp parallel for num_threads(nt) schedule(static)
  for (int i = 0; i < m; ++i)
    nt_row(a + static_cast<long>(i) * k, b, c + static_cast<long>(i) * n, k, n,
           accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate) {
  const long work = static_cast<long>(m) * k * n;
  const int nt = threads_for(work);
  if (nt == 1) {
    gemm_tn_serial(a, b, c, m, k, n, accumulate);
    return;
  }
  if (!accumulate) std::memset(c, 0, sizeof(double) * m * n);
  const long tiles = (m + 3) / 4;
#pragma omp parallel for num_threads(nt) schedule(static)
  for (long t = 0; t < tiles; ++t) {
    const long i = t * 4;
    tn_rows4(a, b, c, m, k, n, i, i + 4 <= m ? 4 : m - i);
  }
}

}  // namespace freqact::kernels
