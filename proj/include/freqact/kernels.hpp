#pragma once

// Dense row-major kernels backing the tensor library. Every kernel has a
// serial reference implementation and an OpenMP variant that partitions
// output rows; each output element is reduced serially by exactly one
// thread, so the two paths agree bitwise and results do not depend on the
// thread count. bench/bench_kernels.cpp compares the two.

namespace freqact::kernels {

// Caps OpenMP worker threads (FREQACT_THREADS). 0 keeps the OpenMP default.
void set_max_threads(int n);
int max_threads();

// Routes every dispatching kernel through the serial reference.
void set_force_serial(bool on);
bool force_serial();

// c[m x n] = a[m x k] * b[k x n]   (accumulate: c += ...)
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate);
// c[m x n] = a[m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate);
// c[m x n] = a[k x m]^T * b[k x n]
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n,
             bool accumulate);

void gemm_nn_serial(const double* a, const double* b, double* c, int m, int k,
                    int n, bool accumulate);
void gemm_nt_serial(const double* a, const double* b, double* c, int m, int k,
                    int n, bool accumulate);
void gemm_tn_serial(const double* a, const double* b, double* c, int m, int k,
                    int n, bool accumulate);

}  // namespace freqact::kernels
