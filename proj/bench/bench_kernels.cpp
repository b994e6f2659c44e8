#include <omp.h>

#include <cstdio>
#include <cstring>
#include <vector>

#include "freqact/kernels.hpp"
#include "freqact/rng.hpp"

using namespace freqact;

namespace {

using GemmFn = void (*)(const double*, const double*, double*, int, int, int,
                        bool);

double time_gemm(GemmFn fn, const std::vector<double>& a,
                 const std::vector<double>& b, std::vector<double>& c, int m,
                 int k, int n, int reps) {
  fn(a.data(), b.data(), c.data(), m, k, n, false);  // warm up
  const double t0 = omp_get_wtime();
  for (int r = 0; r < reps; ++r)
    fn(a.data(), b.data(), c.data(), m, k, n, false);
  return (omp_get_wtime() - t0) / reps;
}

}  // namespace

int main() {
  std::printf("threads: %d\n\n", kernels::max_threads() > 0
                                     ? kernels::max_threads()
                                     : omp_get_max_threads());
  std::printf("%8s %12s %12s %9s %10s %8s\n", "size", "serial_ms",
              "parallel_ms", "speedup", "gflops", "match");

  for (int size : {64, 128, 256, 512}) {
    const int m = size, k = size, n = size;
    Rng rng(17);
    std::vector<double> a((size_t)m * k), b((size_t)k * n);
    for (auto& v : a) v = rng.uniform(-1.0, 1.0);
    for (auto& v : b) v = rng.uniform(-1.0, 1.0);
    std::vector<double> cs((size_t)m * n), cp((size_t)m * n);

    const int reps = size <= 128 ? 50 : 10;
    const double ts =
        time_gemm(kernels::gemm_nn_serial, a, b, cs, m, k, n, reps);
    const double tp = time_gemm(kernels::gemm_nn, a, b, cp, m, k, n, reps);
    const bool match =
        std::memcmp(cs.data(), cp.data(), cs.size() * sizeof(double)) == 0;
    const double flops = 2.0 * m * k * n;
    std::printf("%8d %12.3f %12.3f %8.2fx %10.2f %8s\n", size, ts * 1e3,
                tp * 1e3, ts / tp, flops / tp * 1e-9,
                match ? "exact" : "DIFFER");
    if (!match) return 1;
  }
  return 0;
}
