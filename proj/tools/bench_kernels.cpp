// Micro-benchmark comparing the serial and OpenMP kernel lanes, and checking
// on the way that both lanes agree bit-for-bit (they must: the parallel lane
// only distributes independent output rows).
//
// Usage: url-bench [--size N] [--reps R]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "url/numeric/kernels.hpp"
#include "url/rng.hpp"

namespace ker = url::numeric::kernels;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch())
      .count();
}

std::vector<double> random_matrix(url::RngStream& rng, int64_t n) {
  std::vector<double> m(static_cast<size_t>(n));
  for (double& v : m) v = rng.next_normal();
  return m;
}

struct LaneTiming {
  double serial_ms = 0.0;
  double parallel_ms = 0.0;
  bool identical = true;
};

template <typename SerialFn, typename ParFn>
LaneTiming time_lanes(SerialFn serial_fn, ParFn par_fn, std::vector<double>& out_serial,
                      std::vector<double>& out_par, int reps) {
  LaneTiming t;
  double t0 = now_ms();
  for (int r = 0; r < reps; ++r) serial_fn(out_serial.data());
  t.serial_ms = (now_ms() - t0) / reps;
  t0 = now_ms();
  for (int r = 0; r < reps; ++r) par_fn(out_par.data());
  t.parallel_ms = (now_ms() - t0) / reps;
  t.identical = std::memcmp(out_serial.data(), out_par.data(),
                            out_serial.size() * sizeof(double)) == 0;
  return t;
}

void report(const char* name, const LaneTiming& t) {
  double speedup = t.parallel_ms > 0.0 ? t.serial_ms / t.parallel_ms : 0.0;
  std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n",
              name, t.serial_ms, t.parallel_ms, speedup,
              t.identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int64_t size = 256;
  int reps = 5;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--size" && i + 1 < argc) size = std::atoll(argv[++i]);
    else if (arg == "--reps" && i + 1 < argc) reps = std::atoi(argv[++i]);
    else {
      std::fprintf(stderr, "usage: url-bench [--size N] [--reps R]\n");
      return 1;
    }
  }

#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP not available; parallel lane runs serially\n");
#endif
  std::printf("matrix size %lld, %d reps per lane\n\n",
              static_cast<long long>(size), reps);

  url::RngStream rng(7);
  int64_t n = size;
  std::vector<double> a = random_matrix(rng, n * n);
  std::vector<double> b = random_matrix(rng, n * n);
  std::vector<double> out1(static_cast<size_t>(n * n));
  std::vector<double> out2(static_cast<size_t>(n * n));

  report("matmul_nn", time_lanes(
      [&](double* c) { ker::serial::matmul_nn(a.data(), b.data(), c, n, n, n, false); },
      [&](double* c) { ker::par::matmul_nn(a.data(), b.data(), c, n, n, n, false); },
      out1, out2, reps));

  report("matmul_nt", time_lanes(
      [&](double* c) { ker::serial::matmul_nt(a.data(), b.data(), c, n, n, n, false); },
      [&](double* c) { ker::par::matmul_nt(a.data(), b.data(), c, n, n, n, false); },
      out1, out2, reps));

  report("matmul_tn", time_lanes(
      [&](double* c) { ker::serial::matmul_tn(a.data(), b.data(), c, n, n, n, false); },
      [&](double* c) { ker::par::matmul_tn(a.data(), b.data(), c, n, n, n, false); },
      out1, out2, reps));

  report("gelu_forward", time_lanes(
      [&](double* c) { ker::serial::gelu_forward(a.data(), c, n * n); },
      [&](double* c) { ker::par::gelu_forward(a.data(), c, n * n); },
      out1, out2, reps));

  report("softmax_rows", time_lanes(
      [&](double* c) { ker::serial::softmax_rows(a.data(), c, n, n); },
      [&](double* c) { ker::par::softmax_rows(a.data(), c, n, n); },
      out1, out2, reps));

  report("causal_softmax", time_lanes(
      [&](double* c) { ker::serial::causal_softmax(a.data(), c, n); },
      [&](double* c) { ker::par::causal_softmax(a.data(), c, n); },
      out1, out2, reps));

  std::vector<double> gamma = random_matrix(rng, n);
  std::vector<double> beta = random_matrix(rng, n);
  std::vector<double> mean(static_cast<size_t>(n));
  std::vector<double> inv_std(static_cast<size_t>(n));
  report("layernorm_rows", time_lanes(
      [&](double* c) {
        ker::serial::layernorm_rows(a.data(), gamma.data(), beta.data(), c,
                                    mean.data(), inv_std.data(), n, n, 1e-5);
      },
      [&](double* c) {
        ker::par::layernorm_rows(a.data(), gamma.data(), beta.data(), c,
                                 mean.data(), inv_std.data(), n, n, 1e-5);
      },
      out1, out2, reps));

  return 0;
}
