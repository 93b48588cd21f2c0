// Compares the OpenMP kernels against their serial references: correctness
// (max absolute deviation) and throughput on a few representative shapes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "emdr/kernels.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

std::vector<double> random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> m(static_cast<size_t>(rows) * cols);
  for (double& x : m) x = dist(rng);
  return m;
}

template <class F>
double time_ms(F&& fn, int reps) {
  const auto t0 = clock_type::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = clock_type::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
  return d;
}

void bench_gemm(int m, int k, int n, int reps, std::mt19937_64& rng) {
  const auto a = random_matrix(m, k, rng);
  const auto b = random_matrix(k, n, rng);
  std::vector<double> c_serial(static_cast<size_t>(m) * n, 0.0);
  std::vector<double> c_par(c_serial);
  emdr::kernels::gemm_serial(a.data(), b.data(), c_serial.data(), m, k, n);
  emdr::kernels::gemm(a.data(), b.data(), c_par.data(), m, k, n);
  const double diff = max_abs_diff(c_serial, c_par);

  const double ts = time_ms(
      [&] {
        std::fill(c_serial.begin(), c_serial.end(), 0.0);
        emdr::kernels::gemm_serial(a.data(), b.data(), c_serial.data(), m, k, n);
      },
      reps);
  const double tp = time_ms(
      [&] {
        std::fill(c_par.begin(), c_par.end(), 0.0);
        emdr::kernels::gemm(a.data(), b.data(), c_par.data(), m, k, n);
      },
      reps);
  std::printf("gemm %4dx%4dx%4d  serial %8.3f ms  parallel %8.3f ms  "
              "speedup %5.2fx  max|diff| %.3e\n",
              m, k, n, ts, tp, ts / tp, diff);
}

void bench_dot_scores(int rows, int width, int reps, std::mt19937_64& rng) {
  const auto table = random_matrix(rows, width, rng);
  const auto q = random_matrix(1, width, rng);
  std::vector<double> out_serial(rows, 0.0), out_par(rows, 0.0);
  emdr::kernels::dot_scores_serial(table.data(), q.data(), out_serial.data(),
                                   rows, width);
  emdr::kernels::dot_scores(table.data(), q.data(), out_par.data(), rows,
                            width);
  const double diff = max_abs_diff(out_serial, out_par);

  const double ts = time_ms(
      [&] {
        emdr::kernels::dot_scores_serial(table.data(), q.data(),
                                         out_serial.data(), rows, width);
      },
      reps);
  const double tp = time_ms(
      [&] {
        emdr::kernels::dot_scores(table.data(), q.data(), out_par.data(), rows,
                                  width);
      },
      reps);
  std::printf("dot_scores %7d x %3d  serial %8.3f ms  parallel %8.3f ms  "
              "speedup %5.2fx  max|diff| %.3e\n",
              rows, width, ts, tp, ts / tp, diff);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", emdr::kernels::max_threads());
  std::mt19937_64 rng(42);
  bench_gemm(64, 64, 64, 50, rng);
  bench_gemm(256, 64, 256, 20, rng);
  bench_gemm(512, 512, 512, 3, rng);
  bench_dot_scores(1000, 64, 200, rng);
  bench_dot_scores(100000, 64, 10, rng);
  return 0;
}
