#include "emdr/kernels.hpp"

#include <algorithm>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace emdr::kernels {

int max_threads() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
  if (const char* env = std::getenv("EMDR_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
#else
  return 1;
#endif
}

// ikj order so the inner loop is a contiguous axpy over B and C rows.
void gemm_serial(const double* a, const double* b, double* c,
                 int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<size_t>(i) * n;
    const double* ai = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm(const double* a, const double* b, double* c, int m, int k, int n) {
  const long work = static_cast<long>(m) * k * n;
  if (work < 1 << 16 || max_threads() == 1) {
    gemm_serial(a, b, c, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int i = 0; i < m; ++i) {
    gemm_serial(a + static_cast<size_t>(i) * k, b,
                c + static_cast<size_t>(i) * n, 1, k, n);
  }
}

void gemm_bt_serial(const double* a, const double* b, double* c,
                    int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void gemm_bt(const double* a, const double* b, double* c, int m, int k, int n) {
  const long work = static_cast<long>(m) * k * n;
  if (work < 1 << 16 || max_threads() == 1) {
    gemm_bt_serial(a, b, c, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int i = 0; i < m; ++i) {
    gemm_bt_serial(a + static_cast<size_t>(i) * k, b,
                   c + static_cast<size_t>(i) * n, 1, k, n);
  }
}

void gemm_at_serial(const double* a, const double* b, double* c,
                    int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<size_t>(p) * m;
    const double* bp = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_at(const double* a, const double* b, double* c, int m, int k, int n) {
  // Parallelizing over p would race on C; keep the deterministic serial order.
  gemm_at_serial(a, b, c, m, k, n);
}

void dot_scores_serial(const double* rows, const double* q,
                       double* out, int n_rows, int width) {
  for (int i = 0; i < n_rows; ++i) {
    const double* r = rows + static_cast<size_t>(i) * width;
    double acc = 0.0;
    for (int j = 0; j < width; ++j) acc += r[j] * q[j];
    out[i] = acc;
  }
}

void dot_scores(const double* rows, const double* q,
                double* out, int n_rows, int width) {
  if (static_cast<long>(n_rows) * width < 1 << 16 || max_threads() == 1) {
    dot_scores_serial(rows, q, out, n_rows, width);
    return;
  }
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int i = 0; i < n_rows; ++i) {
    const double* r = rows + static_cast<size_t>(i) * width;
    double acc = 0.0;
    for (int j = 0; j < width; ++j) acc += r[j] * q[j];
    out[i] = acc;
  }
}

}  // namespace emdr::kernels
