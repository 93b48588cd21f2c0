#pragma once

#include <cstddef>

// Dense inner-loop kernels. Each kernel has an OpenMP-parallel entry point
// and a plain serial reference used by the tests and the benchmark target.
// Thread count is capped by the EMDR_THREADS environment variable.

namespace emdr::kernels {

int max_threads();

// C[m x n] += A[m x k] * B[k x n], row major.
void gemm_serial(const double* a, const double* b, double* c,
                 int m, int k, int n);
void gemm(const double* a, const double* b, double* c,
          int m, int k, int n);

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_bt_serial(const double* a, const double* b, double* c,
                    int m, int k, int n);
void gemm_bt(const double* a, const double* b, double* c,
             int m, int k, int n);

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_at_serial(const double* a, const double* b, double* c,
                    int m, int k, int n);
void gemm_at(const double* a, const double* b, double* c,
             int m, int k, int n);

// out[i] = rows[i] . q for i in [0, n_rows), rows is n_rows x width.
void dot_scores_serial(const double* rows, const double* q,
                       double* out, int n_rows, int width);
void dot_scores(const double* rows, const double* q,
                double* out, int n_rows, int width);

}  // namespace emdr::kernels
