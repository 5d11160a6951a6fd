#pragma once

#include <cstdint>

namespace mcanet::detail {

// C[M,N] = alpha * op(A) @ op(B) + beta * C, all row-major.
// Backed by CBLAS when available, with a plain fallback otherwise.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, int64_t lda, const double* b, int64_t ldb, double beta,
          double* c, int64_t ldc);
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
          const float* a, int64_t lda, const float* b, int64_t ldb, float beta,
          float* c, int64_t ldc);

void set_blas_threads(int n);

}  // namespace mcanet::detail
