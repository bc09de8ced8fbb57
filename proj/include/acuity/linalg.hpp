#pragma once

#include <cstddef>

// Row-major GEMM kernels shared by the tensor and layer code, backed by
// CBLAS. Each computes C = op(A) * op(B) + beta * C; the default beta of 1
// accumulates into C.
namespace acuity::linalg {

/// C[m,n] = A[m,k] * B[k,n] + beta * C
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             double beta = 1.0) noexcept;

/// C[m,n] = A[k,m]^T * B[k,n] + beta * C
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             double beta = 1.0) noexcept;

/// C[m,n] = A[m,k] * B[n,k]^T + beta * C
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             double beta = 1.0) noexcept;

} // namespace acuity::linalg
