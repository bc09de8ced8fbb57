#include "acuity/linalg.hpp"

#include <cblas.h>

namespace acuity::linalg {

namespace {

// The BLAS runs single-threaded: a fixed kernel schedule keeps results
// bit-identical from run to run, and job-level parallelism is ours to manage.
[[maybe_unused]] const bool kSingleThreaded = [] {
    openblas_set_num_threads(1);
    return true;
}();

blasint as_blas(std::size_t v) noexcept {
    return static_cast<blasint>(v);
}

} // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             double beta) noexcept {
    if (m == 0 || n == 0) return;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, as_blas(m), as_blas(n), as_blas(k), 1.0, a,
                as_blas(k), b, as_blas(n), beta, c, as_blas(n));
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             double beta) noexcept {
    if (m == 0 || n == 0) return;
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, as_blas(m), as_blas(n), as_blas(k), 1.0, a,
                as_blas(m), b, as_blas(n), beta, c, as_blas(n));
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             double beta) noexcept {
    if (m == 0 || n == 0) return;
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, as_blas(m), as_blas(n), as_blas(k), 1.0, a,
                as_blas(k), b, as_blas(k), beta, c, as_blas(n));
}

} // namespace acuity::linalg
