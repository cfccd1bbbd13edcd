#pragma once

#include <cstddef>

namespace indistill {

// C[m x n] += A[m x k] * B[k x n], all row-major with explicit leading
// dimensions. Every C element accumulates its k products in ascending k order,
// so results are bitwise reproducible for a given build.
template <typename Real>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
                     const Real* b, std::size_t ldb, Real* c, std::size_t ldc);

// dst[cols x rows] = transpose(src[rows x cols]).
template <typename Real>
void transpose(std::size_t rows, std::size_t cols, const Real* src, Real* dst);

}  // namespace indistill
