#include "indistill/gemm.hpp"

#include <algorithm>

namespace indistill {

namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 32;

// Full 4 x 32 tile: accumulators stay in registers across the k loop.
template <typename Real>
inline void tile_full(std::size_t k, const Real* a, std::size_t lda, const Real* b,
                      std::size_t ldb, Real* c, std::size_t ldc) {
  Real acc[kRowBlock][kColBlock] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const Real* brow = b + p * ldb;
    for (std::size_t r = 0; r < kRowBlock; ++r) {
      const Real av = a[r * lda + p];
      for (std::size_t j = 0; j < kColBlock; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < kRowBlock; ++r) {
    for (std::size_t j = 0; j < kColBlock; ++j) c[r * ldc + j] += acc[r][j];
  }
}

template <typename Real>
inline void tile_edge(std::size_t rows, std::size_t cols, std::size_t k, const Real* a,
                      std::size_t lda, const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  Real acc[kRowBlock][kColBlock] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const Real* brow = b + p * ldb;
    for (std::size_t r = 0; r < rows; ++r) {
      const Real av = a[r * lda + p];
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += acc[r][j];
  }
}

}  // namespace

template <typename Real>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const Real* a, std::size_t lda,
                     const Real* b, std::size_t ldb, Real* c, std::size_t ldc) {
  for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
    const std::size_t rows = std::min(kRowBlock, m - i0);
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
      const std::size_t cols = std::min(kColBlock, n - j0);
      const Real* at = a + i0 * lda;
      const Real* bt = b + j0;
      Real* ct = c + i0 * ldc + j0;
      if (rows == kRowBlock && cols == kColBlock) {
        tile_full(k, at, lda, bt, ldb, ct, ldc);
      } else {
        tile_edge(rows, cols, k, at, lda, bt, ldb, ct, ldc);
      }
    }
  }
}

template <typename Real>
void transpose(std::size_t rows, std::size_t cols, const Real* src, Real* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    const std::size_t i1 = std::min(rows, i0 + kBlock);
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
      }
    }
  }
}

template void gemm_accumulate<float>(std::size_t, std::size_t, std::size_t, const float*,
                                     std::size_t, const float*, std::size_t, float*, std::size_t);
template void gemm_accumulate<double>(std::size_t, std::size_t, std::size_t, const double*,
                                      std::size_t, const double*, std::size_t, double*,
                                      std::size_t);
template void transpose<float>(std::size_t, std::size_t, const float*, float*);
template void transpose<double>(std::size_t, std::size_t, const double*, double*);

}  // namespace indistill
