// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_SRC_GEMM_HPP_
#define VQSE_SRC_GEMM_HPP_

#include <cstdint>

#ifdef VQSE_WITH_CBLAS
#include <cblas.h>
#endif

namespace vqse::detail {

// Row-major C(M,N) = alpha * op(A) * op(B) + beta * C.
// A is (M,K) when !ta else stored (K,M); B is (K,N) when !tb else (N,K).
inline void gemm(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k,
                 double alpha, const double* a, const double* b, double beta, double* c) {
#ifdef VQSE_WITH_CBLAS
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(ta ? m : k), b, static_cast<int>(tb ? k : n), beta, c,
              static_cast<int>(n));
#else
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) {
        double av = ta ? a[p * m + i] : a[i * k + p];
        double bv = tb ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = alpha * acc + beta * c[i * n + j];
    }
#endif
}

}  // namespace vqse::detail

#endif  // VQSE_SRC_GEMM_HPP_
