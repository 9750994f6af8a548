//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

// Compiled with -mavx2 -mfma. Only raw pointers and intrinsics live here so no
// AVX-encoded inline function from a shared header can leak into scalar TUs.

#include <immintrin.h>

#include <cstddef>
#include <cstdlib>

namespace canondiff::kernels::avx2 {

namespace {

// malloc-backed so no library template is instantiated with AVX encoding.
struct Scratch {
  double *p = nullptr;
  std::size_t cap = 0;
  ~Scratch() { std::free(p); }
  double *get(std::size_t n) {
    if (n > cap) {
      std::free(p);
      p = static_cast<double *>(std::malloc(n * sizeof(double)));
      if (p == nullptr)
        std::abort();
      cap = n;
    }
    return p;
  }
};
thread_local Scratch tls_scratch;

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Shared body of gemm_nn / gemm_tn: C row i accumulates a(i,p) * B row p,
// where a(i,p) = a[p * a_row_stride + i * a_col_stride].
inline void gemm_rows(std::size_t m, std::size_t n, std::size_t k,
                      const double *a, std::size_t a_i_stride,
                      std::size_t a_p_stride, const double *b, double *c,
                      bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double *crow = c + i * n;
    const double *abase = a + i * a_i_stride;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d c0, c1, c2, c3;
      if (accumulate) {
        c0 = _mm256_loadu_pd(crow + j);
        c1 = _mm256_loadu_pd(crow + j + 4);
        c2 = _mm256_loadu_pd(crow + j + 8);
        c3 = _mm256_loadu_pd(crow + j + 12);
      } else {
        c0 = c1 = c2 = c3 = _mm256_setzero_pd();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_broadcast_sd(abase + p * a_p_stride);
        const double *brow = b + p * n + j;
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), c0);
        c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), c1);
        c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 8), c2);
        c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 12), c3);
      }
      _mm256_storeu_pd(crow + j, c0);
      _mm256_storeu_pd(crow + j + 4, c1);
      _mm256_storeu_pd(crow + j + 8, c2);
      _mm256_storeu_pd(crow + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_broadcast_sd(abase + p * a_p_stride);
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * n + j), c0);
      }
      _mm256_storeu_pd(crow + j, c0);
    }
    for (; j < n; ++j) {
      double s = accumulate ? crow[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p)
        s += abase[p * a_p_stride] * b[p * n + j];
      crow[j] = s;
    }
  }
}

}  // namespace

double dot(std::size_t n, const double *a, const double *b) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i)
    s += a[i] * b[i];
  return s;
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double *a,
             const double *b, double *c, bool accumulate) {
  gemm_rows(m, n, k, a, k, 1, b, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double *a,
             const double *b, double *c, bool accumulate) {
  gemm_rows(m, n, k, a, 1, m, b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double *a,
             const double *b, double *c, bool accumulate) {
  // Transpose B once so rows stream through the broadcast-FMA body.
  double *bt = tls_scratch.get(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p)
      bt[p * n + j] = b[j * k + p];
  gemm_rows(m, n, k, a, k, 1, bt, c, accumulate);
}

void axpy(std::size_t n, double alpha, const double *x, double *y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i)
    y[i] += alpha * x[i];
}

void add(std::size_t n, const double *a, const double *b, double *out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i)
    out[i] = a[i] + b[i];
}

void sub(std::size_t n, const double *a, const double *b, double *out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i)
    out[i] = a[i] - b[i];
}

void mul(std::size_t n, const double *a, const double *b, double *out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i)
    out[i] = a[i] * b[i];
}

void fma_acc(std::size_t n, const double *a, const double *b, double *y) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i)
    y[i] += a[i] * b[i];
}

}  // namespace canondiff::kernels::avx2
