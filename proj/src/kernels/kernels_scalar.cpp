//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/kernels.h"

namespace canondiff::kernels {
namespace {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double *a,
             const double *b, double *c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double *crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j)
        crow[j] = 0.0;
    }
    const double *arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double *brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j)
        crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double *a,
             const double *b, double *c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double *crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j)
        crow[j] = 0.0;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double *brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j)
        crow[j] += av * brow[j];
    }
  }
}

double dot(std::size_t n, const double *a, const double *b) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    s += a[i] * b[i];
  return s;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double *a,
             const double *b, double *c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dot(k, a + i * k, b + j * k);
      c[i * n + j] = accumulate ? c[i * n + j] + v : v;
    }
  }
}

void axpy(std::size_t n, double alpha, const double *x, double *y) {
  for (std::size_t i = 0; i < n; ++i)
    y[i] += alpha * x[i];
}

void add(std::size_t n, const double *a, const double *b, double *out) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = a[i] + b[i];
}

void sub(std::size_t n, const double *a, const double *b, double *out) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = a[i] - b[i];
}

void mul(std::size_t n, const double *a, const double *b, double *out) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = a[i] * b[i];
}

void fma_acc(std::size_t n, const double *a, const double *b, double *y) {
  for (std::size_t i = 0; i < n; ++i)
    y[i] += a[i] * b[i];
}

}  // namespace

const KernelTable &scalar_kernels() {
  static const KernelTable table {
    Isa::kScalar, gemm_nn, gemm_tn, gemm_nt, axpy, add, sub, mul, fma_acc, dot,
  };
  return table;
}

}  // namespace canondiff::kernels
