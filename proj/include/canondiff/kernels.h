//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef CANONDIFF_KERNELS_H_
#define CANONDIFF_KERNELS_H_

#include <cstddef>
#include <string_view>

// Dense 64-bit inner loops used by the autodiff engine. Every kernel has a
// scalar reference implementation and, where the CPU supports it, an AVX2+FMA
// variant. The active table is chosen once per process.
//
// Row results of the gemm kernels never depend on the number of rows, so a
// batched evaluation reproduces a per-sample one bit-for-bit.

namespace canondiff::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;

  // C[m,n] (+)= A[m,k] * B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double *a,
                  const double *b, double *c, bool accumulate);
  // C[m,n] (+)= A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double *a,
                  const double *b, double *c, bool accumulate);
  // C[m,n] (+)= A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double *a,
                  const double *b, double *c, bool accumulate);

  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double *x, double *y);
  // out = a + b, a - b, a * b
  void (*add)(std::size_t n, const double *a, const double *b, double *out);
  void (*sub)(std::size_t n, const double *a, const double *b, double *out);
  void (*mul)(std::size_t n, const double *a, const double *b, double *out);
  // y += a * b
  void (*fma_acc)(std::size_t n, const double *a, const double *b, double *y);
  double (*dot)(std::size_t n, const double *a, const double *b);
};

const KernelTable &scalar_kernels();

// Returns nullptr when the binary was built without AVX2 support or the CPU
// lacks AVX2/FMA.
const KernelTable *avx2_kernels();

// Selected once: AVX2 when available unless CANONDIFF_SIMD=scalar is set.
const KernelTable &active();

std::string_view isa_name(Isa isa);

}  // namespace canondiff::kernels

#endif  // CANONDIFF_KERNELS_H_
