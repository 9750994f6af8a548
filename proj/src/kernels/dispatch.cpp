//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cstdlib>
#include <string_view>

#include "canondiff/kernels.h"

namespace canondiff::kernels {

#ifdef CANONDIFF_HAVE_AVX2
namespace avx2 {
void gemm_nn(std::size_t, std::size_t, std::size_t, const double *,
             const double *, double *, bool);
void gemm_tn(std::size_t, std::size_t, std::size_t, const double *,
             const double *, double *, bool);
void gemm_nt(std::size_t, std::size_t, std::size_t, const double *,
             const double *, double *, bool);
void axpy(std::size_t, double, const double *, double *);
void add(std::size_t, const double *, const double *, double *);
void sub(std::size_t, const double *, const double *, double *);
void mul(std::size_t, const double *, const double *, double *);
void fma_acc(std::size_t, const double *, const double *, double *);
double dot(std::size_t, const double *, const double *);
}  // namespace avx2
#endif

const KernelTable *avx2_kernels() {
#ifdef CANONDIFF_HAVE_AVX2
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  if (!supported)
    return nullptr;
  static const KernelTable table {
    Isa::kAvx2,   avx2::gemm_nn, avx2::gemm_tn, avx2::gemm_nt, avx2::axpy,
    avx2::add,    avx2::sub,     avx2::mul,     avx2::fma_acc, avx2::dot,
  };
  return &table;
#else
  return nullptr;
#endif
}

const KernelTable &active() {
  static const KernelTable &table = []() -> const KernelTable & {
    const char *env = std::getenv("CANONDIFF_SIMD");
    if (env != nullptr && std::string_view(env) == "scalar")
      return scalar_kernels();
    if (const KernelTable *t = avx2_kernels(); t != nullptr)
      return *t;
    return scalar_kernels();
  }();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
  case Isa::kScalar:
    return "scalar";
  case Isa::kAvx2:
    return "avx2";
  }
  return "unknown";
}

}  // namespace canondiff::kernels
