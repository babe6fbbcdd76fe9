#pragma once

// Dense float kernels used by the patch scorer. Every kernel has a portable
// scalar reference in `scalar::` and, on x86-64, an AVX2/FMA variant in
// `avx2::`. Callers go through `active()`, which picks the widest variant
// the running CPU supports.

#include <cstddef>
#include <string_view>

namespace patchmil::simd {

// C[M x N] (+)= A[M x K] * B[K x N], all row-major with explicit leading
// dimensions. When `accumulate` is false C is overwritten.
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k,
                        const float* a, std::size_t lda,
                        const float* b, std::size_t ldb,
                        float* c, std::size_t ldc, bool accumulate);
using DotFn = float (*)(const float* a, const float* b, std::size_t n);
// y += alpha * x
using AxpyFn = void (*)(float alpha, const float* x, float* y, std::size_t n);
using ReluFn = void (*)(float* x, std::size_t n);
using MaxFn = float (*)(const float* x, std::size_t n);

struct KernelTable {
  std::string_view name;
  GemmFn gemm;
  DotFn dot;
  AxpyFn axpy;
  ReluFn relu;
  MaxFn max;
};

namespace scalar {
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate);
float dot(const float* a, const float* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void relu(float* x, std::size_t n);
float max(const float* x, std::size_t n);
const KernelTable& table();
}  // namespace scalar

#if defined(PATCHMIL_HAVE_AVX2)
namespace avx2 {
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate);
float dot(const float* a, const float* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void relu(float* x, std::size_t n);
float max(const float* x, std::size_t n);
const KernelTable& table();
}  // namespace avx2
#endif

/// True when the AVX2 variants were compiled in and the CPU reports avx2+fma.
bool avx2_available();

/// Kernel table selected once per process. Setting PATCHMIL_SIMD=scalar in
/// the environment forces the reference kernels.
const KernelTable& active();

}  // namespace patchmil::simd
