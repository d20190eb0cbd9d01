#pragma once

#include <cstddef>

// Dense inner loops behind the tensor library. Two implementations ship:
// a scalar reference and an AVX2/FMA variant; `active()` picks one at
// runtime from CPUID. The AVX2 results may differ from scalar in the last
// ulps for reductions (different summation order), which the equivalence
// tests account for.
namespace bgn::kernels {

struct Ops {
  const char* name;

  // dst = a + b / dst = a * b / dst += a * b, all length n
  void (*add)(double* dst, const double* a, const double* b, std::size_t n);
  void (*mul)(double* dst, const double* a, const double* b, std::size_t n);
  void (*mul_acc)(double* dst, const double* a, const double* b, std::size_t n);

  // dst = a * s / dst += a * s / dst += a
  void (*scale)(double* dst, const double* a, double s, std::size_t n);
  void (*axpy)(double* dst, const double* a, double s, std::size_t n);
  void (*acc)(double* dst, const double* a, std::size_t n);

  // dst = max(a, 0) / dst += (x > 0) ? g : 0
  void (*relu)(double* dst, const double* a, std::size_t n);
  void (*relu_bwd)(double* dst, const double* x, const double* g, std::size_t n);

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);

  // Row-major GEMM accumulators, dst is m x n, k is the contraction dim.
  //   nn: dst += A[m x k] * B[k x n]
  //   nt: dst += A[m x k] * B[n x k]^T
  //   tn: dst += A[k x m]^T * B[k x n]
  void (*gemm_nn_acc)(double* dst, const double* a, const double* b,
                      std::size_t m, std::size_t k, std::size_t n);
  void (*gemm_nt_acc)(double* dst, const double* a, const double* b,
                      std::size_t m, std::size_t k, std::size_t n);
  void (*gemm_tn_acc)(double* dst, const double* a, const double* b,
                      std::size_t m, std::size_t k, std::size_t n);
};

const Ops& scalar();

// Null when the binary was not built with AVX2 support.
const Ops* avx2_or_null();

bool cpu_has_avx2();

// Selected once per process: AVX2 when the CPU supports it, else scalar.
// Environment variable BGN_KERNELS={scalar|avx2} forces a backend; an
// unsupported request falls back to scalar.
const Ops& active();

}  // namespace bgn::kernels
