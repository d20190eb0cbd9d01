// AVX2/FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma on x86-64 (see src/CMakeLists.txt); callers must check
// cpu_has_avx2() before using the table, which active() does.

#include "bgn/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace bgn::kernels {
namespace {

void add_v(double* dst, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void mul_v(double* dst, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void mul_acc_v(double* dst, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_loadu_pd(dst + i);
    d = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), d);
    _mm256_storeu_pd(dst + i, d);
  }
  for (; i < n; ++i) dst[i] += a[i] * b[i];
}

void scale_v(double* dst, const double* a, double s, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  }
  for (; i < n; ++i) dst[i] = a[i] * s;
}

void axpy_v(double* dst, const double* a, double s, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_loadu_pd(dst + i);
    d = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), vs, d);
    _mm256_storeu_pd(dst + i, d);
  }
  for (; i < n; ++i) dst[i] += a[i] * s;
}

void acc_v(double* dst, const double* a, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i),
                                            _mm256_loadu_pd(a + i)));
  }
  for (; i < n; ++i) dst[i] += a[i];
}

void relu_v(double* dst, const double* a, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
  }
  for (; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_bwd_v(double* dst, const double* x, const double* g, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d gated = _mm256_and_pd(mask, _mm256_loadu_pd(g + i));
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), gated));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) dst[i] += g[i];
  }
}

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

double dot_v(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double r = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double sum_v(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

void gemm_nn_v(double* dst, const double* a, const double* b, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* drow = dst + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a[i * k + kk];
      if (av == 0.0) continue;
      axpy_v(drow, b + kk * n, av, n);
    }
  }
}

void gemm_nt_v(double* dst, const double* a, const double* b, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      dst[i * n + j] += dot_v(arow, b + j * k, k);
    }
  }
}

void gemm_tn_v(double* dst, const double* a, const double* b, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[kk * m + i];
      if (av == 0.0) continue;
      axpy_v(dst + i * n, brow, av, n);
    }
  }
}

}  // namespace

const Ops* avx2_or_null() {
  static const Ops table = {
      .name = "avx2",
      .add = add_v,
      .mul = mul_v,
      .mul_acc = mul_acc_v,
      .scale = scale_v,
      .axpy = axpy_v,
      .acc = acc_v,
      .relu = relu_v,
      .relu_bwd = relu_bwd_v,
      .dot = dot_v,
      .sum = sum_v,
      .gemm_nn_acc = gemm_nn_v,
      .gemm_nt_acc = gemm_nt_v,
      .gemm_tn_acc = gemm_tn_v,
  };
  return &table;
}

}  // namespace bgn::kernels

#else

namespace bgn::kernels {
const Ops* avx2_or_null() { return nullptr; }
}  // namespace bgn::kernels

#endif
