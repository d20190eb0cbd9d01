#include "bgn/kernels.hpp"

namespace bgn::kernels {
namespace {

void add_s(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void mul_s(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void mul_acc_s(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}

void scale_s(double* dst, const double* a, double s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * s;
}

void axpy_s(double* dst, const double* a, double s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += a[i] * s;
}

void acc_s(double* dst, const double* a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += a[i];
}

void relu_s(double* dst, const double* a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_bwd_s(double* dst, const double* x, const double* g, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) dst[i] += g[i];
  }
}

double dot_s(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_s(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void gemm_nn_s(double* dst, const double* a, const double* b, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* drow = dst + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) drow[j] += av * brow[j];
    }
  }
}

void gemm_nt_s(double* dst, const double* a, const double* b, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      dst[i * n + j] += dot_s(arow, b + j * k, k);
    }
  }
}

void gemm_tn_s(double* dst, const double* a, const double* b, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[kk * m + i];
      if (av == 0.0) continue;
      double* drow = dst + i * n;
      for (std::size_t j = 0; j < n; ++j) drow[j] += av * brow[j];
    }
  }
}

}  // namespace

const Ops& scalar() {
  static const Ops table = {
      .name = "scalar",
      .add = add_s,
      .mul = mul_s,
      .mul_acc = mul_acc_s,
      .scale = scale_s,
      .axpy = axpy_s,
      .acc = acc_s,
      .relu = relu_s,
      .relu_bwd = relu_bwd_s,
      .dot = dot_s,
      .sum = sum_s,
      .gemm_nn_acc = gemm_nn_s,
      .gemm_nt_acc = gemm_nt_s,
      .gemm_tn_acc = gemm_tn_s,
  };
  return table;
}

}  // namespace bgn::kernels
