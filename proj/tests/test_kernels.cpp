#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "bgn/kernels.hpp"
#include "bgn/rng.hpp"

using namespace bgn;

namespace {

std::vector<double> random_buf(std::size_t n, Rng& rng, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

void naive_gemm_nn(std::vector<double>& dst, const std::vector<double>& a,
                   const std::vector<double>& b, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t kk = 0; kk < k; ++kk)
        dst[i * n + j] += a[i * k + kk] * b[kk * n + j];
}

}  // namespace

TEST_CASE("scalar kernel semantics") {
  const auto& k = kernels::scalar();
  std::vector<double> a = {1.0, -2.0, 3.0, 0.0, -0.5};
  std::vector<double> b = {2.0, 2.0, -1.0, 4.0, 0.5};
  std::vector<double> dst(5, 0.0);

  k.add(dst.data(), a.data(), b.data(), 5);
  CHECK(dst == std::vector<double>{3.0, 0.0, 2.0, 4.0, 0.0});

  k.mul(dst.data(), a.data(), b.data(), 5);
  CHECK(dst == std::vector<double>{2.0, -4.0, -3.0, 0.0, -0.25});

  k.scale(dst.data(), a.data(), -2.0, 5);
  CHECK(dst == std::vector<double>{-2.0, 4.0, -6.0, 0.0, 1.0});

  k.relu(dst.data(), a.data(), 5);
  CHECK(dst == std::vector<double>{1.0, 0.0, 3.0, 0.0, 0.0});

  std::fill(dst.begin(), dst.end(), 1.0);
  k.axpy(dst.data(), a.data(), 2.0, 5);
  CHECK(dst == std::vector<double>{3.0, -3.0, 7.0, 1.0, 0.0});

  CHECK(k.dot(a.data(), b.data(), 5) == doctest::Approx(-9.25));
  CHECK(k.sum(a.data(), 5) == doctest::Approx(1.5));

  std::fill(dst.begin(), dst.end(), 0.0);
  k.relu_bwd(dst.data(), a.data(), b.data(), 5);
  CHECK(dst == std::vector<double>{2.0, 0.0, -1.0, 0.0, 0.0});
}

TEST_CASE("gemm variants match the naive triple loop") {
  Rng rng(7);
  const auto& k = kernels::scalar();
  for (auto [m, q, n] : {std::tuple{3, 4, 5}, {1, 1, 1}, {7, 2, 9}}) {
    auto a = random_buf(m * q, rng);
    auto b = random_buf(q * n, rng);
    std::vector<double> want(m * n, 0.0), got(m * n, 0.0);
    naive_gemm_nn(want, a, b, m, q, n);
    k.gemm_nn_acc(got.data(), a.data(), b.data(), m, q, n);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    // nt: A[m x q] * B[n x q]^T equals nn with B transposed.
    auto bt = random_buf(n * q, rng);
    std::vector<double> bt_t(q * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < q; ++j) bt_t[j * n + i] = bt[i * q + j];
    std::fill(want.begin(), want.end(), 0.0);
    std::fill(got.begin(), got.end(), 0.0);
    naive_gemm_nn(want, a, bt_t, m, q, n);
    k.gemm_nt_acc(got.data(), a.data(), bt.data(), m, q, n);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    // tn: A[q x m]^T * B[q x n].
    auto at = random_buf(q * m, rng);
    std::vector<double> at_t(m * q);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < m; ++j) at_t[j * q + i] = at[i * m + j];
    std::fill(want.begin(), want.end(), 0.0);
    std::fill(got.begin(), got.end(), 0.0);
    naive_gemm_nn(want, at_t, b, m, q, n);
    k.gemm_tn_acc(got.data(), at.data(), b.data(), m, q, n);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const kernels::Ops* avx2 = kernels::avx2_or_null();
  if (!avx2 || !kernels::cpu_has_avx2()) {
    MESSAGE("avx2 unavailable, skipping equivalence checks");
    return;
  }
  const auto& ref = kernels::scalar();
  Rng rng(99);
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 17u, 33u, 64u, 101u}) {
    auto a = random_buf(n, rng);
    auto b = random_buf(n, rng);
    std::vector<double> r(n), v(n);

    // Elementwise ops are lane-for-lane identical.
    ref.add(r.data(), a.data(), b.data(), n);
    avx2->add(v.data(), a.data(), b.data(), n);
    CHECK(r == v);
    ref.mul(r.data(), a.data(), b.data(), n);
    avx2->mul(v.data(), a.data(), b.data(), n);
    CHECK(r == v);
    ref.scale(r.data(), a.data(), 1.7, n);
    avx2->scale(v.data(), a.data(), 1.7, n);
    CHECK(r == v);
    ref.relu(r.data(), a.data(), n);
    avx2->relu(v.data(), a.data(), n);
    CHECK(r == v);

    // FMA and reduction order shift the last ulps.
    std::vector<double> r2(n, 0.5), v2(n, 0.5);
    ref.axpy(r2.data(), a.data(), -0.3, n);
    avx2->axpy(v2.data(), a.data(), -0.3, n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(v2[i] == doctest::Approx(r2[i]).epsilon(1e-13));

    std::fill(r2.begin(), r2.end(), 0.25);
    std::fill(v2.begin(), v2.end(), 0.25);
    ref.mul_acc(r2.data(), a.data(), b.data(), n);
    avx2->mul_acc(v2.data(), a.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(v2[i] == doctest::Approx(r2[i]).epsilon(1e-13));

    std::fill(r2.begin(), r2.end(), -1.0);
    std::fill(v2.begin(), v2.end(), -1.0);
    ref.relu_bwd(r2.data(), a.data(), b.data(), n);
    avx2->relu_bwd(v2.data(), a.data(), b.data(), n);
    CHECK(r2 == v2);

    CHECK(avx2->dot(a.data(), b.data(), n) ==
          doctest::Approx(ref.dot(a.data(), b.data(), n)).epsilon(1e-12));
    CHECK(avx2->sum(a.data(), n) ==
          doctest::Approx(ref.sum(a.data(), n)).epsilon(1e-12));
  }

  for (auto [m, q, n] : {std::tuple{5, 8, 13}, {3, 33, 2}, {16, 16, 16}}) {
    auto a = random_buf(static_cast<std::size_t>(m) * q, rng);
    auto b = random_buf(static_cast<std::size_t>(q) * n, rng);
    std::vector<double> r(static_cast<std::size_t>(m) * n, 0.0), v(r);
    ref.gemm_nn_acc(r.data(), a.data(), b.data(), m, q, n);
    avx2->gemm_nn_acc(v.data(), a.data(), b.data(), m, q, n);
    for (std::size_t i = 0; i < r.size(); ++i)
      CHECK(v[i] == doctest::Approx(r[i]).epsilon(1e-12));

    auto bt = random_buf(static_cast<std::size_t>(n) * q, rng);
    std::fill(r.begin(), r.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    ref.gemm_nt_acc(r.data(), a.data(), bt.data(), m, q, n);
    avx2->gemm_nt_acc(v.data(), a.data(), bt.data(), m, q, n);
    for (std::size_t i = 0; i < r.size(); ++i)
      CHECK(v[i] == doctest::Approx(r[i]).epsilon(1e-12));

    auto at = random_buf(static_cast<std::size_t>(q) * m, rng);
    std::fill(r.begin(), r.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    ref.gemm_tn_acc(r.data(), at.data(), b.data(), m, q, n);
    avx2->gemm_tn_acc(v.data(), at.data(), b.data(), m, q, n);
    for (std::size_t i = 0; i < r.size(); ++i)
      CHECK(v[i] == doctest::Approx(r[i]).epsilon(1e-12));
  }
}

TEST_CASE("active table is one of the known backends") {
  const auto& k = kernels::active();
  const bool is_scalar = &k == &kernels::scalar();
  const bool is_avx2 = kernels::avx2_or_null() && &k == kernels::avx2_or_null();
  CHECK((is_scalar || is_avx2));
  if (kernels::cpu_has_avx2() && kernels::avx2_or_null() &&
      !std::getenv("BGN_KERNELS")) {
    CHECK(std::string(k.name) == "avx2");
  }
}
