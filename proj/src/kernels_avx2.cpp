// AVX2/FMA variants of the dense kernels. This translation unit is compiled
// with -mavx2 -mfma; everything else in the project stays at the baseline
// ISA, so these symbols must only be reached through the runtime dispatch
// in kernels_dispatch.cpp.

#include "daenet/kernels.hpp"

#include <cstring>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace daenet::kernels {
namespace {

void v_add(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void v_sub(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void v_mul(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void v_scale(const double* a, double s, double* dst, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) dst[i] = a[i] * s;
}

void v_axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double v_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double v_sum(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

void v_gemv_n(const double* A, const double* x, double* y, std::size_t m,
              std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) y[i] = v_dot(A + i * k, x, k);
}

void v_gemv_t(const double* A, const double* x, double* y, std::size_t m,
              std::size_t k) {
  std::memset(y, 0, k * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) v_axpy(x[i], A + i * k, y, k);
}

void v_ger(double alpha, const double* x, const double* y, double* A,
           std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) v_axpy(alpha * x[i], y, A + i * k, k);
}

void v_matmul_nn(const double* A, const double* B, double* C, std::size_t m,
                 std::size_t k, std::size_t n) {
  std::memset(C, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) v_axpy(A[i * k + p], B + p * n, C + i * n, n);
}

void v_matmul_nt(const double* A, const double* B, double* C, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C[i * n + j] = v_dot(A + i * k, B + j * k, k);
}

void v_matmul_tn(const double* A, const double* B, double* C, std::size_t m,
                 std::size_t k, std::size_t n) {
  std::memset(C, 0, m * n * sizeof(double));
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) v_axpy(A[p * m + i], B + p * n, C + i * n, n);
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops = {v_add,    v_sub,    v_mul,       v_scale,
                          v_axpy,   v_dot,    v_sum,       v_gemv_n,
                          v_gemv_t, v_ger,    v_matmul_nn, v_matmul_nt,
                          v_matmul_tn, "avx2"};
  return ops;
}

bool avx2_compiled() { return true; }

}  // namespace daenet::kernels

#else

namespace daenet::kernels {

const Ops& avx2_ops() { return scalar_ops(); }
bool avx2_compiled() { return false; }

}  // namespace daenet::kernels

#endif
