#include "daenet/kernels.hpp"

#include <cstring>

namespace daenet::kernels {
namespace {

void s_add(const double* a, const double* b, double* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void s_scale(const double* a, double s, double* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * s;
}

void s_axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double s_dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double s_sum(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void s_gemv_n(const double* A, const double* x, double* y, std::size_t m,
              std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) y[i] = s_dot(A + i * k, x, k);
}

void s_gemv_t(const double* A, const double* x, double* y, std::size_t m,
              std::size_t k) {
  std::memset(y, 0, k * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) s_axpy(x[i], A + i * k, y, k);
}

void s_ger(double alpha, const double* x, const double* y, double* A,
           std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) s_axpy(alpha * x[i], y, A + i * k, k);
}

void s_matmul_nn(const double* A, const double* B, double* C, std::size_t m,
                 std::size_t k, std::size_t n) {
  std::memset(C, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) s_axpy(A[i * k + p], B + p * n, C + i * n, n);
}

void s_matmul_nt(const double* A, const double* B, double* C, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C[i * n + j] = s_dot(A + i * k, B + j * k, k);
}

void s_matmul_tn(const double* A, const double* B, double* C, std::size_t m,
                 std::size_t k, std::size_t n) {
  std::memset(C, 0, m * n * sizeof(double));
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) s_axpy(A[p * m + i], B + p * n, C + i * n, n);
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops = {s_add,    s_sub,    s_mul,       s_scale,
                          s_axpy,   s_dot,    s_sum,       s_gemv_n,
                          s_gemv_t, s_ger,    s_matmul_nn, s_matmul_nt,
                          s_matmul_tn, "scalar"};
  return ops;
}

}  // namespace daenet::kernels
