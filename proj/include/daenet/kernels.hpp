#pragma once

#include <cstddef>

namespace daenet::kernels {

// Dense row-major f64 kernels over contiguous buffers. Two implementations
// share this table: a portable scalar reference and an AVX2/FMA variant.
// The active table is selected once at startup from CPU capabilities;
// DAENET_KERNELS=scalar|avx2 overrides the choice.
//
// Matrix extents are explicit; callers guarantee conformance and
// non-aliasing of destination buffers.
struct Ops {
  void (*add)(const double* a, const double* b, double* dst, std::size_t n);
  void (*sub)(const double* a, const double* b, double* dst, std::size_t n);
  void (*mul)(const double* a, const double* b, double* dst, std::size_t n);
  void (*scale)(const double* a, double s, double* dst, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  // y = A x            A: m x k, x: k, y: m
  void (*gemv_n)(const double* A, const double* x, double* y, std::size_t m,
                 std::size_t k);
  // y = A^T x          A: m x k, x: m, y: k
  void (*gemv_t)(const double* A, const double* x, double* y, std::size_t m,
                 std::size_t k);
  // A += alpha x y^T   A: m x k, x: m, y: k
  void (*ger)(double alpha, const double* x, const double* y, double* A,
              std::size_t m, std::size_t k);
  // C = A B            A: m x k, B: k x n, C: m x n
  void (*matmul_nn)(const double* A, const double* B, double* C, std::size_t m,
                    std::size_t k, std::size_t n);
  // C = A B^T          A: m x k, B: n x k, C: m x n
  void (*matmul_nt)(const double* A, const double* B, double* C, std::size_t m,
                    std::size_t k, std::size_t n);
  // C = A^T B          A: k x m, B: k x n, C: m x n
  void (*matmul_tn)(const double* A, const double* B, double* C, std::size_t m,
                    std::size_t k, std::size_t n);
  const char* name;
};

const Ops& scalar_ops();
// Falls back to the scalar table when the binary was built without
// AVX2/FMA support.
const Ops& avx2_ops();
// True when the AVX2 table is both compiled in and usable on this CPU.
bool avx2_available();
// Runtime-selected table.
const Ops& active();

}  // namespace daenet::kernels
