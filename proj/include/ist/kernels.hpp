#pragma once

// Low-level array kernels backing the tensor engine. Every kernel has a
// scalar reference implementation and, on x86-64 with AVX2+FMA, a vector
// variant. The active backend is chosen once at startup from cpuid and can
// be overridden (tests compare the two for equivalence).

#include <cstddef>
#include <string>

namespace ist::kernels {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
void set_backend(Backend b);          // Scalar always accepted; Avx2 only if supported
bool avx2_supported();
std::string backend_name(Backend b);

template <typename T>
struct Kernels {
  // y = a + b, y = a - b, y = a * b (elementwise, length n)
  void (*add)(const T* a, const T* b, T* y, std::size_t n);
  void (*sub)(const T* a, const T* b, T* y, std::size_t n);
  void (*mul)(const T* a, const T* b, T* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  // y = alpha * x
  void (*scale)(T alpha, const T* x, T* y, std::size_t n);
  T (*dot)(const T* a, const T* b, std::size_t n);
  T (*sum)(const T* x, std::size_t n);
  void (*relu)(const T* x, T* y, std::size_t n);
  // dx += dy where x > 0
  void (*relu_backward)(const T* x, const T* dy, T* dx, std::size_t n);
  // C (m x n) = A (m x k) * B (k x n), row-major, C overwritten
  void (*matmul)(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                 std::size_t n);
  // C (m x n) += A^T-style products used by matmul backward:
  //   dA += dC * B^T   (m x k) += (m x n)(n x k)^T
  //   dB += A^T * dC   (k x n) += (m x k)^T(m x n)
  void (*matmul_acc_a)(const T* dc, const T* b, T* da, std::size_t m,
                       std::size_t k, std::size_t n);
  void (*matmul_acc_b)(const T* a, const T* dc, T* db, std::size_t m,
                       std::size_t k, std::size_t n);
};

// Kernel table for the active backend.
template <typename T>
const Kernels<T>& active();

// Kernel table for a specific backend (equivalence tests).
template <typename T>
const Kernels<T>& table(Backend b);

}  // namespace ist::kernels
