#include "ist/kernels.hpp"

#include <cstring>

#if defined(__x86_64__) || defined(_M_X64)
#define IST_X86 1
#include <immintrin.h>
#else
#define IST_X86 0
#endif

namespace ist::kernels {

namespace scalar {

template <typename T>
void add(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T sum(const T* x, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
void relu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > T(0)) dx[i] += dy[i];
}

// i-k-j loop order keeps the inner loop contiguous over B and C rows.
template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
            std::size_t n) {
  std::memset(c, 0, m * n * sizeof(T));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA += dC * B^T
template <typename T>
void matmul_acc_a(const T* dc, const T* b, T* da, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      T acc = 0;
      const T* dcrow = dc + i * n;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
      da[i * k + p] += acc;
    }
}

// dB += A^T * dC
template <typename T>
void matmul_acc_b(const T* a, const T* dc, T* db, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* dcrow = dc + i * n;
      T* dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
}

}  // namespace scalar

#if IST_X86

namespace avx2 {

// float: 8 lanes; double: 4 lanes.

inline __m256 load8(const float* p) { return _mm256_loadu_ps(p); }
inline __m256d load4(const double* p) { return _mm256_loadu_pd(p); }

void add(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(load8(a + i), load8(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}
void add(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(load4(a + i), load4(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_sub_ps(load8(a + i), load8(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}
void sub(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_sub_pd(load4(a + i), load4(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(load8(a + i), load8(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}
void mul(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(load4(a + i), load4(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, load8(x + i), load8(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, load4(x + i), load4(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(va, load8(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}
void scale(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, load4(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}
inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

float dot(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(load8(a + i), load8(b + i), acc);
  float r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}
double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(load4(a + i), load4(b + i), acc);
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

float sum(const float* x, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, load8(x + i));
  float r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}
double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, load4(x + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

void relu(const float* x, float* y, std::size_t n) {
  const __m256 z = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_max_ps(z, load8(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.f ? x[i] : 0.f;
}
void relu(const double* x, double* y, std::size_t n) {
  const __m256d z = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(z, load4(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const float* x, const float* dy, float* dx, std::size_t n) {
  const __m256 z = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(load8(x + i), z, _CMP_GT_OQ);
    __m256 g = _mm256_and_ps(mask, load8(dy + i));
    _mm256_storeu_ps(dx + i, _mm256_add_ps(load8(dx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.f) dx[i] += dy[i];
}
void relu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n) {
  const __m256d z = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(load4(x + i), z, _CMP_GT_OQ);
    __m256d g = _mm256_and_pd(mask, load4(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(load4(dx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
            std::size_t n) {
  std::memset(c, 0, m * n * sizeof(T));
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      axpy(a[i * k + p], brow, crow, n);
    }
  }
}

template <typename T>
void matmul_acc_a(const T* dc, const T* b, T* da, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      da[i * k + p] += dot(dc + i * n, b + p * n, n);
}

template <typename T>
void matmul_acc_b(const T* a, const T* dc, T* db, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* dcrow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p)
      axpy(a[i * k + p], dcrow, db + p * n, n);
  }
}

}  // namespace avx2

#endif  // IST_X86

namespace {

template <typename T>
Kernels<T> make_scalar_table() {
  Kernels<T> t;
  t.add = scalar::add<T>;
  t.sub = scalar::sub<T>;
  t.mul = scalar::mul<T>;
  t.axpy = scalar::axpy<T>;
  t.scale = scalar::scale<T>;
  t.dot = scalar::dot<T>;
  t.sum = scalar::sum<T>;
  t.relu = scalar::relu<T>;
  t.relu_backward = scalar::relu_backward<T>;
  t.matmul = scalar::matmul<T>;
  t.matmul_acc_a = scalar::matmul_acc_a<T>;
  t.matmul_acc_b = scalar::matmul_acc_b<T>;
  return t;
}

#if IST_X86
template <typename T>
Kernels<T> make_avx2_table() {
  Kernels<T> t;
  t.add = static_cast<void (*)(const T*, const T*, T*, std::size_t)>(avx2::add);
  t.sub = static_cast<void (*)(const T*, const T*, T*, std::size_t)>(avx2::sub);
  t.mul = static_cast<void (*)(const T*, const T*, T*, std::size_t)>(avx2::mul);
  t.axpy = static_cast<void (*)(T, const T*, T*, std::size_t)>(avx2::axpy);
  t.scale = static_cast<void (*)(T, const T*, T*, std::size_t)>(avx2::scale);
  t.dot = static_cast<T (*)(const T*, const T*, std::size_t)>(avx2::dot);
  t.sum = static_cast<T (*)(const T*, std::size_t)>(avx2::sum);
  t.relu = static_cast<void (*)(const T*, T*, std::size_t)>(avx2::relu);
  t.relu_backward =
      static_cast<void (*)(const T*, const T*, T*, std::size_t)>(
          avx2::relu_backward);
  t.matmul = avx2::matmul<T>;
  t.matmul_acc_a = avx2::matmul_acc_a<T>;
  t.matmul_acc_b = avx2::matmul_acc_b<T>;
  return t;
}
#endif

Backend g_backend = [] {
#if IST_X86
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Backend::Avx2;
#endif
  return Backend::Scalar;
}();

}  // namespace

bool avx2_supported() {
#if IST_X86
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported()) return;
  g_backend = b;
}

std::string backend_name(Backend b) {
  return b == Backend::Avx2 ? "avx2" : "scalar";
}

template <typename T>
const Kernels<T>& table(Backend b) {
  static const Kernels<T> s = make_scalar_table<T>();
#if IST_X86
  static const Kernels<T> v =
      avx2_supported() ? make_avx2_table<T>() : make_scalar_table<T>();
  if (b == Backend::Avx2) return v;
#else
  (void)b;
#endif
  return s;
}

template <typename T>
const Kernels<T>& active() {
  return table<T>(g_backend);
}

template const Kernels<float>& table<float>(Backend);
template const Kernels<double>& table<double>(Backend);
template const Kernels<float>& active<float>();
template const Kernels<double>& active<double>();

}  // namespace ist::kernels
