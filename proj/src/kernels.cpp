#include "flap/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace flap::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_acc_scalar(const double* W, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_scalar(W + r * cols, x, cols);
}

void gemv_t_acc_scalar(const double* W, std::size_t rows, std::size_t cols, const double* y, double* x) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(y[r], W + r * cols, x, cols);
}

void ger_acc_scalar(std::size_t rows, std::size_t cols, const double* y, const double* x, double* G) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(y[r], x, G + r * cols, cols);
}

const KernelTable kScalar{dot_scalar, axpy_scalar, gemv_acc_scalar, gemv_t_acc_scalar, ger_acc_scalar};

}  // namespace

// Defined in kernels_avx2.cpp; returns nullptr when compiled without AVX2.
const KernelTable* avx2_table_impl();

const KernelTable& scalar_table() { return kScalar; }
const KernelTable* avx2_table() { return avx2_table_impl(); }

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Backend detect() {
  if (const char* env = std::getenv("FLAP_SIMD"); env != nullptr && std::strcmp(env, "scalar") == 0) {
    return Backend::Scalar;
  }
  return (avx2_table() != nullptr && cpu_has_avx2()) ? Backend::Avx2 : Backend::Scalar;
}

Backend g_backend = detect();

}  // namespace

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
  if (b == Backend::Avx2 && (avx2_table() == nullptr || !cpu_has_avx2())) {
    throw std::invalid_argument("AVX2 kernels are not available on this machine");
  }
  g_backend = b;
}

std::string_view backend_name(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

const KernelTable& active() {
  if (g_backend == Backend::Avx2) return *avx2_table();
  return kScalar;
}

}  // namespace flap::kernels
