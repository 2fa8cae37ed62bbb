#pragma once

// Dense double-precision inner loops used by the head model and the denoiser.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2/FMA
// variant. The active table is picked once at startup from CPUID and can be
// overridden with FLAP_SIMD=scalar or set_backend(). All variants are
// deterministic for a fixed backend; scalar and AVX2 agree to rounding
// (different summation order), which tests/test_kernels.cpp checks.

#include <cstddef>
#include <span>
#include <string_view>

namespace flap::kernels {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[r] += sum_c W[r*cols + c] * x[c]      (W row-major, rows x cols)
  void (*gemv_acc)(const double* W, std::size_t rows, std::size_t cols, const double* x, double* y);
  // x[c] += sum_r W[r*cols + c] * y[r]
  void (*gemv_t_acc)(const double* W, std::size_t rows, std::size_t cols, const double* y, double* x);
  // G[r*cols + c] += y[r] * x[c]
  void (*ger_acc)(std::size_t rows, std::size_t cols, const double* y, const double* x, double* G);
};

const KernelTable& scalar_table();
// Null when the binary was built without AVX2 support.
const KernelTable* avx2_table();

bool cpu_has_avx2();
Backend active_backend();
// Throws std::invalid_argument if the backend is unavailable on this CPU.
void set_backend(Backend b);
std::string_view backend_name(Backend b);

const KernelTable& active();

// Convenience wrappers over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void gemv_acc(std::span<const double> W, std::size_t rows, std::size_t cols,
                     std::span<const double> x, std::span<double> y) {
  active().gemv_acc(W.data(), rows, cols, x.data(), y.data());
}
inline void gemv_t_acc(std::span<const double> W, std::size_t rows, std::size_t cols,
                       std::span<const double> y, std::span<double> x) {
  active().gemv_t_acc(W.data(), rows, cols, y.data(), x.data());
}
inline void ger_acc(std::size_t rows, std::size_t cols, std::span<const double> y,
                    std::span<const double> x, std::span<double> G) {
  active().ger_acc(rows, cols, y.data(), x.data(), G.data());
}

}  // namespace flap::kernels
