#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Data-parallel inner loops used by the MLP and the trajectory distance
// precomputation. Each kernel has a scalar reference implementation and an
// AVX2+FMA variant; the variant is chosen once at startup from CPUID and can
// be forced with STYLEBC_KERNELS=scalar|avx2.

namespace stylebc::kernels {

enum class Backend { scalar, avx2 };

struct AdamStep {
    double learning_rate;
    double beta1;
    double beta2;
    double eps;
    double bias_correction1;  // 1 - beta1^t
    double bias_correction2;  // 1 - beta2^t
    double moment_floor;      // moments below this magnitude are flushed to zero
};

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // sum_k (a_k - b_k)^2
    double (*sqdist)(const double* a, const double* b, std::size_t n);
    // y[r] = bias[r] + dot(w + r * cols, x) for r < rows
    void (*gemv)(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
                 std::size_t cols);
    // y[b * rows + r] = bias[r] + dot(w + r * cols, x + b * cols) for b < batch
    void (*gemm_nt)(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
                    std::size_t cols, std::size_t batch);
    // One Adam update of n parameters in place. Uses no fused multiply-add,
    // so every backend produces identical bits.
    void (*adam)(double* theta, const double* g, double* m, double* v, std::size_t n, const AdamStep& step);
};

const KernelTable& scalar_table();
/// Null when the binary was built without AVX2 support.
const KernelTable* avx2_table();

bool cpu_has_avx2();
Backend active_backend();
/// Overrides the runtime choice. Throws if avx2 is requested but unavailable.
void set_backend(Backend b);
std::string_view backend_name(Backend b);

const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}
inline double sqdist(std::span<const double> a, std::span<const double> b) {
    return active().sqdist(a.data(), b.data(), a.size());
}

}  // namespace stylebc::kernels
