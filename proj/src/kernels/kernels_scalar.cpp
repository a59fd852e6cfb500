#include "stylebc/kernels.hpp"

#include <cmath>

namespace stylebc::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sqdist_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void gemv_scalar(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
                 std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = bias[r] + dot_scalar(w + r * cols, x, cols);
}

void gemm_nt_scalar(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
                    std::size_t cols, std::size_t batch) {
    for (std::size_t b = 0; b < batch; ++b) gemv_scalar(w, x + b * cols, bias, y + b * rows, rows, cols);
}

void adam_scalar(double* theta, const double* g, double* m, double* v, std::size_t n, const AdamStep& st) {
    const double c1 = 1.0 - st.beta1;
    const double c2 = 1.0 - st.beta2;
    const double step = st.learning_rate / st.bias_correction1;
    const double inv_sqrt_bc2 = 1.0 / std::sqrt(st.bias_correction2);
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = st.beta1 * m[i] + c1 * g[i];
        v[i] = st.beta2 * v[i] + c2 * g[i] * g[i];
        if (std::abs(m[i]) < st.moment_floor) m[i] = 0.0;
        if (v[i] < st.moment_floor) v[i] = 0.0;
        theta[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + st.eps);
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable t{dot_scalar, axpy_scalar, sqdist_scalar, gemv_scalar, gemm_nt_scalar,
                               adam_scalar};
    return t;
}

}  // namespace stylebc::kernels
