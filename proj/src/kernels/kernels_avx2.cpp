// Compiled with -mavx2 -mfma -ffp-contract=off; only reached after a CPUID
// check. Scalar tails must not fuse, so they round like the reference.
#include "stylebc/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

#include <cmath>

namespace stylebc::kernels {

namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
        acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
        acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double s = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// Single-accumulator dot used by every gemv/gemm path, so a row gives the
// same bits whichever blocking reaches it.
double row_dot(const double* w, const double* x, std::size_t cols) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + c), _mm256_loadu_pd(x + c), acc);
    double s = hsum(acc);
    for (; c < cols; ++c) s = std::fma(w[c], x[c], s);
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double sqdist_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
        acc0 = _mm256_fmadd_pd(d0, d0, acc0);
        acc1 = _mm256_fmadd_pd(d1, d1, acc1);
    }
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc0 = _mm256_fmadd_pd(d, d, acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Four output rows per pass so each load of x feeds four FMAs.
void gemv_avx2(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
               std::size_t cols) {
    std::size_t r = 0;
    for (; r + 4 <= rows; r += 4) {
        const double* w0 = w + r * cols;
        const double* w1 = w0 + cols;
        const double* w2 = w1 + cols;
        const double* w3 = w2 + cols;
        __m256d a0 = _mm256_setzero_pd();
        __m256d a1 = _mm256_setzero_pd();
        __m256d a2 = _mm256_setzero_pd();
        __m256d a3 = _mm256_setzero_pd();
        std::size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            const __m256d xv = _mm256_loadu_pd(x + c);
            a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w0 + c), xv, a0);
            a1 = _mm256_fmadd_pd(_mm256_loadu_pd(w1 + c), xv, a1);
            a2 = _mm256_fmadd_pd(_mm256_loadu_pd(w2 + c), xv, a2);
            a3 = _mm256_fmadd_pd(_mm256_loadu_pd(w3 + c), xv, a3);
        }
        double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
        for (; c < cols; ++c) {
            s0 = std::fma(w0[c], x[c], s0);
            s1 = std::fma(w1[c], x[c], s1);
            s2 = std::fma(w2[c], x[c], s2);
            s3 = std::fma(w3[c], x[c], s3);
        }
        y[r] = bias[r] + s0;
        y[r + 1] = bias[r + 1] + s1;
        y[r + 2] = bias[r + 2] + s2;
        y[r + 3] = bias[r + 3] + s3;
    }
    for (; r < rows; ++r) y[r] = bias[r] + row_dot(w + r * cols, x, cols);
}

// Two weight rows against four inputs per pass: every loaded vector feeds
// at least two FMAs and the weight rows stay in L1 across the batch.
void gemm_nt_avx2(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
                  std::size_t cols, std::size_t batch) {
    std::size_t b = 0;
    for (; b + 4 <= batch; b += 4) {
        const double* x0 = x + b * cols;
        const double* x1 = x0 + cols;
        const double* x2 = x1 + cols;
        const double* x3 = x2 + cols;
        std::size_t r = 0;
        for (; r + 2 <= rows; r += 2) {
            const double* w0 = w + r * cols;
            const double* w1 = w0 + cols;
            __m256d a00 = _mm256_setzero_pd(), a01 = _mm256_setzero_pd(), a02 = _mm256_setzero_pd(),
                    a03 = _mm256_setzero_pd();
            __m256d a10 = _mm256_setzero_pd(), a11 = _mm256_setzero_pd(), a12 = _mm256_setzero_pd(),
                    a13 = _mm256_setzero_pd();
            std::size_t c = 0;
            for (; c + 4 <= cols; c += 4) {
                const __m256d wv0 = _mm256_loadu_pd(w0 + c);
                const __m256d wv1 = _mm256_loadu_pd(w1 + c);
                const __m256d xv0 = _mm256_loadu_pd(x0 + c);
                const __m256d xv1 = _mm256_loadu_pd(x1 + c);
                const __m256d xv2 = _mm256_loadu_pd(x2 + c);
                const __m256d xv3 = _mm256_loadu_pd(x3 + c);
                a00 = _mm256_fmadd_pd(wv0, xv0, a00);
                a01 = _mm256_fmadd_pd(wv0, xv1, a01);
                a02 = _mm256_fmadd_pd(wv0, xv2, a02);
                a03 = _mm256_fmadd_pd(wv0, xv3, a03);
                a10 = _mm256_fmadd_pd(wv1, xv0, a10);
                a11 = _mm256_fmadd_pd(wv1, xv1, a11);
                a12 = _mm256_fmadd_pd(wv1, xv2, a12);
                a13 = _mm256_fmadd_pd(wv1, xv3, a13);
            }
            double s[2][4] = {{hsum(a00), hsum(a01), hsum(a02), hsum(a03)},
                              {hsum(a10), hsum(a11), hsum(a12), hsum(a13)}};
            for (; c < cols; ++c) {
                for (int j = 0; j < 4; ++j) {
                    s[0][j] = std::fma(w0[c], x[(b + j) * cols + c], s[0][j]);
                    s[1][j] = std::fma(w1[c], x[(b + j) * cols + c], s[1][j]);
                }
            }
            for (int j = 0; j < 4; ++j) {
                y[(b + j) * rows + r] = bias[r] + s[0][j];
                y[(b + j) * rows + r + 1] = bias[r + 1] + s[1][j];
            }
        }
        for (; r < rows; ++r)
            for (std::size_t j = 0; j < 4; ++j)
                y[(b + j) * rows + r] = bias[r] + row_dot(w + r * cols, x + (b + j) * cols, cols);
    }
    for (; b < batch; ++b) gemv_avx2(w, x + b * cols, bias, y + b * rows, rows, cols);
}

// Same operation order as the scalar reference with separate multiplies and
// adds, so results match bit for bit.
void adam_avx2(double* theta, const double* g, double* m, double* v, std::size_t n, const AdamStep& st) {
    const double c1 = 1.0 - st.beta1;
    const double c2 = 1.0 - st.beta2;
    const __m256d b1 = _mm256_set1_pd(st.beta1), b2 = _mm256_set1_pd(st.beta2);
    const __m256d vc1 = _mm256_set1_pd(c1), vc2 = _mm256_set1_pd(c2);
    const double step = st.learning_rate / st.bias_correction1;
    const double inv_sqrt_bc2 = 1.0 / std::sqrt(st.bias_correction2);
    const __m256d vstep = _mm256_set1_pd(step), vinv = _mm256_set1_pd(inv_sqrt_bc2);
    const __m256d eps = _mm256_set1_pd(st.eps);
    const __m256d floor = _mm256_set1_pd(st.moment_floor);
    const __m256d sign = _mm256_set1_pd(-0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(vc1, gv));
        __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(_mm256_mul_pd(vc2, gv), gv));
        mv = _mm256_andnot_pd(_mm256_cmp_pd(_mm256_andnot_pd(sign, mv), floor, _CMP_LT_OQ), mv);
        vv = _mm256_andnot_pd(_mm256_cmp_pd(vv, floor, _CMP_LT_OQ), vv);
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d denom = _mm256_add_pd(_mm256_mul_pd(_mm256_sqrt_pd(vv), vinv), eps);
        const __m256d upd = _mm256_div_pd(_mm256_mul_pd(vstep, mv), denom);
        _mm256_storeu_pd(theta + i, _mm256_sub_pd(_mm256_loadu_pd(theta + i), upd));
    }
    for (; i < n; ++i) {
        m[i] = st.beta1 * m[i] + c1 * g[i];
        v[i] = st.beta2 * v[i] + c2 * g[i] * g[i];
        if (std::abs(m[i]) < st.moment_floor) m[i] = 0.0;
        if (v[i] < st.moment_floor) v[i] = 0.0;
        theta[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + st.eps);
    }
}

}  // namespace

const KernelTable* avx2_table() {
    static const KernelTable t{dot_avx2, axpy_avx2, sqdist_avx2, gemv_avx2, gemm_nt_avx2, adam_avx2};
    return &t;
}

}  // namespace stylebc::kernels

#else

namespace stylebc::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace stylebc::kernels

#endif
