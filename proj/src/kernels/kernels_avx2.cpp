#include <immintrin.h>

#include <cstring>

#include "kernels/kernels.hpp"

namespace kern::avx2 {

static void k_add(size_t n, const double * a, const double * b, double * out) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; i++) out[i] = a[i] + b[i];
}

static void k_mul(size_t n, const double * a, const double * b, double * out) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; i++) out[i] = a[i] * b[i];
}

static void k_axpy(size_t n, double alpha, const double * x, double * y) {
    const __m256d va = _mm256_set1_pd(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; i++) y[i] += alpha * x[i];
}

static void k_scale(size_t n, double alpha, const double * x, double * out) {
    const __m256d va = _mm256_set1_pd(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; i++) out[i] = alpha * x[i];
}

static double k_sum(size_t n, const double * x) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double lanes[4];
    _mm256_storeu_pd(lanes, acc);
    double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
    for (; i < n; i++) s += x[i];
    return s;
}

// Row-major i-k-j product, j vectorized, 2 rows of A per pass so each
// B row load feeds two accumulator rows.
static void k_matmul_acc(size_t m, size_t k, size_t n, const double * A, const double * B, double * C) {
    size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const double * a0 = A + i * k;
        const double * a1 = a0 + k;
        double * c0 = C + i * n;
        double * c1 = c0 + n;
        for (size_t p = 0; p < k; p++) {
            const __m256d va0 = _mm256_set1_pd(a0[p]);
            const __m256d va1 = _mm256_set1_pd(a1[p]);
            const double * b = B + p * n;
            size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                const __m256d vb = _mm256_loadu_pd(b + j);
                _mm256_storeu_pd(c0 + j, _mm256_fmadd_pd(va0, vb, _mm256_loadu_pd(c0 + j)));
                _mm256_storeu_pd(c1 + j, _mm256_fmadd_pd(va1, vb, _mm256_loadu_pd(c1 + j)));
            }
            for (; j < n; j++) {
                c0[j] += a0[p] * b[j];
                c1[j] += a1[p] * b[j];
            }
        }
    }
    for (; i < m; i++) {
        const double * a = A + i * k;
        double * c = C + i * n;
        for (size_t p = 0; p < k; p++) {
            const __m256d va = _mm256_set1_pd(a[p]);
            const double * b = B + p * n;
            size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                _mm256_storeu_pd(c + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(b + j), _mm256_loadu_pd(c + j)));
            }
            for (; j < n; j++) c[j] += a[p] * b[j];
        }
    }
}

static void k_matmul(size_t m, size_t k, size_t n, const double * A, const double * B, double * C) {
    memset(C, 0, m * n * sizeof(double));
    k_matmul_acc(m, k, n, A, B, C);
}

static void k_round_f32(size_t n, double * x) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m128 f = _mm256_cvtpd_ps(_mm256_loadu_pd(x + i));
        _mm256_storeu_pd(x + i, _mm256_cvtps_pd(f));
    }
    for (; i < n; i++) x[i] = (double) (float) x[i];
}

const Kernels table = {
    k_add, k_mul, k_axpy, k_scale, k_sum, k_matmul, k_matmul_acc, k_round_f32,
};

}  // namespace kern::avx2
