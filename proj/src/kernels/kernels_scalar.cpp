#include <cstring>

#include "kernels/kernels.hpp"

namespace kern::scalar {

static void k_add(size_t n, const double * a, const double * b, double * out) {
    for (size_t i = 0; i < n; i++) out[i] = a[i] + b[i];
}

static void k_mul(size_t n, const double * a, const double * b, double * out) {
    for (size_t i = 0; i < n; i++) out[i] = a[i] * b[i];
}

static void k_axpy(size_t n, double alpha, const double * x, double * y) {
    for (size_t i = 0; i < n; i++) y[i] += alpha * x[i];
}

static void k_scale(size_t n, double alpha, const double * x, double * out) {
    for (size_t i = 0; i < n; i++) out[i] = alpha * x[i];
}

static double k_sum(size_t n, const double * x) {
    double s = 0.0;
    for (size_t i = 0; i < n; i++) s += x[i];
    return s;
}

static void k_matmul_acc(size_t m, size_t k, size_t n, const double * A, const double * B, double * C) {
    for (size_t i = 0; i < m; i++) {
        const double * a = A + i * k;
        double * c = C + i * n;
        for (size_t p = 0; p < k; p++) {
            const double av = a[p];
            if (av == 0.0) continue;
            const double * b = B + p * n;
            for (size_t j = 0; j < n; j++) c[j] += av * b[j];
        }
    }
}

static void k_matmul(size_t m, size_t k, size_t n, const double * A, const double * B, double * C) {
    memset(C, 0, m * n * sizeof(double));
    k_matmul_acc(m, k, n, A, B, C);
}

static void k_round_f32(size_t n, double * x) {
    for (size_t i = 0; i < n; i++) x[i] = (double) (float) x[i];
}

const Kernels table = {
    k_add, k_mul, k_axpy, k_scale, k_sum, k_matmul, k_matmul_acc, k_round_f32,
};

}  // namespace kern::scalar
