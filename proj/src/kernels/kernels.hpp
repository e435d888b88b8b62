#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel inner loops used by the tensor core. Every kernel has a
// scalar reference implementation and (on x86-64) an AVX2 variant selected
// at runtime. The two are equivalence-tested; the AVX2 matmul uses FMA so
// results may differ from the scalar path in the last ulps.
namespace kern {

enum class Backend { auto_detect, scalar, avx2 };

// Force a backend (tests use this); Backend::auto_detect restores detection.
void set_backend(Backend b);
const char * active_backend();
bool avx2_supported();

struct Kernels {
    // out[i] = a[i] + b[i]
    void (*add)(size_t n, const double * a, const double * b, double * out);
    // out[i] = a[i] * b[i]
    void (*mul)(size_t n, const double * a, const double * b, double * out);
    // y[i] += alpha * x[i]
    void (*axpy)(size_t n, double alpha, const double * x, double * y);
    // out[i] = alpha * x[i]
    void (*scale)(size_t n, double alpha, const double * x, double * out);
    // sum_i x[i]
    double (*sum)(size_t n, const double * x);
    // C[m x n] = A[m x k] * B[k x n], row-major, C overwritten
    void (*matmul)(size_t m, size_t k, size_t n, const double * A, const double * B, double * C);
    // C[m x n] += A[m x k] * B[k x n]
    void (*matmul_acc)(size_t m, size_t k, size_t n, const double * A, const double * B, double * C);
    // x[i] = (double)(float)x[i]   (f32 compute emulation)
    void (*round_f32)(size_t n, double * x);
};

const Kernels & get();

namespace scalar { extern const Kernels table; }
#if defined(MVLM_HAVE_AVX2_TU)
namespace avx2 { extern const Kernels table; }
#endif

}  // namespace kern
