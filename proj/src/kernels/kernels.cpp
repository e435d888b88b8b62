#include "kernels/kernels.hpp"

namespace kern {

bool avx2_supported() {
#if defined(MVLM_HAVE_AVX2_TU) && (defined(__x86_64__) || defined(__i386__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

static const Kernels * pick(Backend b) {
#if defined(MVLM_HAVE_AVX2_TU)
    if (b == Backend::avx2) return &avx2::table;
    if (b == Backend::auto_detect && avx2_supported()) return &avx2::table;
#else
    (void) b;
#endif
    return &scalar::table;
}

static const Kernels * g_active = nullptr;

void set_backend(Backend b) { g_active = pick(b); }

const Kernels & get() {
    if (!g_active) g_active = pick(Backend::auto_detect);
    return *g_active;
}

const char * active_backend() {
    const Kernels * k = &get();
#if defined(MVLM_HAVE_AVX2_TU)
    if (k == &avx2::table) return "avx2";
#endif
    (void) k;
    return "scalar";
}

}  // namespace kern
