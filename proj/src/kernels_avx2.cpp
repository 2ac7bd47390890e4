// AVX2+FMA variants of the float inner loops. Compiled with -mavx2 -mfma in
// its own translation unit; callers reach it only through the dispatch table
// after a runtime CPU check.

#include "ovfuse/kernels.hpp"

#if defined(OVFUSE_HAVE_AVX2)

#include <immintrin.h>

namespace ovfuse::kernels {

namespace {

inline float hsum256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_hadd_ps(s, s);
    s = _mm_hadd_ps(s, s);
    return _mm_cvtss_f32(s);
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    }
    float acc = hsum256(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

float squared_norm_avx2(const float* a, std::size_t n) { return dot_avx2(a, a, n); }

void scale_avx2(float* a, std::size_t n, float s) {
    const __m256 vs = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(a + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), vs));
    }
    for (; i < n; ++i) a[i] *= s;
}

void axpy_avx2(float* y, const float* x, float s, std::size_t n) {
    const __m256 vs = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        vy = _mm256_fmadd_ps(vs, _mm256_loadu_ps(x + i), vy);
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += s * x[i];
}

void blend2_avx2(float* out, const float* a, float wa, const float* b, float wb, std::size_t n) {
    const __m256 va = _mm256_set1_ps(wa);
    const __m256 vb = _mm256_set1_ps(wb);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 r = _mm256_mul_ps(va, _mm256_loadu_ps(a + i));
        r = _mm256_fmadd_ps(vb, _mm256_loadu_ps(b + i), r);
        _mm256_storeu_ps(out + i, r);
    }
    for (; i < n; ++i) out[i] = wa * a[i] + wb * b[i];
}

bool cpu_has_avx2_fma() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

}  // namespace

const KernelOps* avx2_ops() {
    static const bool supported = cpu_has_avx2_fma();
    if (!supported) return nullptr;
    static const KernelOps table{dot_avx2, squared_norm_avx2, scale_avx2, axpy_avx2, blend2_avx2};
    return &table;
}

}  // namespace ovfuse::kernels

#endif  // OVFUSE_HAVE_AVX2
