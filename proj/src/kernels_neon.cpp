// NEON variants of the float inner loops. NEON is baseline on arm64, so no
// runtime CPU probe is needed beyond the build-time arch check.

#include "ovfuse/kernels.hpp"

#if defined(OVFUSE_HAVE_NEON)

#include <arm_neon.h>

namespace ovfuse::kernels {

namespace {

float dot_neon(const float* a, const float* b, std::size_t n) {
    float32x4_t acc0 = vdupq_n_f32(0.0f);
    float32x4_t acc1 = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
        acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    }
    float acc = vaddvq_f32(vaddq_f32(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

float squared_norm_neon(const float* a, std::size_t n) { return dot_neon(a, a, n); }

void scale_neon(float* a, std::size_t n, float s) {
    const float32x4_t vs = vdupq_n_f32(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(a + i, vmulq_f32(vld1q_f32(a + i), vs));
    }
    for (; i < n; ++i) a[i] *= s;
}

void axpy_neon(float* y, const float* x, float s, std::size_t n) {
    const float32x4_t vs = vdupq_n_f32(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), vs, vld1q_f32(x + i)));
    }
    for (; i < n; ++i) y[i] += s * x[i];
}

void blend2_neon(float* out, const float* a, float wa, const float* b, float wb, std::size_t n) {
    const float32x4_t va = vdupq_n_f32(wa);
    const float32x4_t vb = vdupq_n_f32(wb);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t r = vmulq_f32(va, vld1q_f32(a + i));
        r = vfmaq_f32(r, vb, vld1q_f32(b + i));
        vst1q_f32(out + i, r);
    }
    for (; i < n; ++i) out[i] = wa * a[i] + wb * b[i];
}

}  // namespace

const KernelOps* neon_ops() {
    static const KernelOps table{dot_neon, squared_norm_neon, scale_neon, axpy_neon, blend2_neon};
    return &table;
}

}  // namespace ovfuse::kernels

#endif  // OVFUSE_HAVE_NEON
