#pragma once

#include <cstddef>
#include <vector>

namespace ovfuse::kernels {

enum class Backend { scalar, avx2, neon };

// Dispatch table for the float inner loops used by feature projection,
// fusion and distillation. The scalar entries are the reference semantics;
// SIMD variants may reassociate additions and are equivalence-tested
// against scalar in tests/test_kernels.cpp.
struct KernelOps {
    float (*dot)(const float* a, const float* b, std::size_t n);
    float (*squared_norm)(const float* a, std::size_t n);
    void (*scale)(float* a, std::size_t n, float s);
    // y += s * x
    void (*axpy)(float* y, const float* x, float s, std::size_t n);
    // out = wa * a + wb * b
    void (*blend2)(float* out, const float* a, float wa, const float* b, float wb, std::size_t n);
};

const KernelOps& scalar_ops();
const KernelOps* avx2_ops();  // nullptr when not compiled in or CPU lacks AVX2+FMA
const KernelOps* neon_ops();  // nullptr off arm64

// Active backend: OVFUSE_KERNEL env var ("scalar"/"avx2"/"neon") if set,
// otherwise the widest backend the CPU supports.
Backend active_backend();
void set_backend(Backend b);
std::vector<Backend> available_backends();
const char* backend_name(Backend b);
const KernelOps& ops();

inline float dot(const float* a, const float* b, std::size_t n) { return ops().dot(a, b, n); }
inline float squared_norm(const float* a, std::size_t n) { return ops().squared_norm(a, n); }
inline void scale(float* a, std::size_t n, float s) { ops().scale(a, n, s); }
inline void axpy(float* y, const float* x, float s, std::size_t n) { ops().axpy(y, x, s, n); }
inline void blend2(float* out, const float* a, float wa, const float* b, float wb, std::size_t n) {
    ops().blend2(out, a, wa, b, wb, n);
}

}  // namespace ovfuse::kernels
