#include "ovfuse/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

#include "ovfuse/error.hpp"

namespace ovfuse::kernels {

namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

float squared_norm_scalar(const float* a, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

void scale_scalar(float* a, std::size_t n, float s) {
    for (std::size_t i = 0; i < n; ++i) a[i] *= s;
}

void axpy_scalar(float* y, const float* x, float s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
}

void blend2_scalar(float* out, const float* a, float wa, const float* b, float wb, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = wa * a[i] + wb * b[i];
}

Backend resolve_default() {
    if (const char* env = std::getenv("OVFUSE_KERNEL")) {
        std::string name(env);
        if (name == "scalar") return Backend::scalar;
        if (name == "avx2" && avx2_ops()) return Backend::avx2;
        if (name == "neon" && neon_ops()) return Backend::neon;
        // Unknown or unavailable request falls back to scalar rather than
        // silently picking a faster path the caller asked to avoid.
        return Backend::scalar;
    }
    if (avx2_ops()) return Backend::avx2;
    if (neon_ops()) return Backend::neon;
    return Backend::scalar;
}

Backend& active_slot() {
    static Backend backend = resolve_default();
    return backend;
}

}  // namespace

const KernelOps& scalar_ops() {
    static const KernelOps table{dot_scalar, squared_norm_scalar, scale_scalar, axpy_scalar,
                                 blend2_scalar};
    return table;
}

#if !defined(OVFUSE_HAVE_AVX2)
const KernelOps* avx2_ops() { return nullptr; }
#endif
#if !defined(OVFUSE_HAVE_NEON)
const KernelOps* neon_ops() { return nullptr; }
#endif

Backend active_backend() { return active_slot(); }

void set_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_ops())
        throw ValidationError("kernel backend avx2 unavailable on this machine");
    if (b == Backend::neon && !neon_ops())
        throw ValidationError("kernel backend neon unavailable on this machine");
    active_slot() = b;
}

std::vector<Backend> available_backends() {
    std::vector<Backend> out{Backend::scalar};
    if (avx2_ops()) out.push_back(Backend::avx2);
    if (neon_ops()) out.push_back(Backend::neon);
    return out;
}

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
        case Backend::neon: return "neon";
    }
    return "unknown";
}

const KernelOps& ops() {
    switch (active_slot()) {
        case Backend::avx2: return *avx2_ops();
        case Backend::neon: return *neon_ops();
        case Backend::scalar: break;
    }
    return scalar_ops();
}

}  // namespace ovfuse::kernels
