#pragma once

// Shared fixtures and generators for the test suites.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ovfuse/scene.hpp"
#include "ovfuse/tensor.hpp"

namespace ovtest {

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("ovfuse_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline ovfuse::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                    float lo = -1.0f, float hi = 1.0f) {
    ovfuse::Tensor t(std::move(shape));
    std::uniform_real_distribution<float> dist(lo, hi);
    for (float& v : t.data) v = dist(rng);
    return t;
}

inline ovfuse::TensorU8 random_mask(std::size_t h, std::size_t w, std::mt19937_64& rng,
                                    double fill = 0.5) {
    ovfuse::TensorU8 m({h, w});
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (auto& v : m.data) v = dist(rng) < fill ? 1 : 0;
    return m;
}

inline ovfuse::PointFeatureSet random_feature_set(std::size_t n, std::size_t c,
                                                  std::mt19937_64& rng,
                                                  double invalid_fraction = 0.0) {
    ovfuse::PointFeatureSet f;
    f.features = random_tensor({n, c}, rng);
    f.valid.assign(n, 1);
    f.view_count.assign(n, 1);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (dist(rng) < invalid_fraction) {
            f.valid[i] = 0;
            f.view_count[i] = 0;
            for (std::size_t j = 0; j < c; ++j) f.features(i, j) = 0.0f;
        }
    }
    return f;
}

// Unit-norm rows, all valid.
inline ovfuse::PointFeatureSet random_unit_feature_set(std::size_t n, std::size_t c,
                                                       std::mt19937_64& rng) {
    ovfuse::PointFeatureSet f = random_feature_set(n, c, rng);
    ovfuse::l2_normalize_rows_inplace(f.features);
    return f;
}

inline double dot_d(const float* a, const float* b, std::size_t n) {
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

inline double norm_d(const float* a, std::size_t n) { return std::sqrt(dot_d(a, a, n)); }

}  // namespace ovtest
