#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ovfuse/tensor.hpp"

namespace ovfuse {

// Point cloud with optional mesh connectivity and optional per-point labels.
struct PointScene {
    Tensor points;                                   // [N,3]
    std::vector<std::int32_t> labels;                // empty or size N
    std::vector<std::array<std::int32_t, 3>> faces;  // empty when no mesh

    std::size_t size() const { return points.rank() == 2 ? points.dim(0) : 0; }
    bool has_labels() const { return !labels.empty(); }
    bool has_mesh() const { return !faces.empty(); }
    void validate() const;
};

// Per-point features with observation bookkeeping. Invariants: valid[i]
// iff view_count[i] > 0, and invalid rows are all-zero.
struct PointFeatureSet {
    Tensor features;                      // [N,C]
    std::vector<std::uint8_t> valid;      // N
    std::vector<std::int32_t> view_count; // N

    std::size_t size() const { return features.rank() == 2 ? features.dim(0) : 0; }
    std::size_t channels() const { return features.rank() == 2 ? features.dim(1) : 0; }
    void validate() const;

    // All rows marked valid with the given count (used for model outputs and
    // features loaded from disk, where zero rows encode invalid points).
    static PointFeatureSet from_tensor(Tensor features);
};

}  // namespace ovfuse
