#pragma once

#include <cstdint>
#include <vector>

#include "ovfuse/scene.hpp"

namespace ovfuse {

// Non-overlapping, jointly exhaustive point segments.
struct SuperpointPartition {
    std::vector<std::int32_t> assignment;  // per point, in [0,L)
    std::int32_t count = 0;                // L
    std::vector<std::int32_t> sizes;       // per segment, each >= 1

    void validate() const;
};

// Graph-based segmentation over the vertex adjacency graph with edge weight
// 1 - dot(normal_u, normal_v); normals are area-weighted face-normal
// averages recomputed from the faces. Segments smaller than min_size are
// merged across their lowest-weight boundary edges. Deterministic: edges
// process in (weight, u, v) order.
SuperpointPartition segment_mesh(const PointScene& mesh, float k, int min_size);

// Every point its own segment (the outdoor degenerate case).
SuperpointPartition identity_partition(std::size_t n_points);

// Row l = mean over the segment's valid member rows, L2-normalized.
// Segments with no valid member come back invalid.
PointFeatureSet superpoint_pool(const PointFeatureSet& f, const SuperpointPartition& part);

// Each point receives its segment's pooled row.
PointFeatureSet superpoint_broadcast(const PointFeatureSet& pooled,
                                     const SuperpointPartition& part);

}  // namespace ovfuse
