#include "ovfuse/scene.hpp"

#include <string>

#include "ovfuse/kernels.hpp"

namespace ovfuse {

void PointScene::validate() const {
    if (points.rank() != 2 || points.dim(1) != 3)
        throw ValidationError("scene: points must have shape [N,3]");
    require_finite(points, "scene points");
    const std::size_t n = size();
    if (!labels.empty() && labels.size() != n)
        throw ValidationError("scene: label count does not match point count");
    for (const auto& f : faces) {
        for (std::int32_t v : f) {
            if (v < 0 || static_cast<std::size_t>(v) >= n)
                throw ValidationError("scene: face vertex index " + std::to_string(v) +
                                      " out of range");
        }
    }
}

void PointFeatureSet::validate() const {
    if (features.rank() != 2) throw ValidationError("feature set: features must be rank 2");
    const std::size_t n = size();
    if (valid.size() != n || view_count.size() != n)
        throw ValidationError("feature set: flag arrays must match row count");
    for (std::size_t i = 0; i < n; ++i) {
        if ((valid[i] != 0) != (view_count[i] > 0))
            throw ValidationError("feature set: valid flag inconsistent with view count at row " +
                                  std::to_string(i));
        if (!valid[i] && kernels::squared_norm(features.row(i), channels()) != 0.0f)
            throw ValidationError("feature set: invalid row " + std::to_string(i) +
                                  " is not all-zero");
    }
}

PointFeatureSet PointFeatureSet::from_tensor(Tensor features) {
    if (features.rank() != 2) throw ValidationError("feature set: features must be rank 2");
    PointFeatureSet out;
    const std::size_t n = features.dim(0);
    const std::size_t c = features.dim(1);
    out.valid.assign(n, 1);
    out.view_count.assign(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (kernels::squared_norm(features.row(i), c) == 0.0f) {
            out.valid[i] = 0;
            out.view_count[i] = 0;
        }
    }
    out.features = std::move(features);
    return out;
}

}  // namespace ovfuse
