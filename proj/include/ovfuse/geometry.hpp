#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ovfuse/scene.hpp"

namespace ovfuse {

// One posed RGB-D view. Pose maps world to camera coordinates; the camera
// looks down +z, pixel (row,col) maps through (fx,fy,cx,cy). Depth stores
// camera-space z in meters, 0 marking pixels with no depth.
struct CameraView {
    float fx = 0, fy = 0, cx = 0, cy = 0;
    std::array<float, 16> world_to_camera{};  // row-major 4x4 rigid transform
    Tensor depth;                             // [H,W]
    int width = 0, height = 0;

    void validate() const;
    bool depth_all_zero() const;
};

struct Correspondence {
    std::int32_t point_index = 0;
    std::int32_t view_index = 0;
    std::int32_t pixel_row = 0;
    std::int32_t pixel_col = 0;
    float camera_distance = 0;  // camera-space z of the point
};

// Pixel-point correspondence with occlusion testing. A point is kept iff it
// projects inside the image with positive camera-space depth, its pixel has
// depth > 0, and |camera_distance - D| < sigma_rel * D. A depth map that is
// entirely zero disables the occlusion test and keeps all in-frustum points.
std::vector<Correspondence> project_points(const PointScene& scene, const CameraView& view,
                                           float sigma_rel, std::int32_t view_index = 0);

// Per-point arithmetic mean of the pixel features named by the
// correspondences, L2-normalized after averaging. Feature maps are [H,W,C]
// indexed by Correspondence::view_index.
PointFeatureSet multiview_fuse(const std::vector<Tensor>& per_view_feature_maps,
                               const std::vector<Correspondence>& correspondences,
                               std::size_t n_points);

struct VoxelDownsampleResult {
    PointScene scene;
    std::vector<std::int32_t> index_map;  // original point -> representative index
};

// One centroid per occupied voxel; majority label per voxel with ties broken
// by smallest class index. Faces are dropped (the mesh does not survive
// resampling).
VoxelDownsampleResult voxel_downsample(const PointScene& scene, float voxel_size);

// Camera JSON: {"intrinsics":{"fx","fy","cx","cy"}, "pose":[16 row-major
// floats], "width", "height", "depth": "rel.ovt", "features": "rel.ovt"}.
// Relative paths resolve against the JSON file's directory.
struct CameraManifest {
    CameraView view;
    std::filesystem::path features;
};

CameraManifest load_camera_manifest(const std::filesystem::path& json_path);
void write_camera_manifest(const CameraView& view, const std::filesystem::path& depth_rel,
                           const std::filesystem::path& features_rel,
                           const std::filesystem::path& json_path);

}  // namespace ovfuse
