#include "ovfuse/geometry.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "ovfuse/kernels.hpp"
#include "ovfuse/tensor_io.hpp"

namespace ovfuse {

void CameraView::validate() const {
    if (width <= 0 || height <= 0) throw ValidationError("camera: non-positive image size");
    if (fx <= 0 || fy <= 0) throw ValidationError("camera: non-positive focal length");
    if (depth.rank() != 2 || depth.dim(0) != static_cast<std::size_t>(height) ||
        depth.dim(1) != static_cast<std::size_t>(width))
        throw ValidationError("camera: depth shape does not match image size");
    for (float d : depth.data)
        if (d < 0) throw ValidationError("camera: negative depth value");

    // Rotation block must be orthonormal with determinant +1.
    const auto& m = world_to_camera;
    auto dot3 = [&](int r, int c) {
        return m[4 * r] * m[4 * c] + m[4 * r + 1] * m[4 * c + 1] + m[4 * r + 2] * m[4 * c + 2];
    };
    for (int r = 0; r < 3; ++r) {
        for (int c = r; c < 3; ++c) {
            const float want = (r == c) ? 1.0f : 0.0f;
            if (std::abs(dot3(r, c) - want) > 1e-5f)
                throw ValidationError("camera: rotation block not orthonormal");
        }
    }
    const float det = m[0] * (m[5] * m[10] - m[6] * m[9]) - m[1] * (m[4] * m[10] - m[6] * m[8]) +
                      m[2] * (m[4] * m[9] - m[5] * m[8]);
    if (std::abs(det - 1.0f) > 1e-4f)
        throw ValidationError("camera: rotation determinant is not +1");
    if (m[12] != 0 || m[13] != 0 || m[14] != 0 || m[15] != 1)
        throw ValidationError("camera: bottom pose row must be [0,0,0,1]");
}

bool CameraView::depth_all_zero() const {
    for (float d : depth.data)
        if (d != 0.0f) return false;
    return true;
}

std::vector<Correspondence> project_points(const PointScene& scene, const CameraView& view,
                                           float sigma_rel, std::int32_t view_index) {
    if (sigma_rel <= 0) throw ValidationError("project_points: sigma_rel must be positive");
    view.validate();

    const bool no_depth = view.depth_all_zero();
    const auto& m = view.world_to_camera;
    const std::size_t n = scene.size();

    std::vector<Correspondence> out;
    out.reserve(n / 4);
    for (std::size_t i = 0; i < n; ++i) {
        const float x = scene.points(i, 0);
        const float y = scene.points(i, 1);
        const float z = scene.points(i, 2);
        const float cxp = m[0] * x + m[1] * y + m[2] * z + m[3];
        const float cyp = m[4] * x + m[5] * y + m[6] * z + m[7];
        const float czp = m[8] * x + m[9] * y + m[10] * z + m[11];
        if (czp <= 0) continue;

        const long col = std::lround(view.fx * cxp / czp + view.cx);
        const long row = std::lround(view.fy * cyp / czp + view.cy);
        if (row < 0 || row >= view.height || col < 0 || col >= view.width) continue;

        if (!no_depth) {
            const float d = view.depth(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
            if (d <= 0) continue;
            if (std::abs(czp - d) >= sigma_rel * d) continue;
        }
        out.push_back({static_cast<std::int32_t>(i), view_index, static_cast<std::int32_t>(row),
                       static_cast<std::int32_t>(col), czp});
    }
    return out;
}

PointFeatureSet multiview_fuse(const std::vector<Tensor>& per_view_feature_maps,
                               const std::vector<Correspondence>& correspondences,
                               std::size_t n_points) {
    if (per_view_feature_maps.empty())
        throw ValidationError("multiview_fuse: need at least one feature map");
    std::size_t channels = 0;
    for (const Tensor& fm : per_view_feature_maps) {
        if (fm.rank() != 3) throw ValidationError("multiview_fuse: feature maps must be [H,W,C]");
        if (channels == 0) channels = fm.dim(2);
        else if (fm.dim(2) != channels)
            throw ChannelMismatch("multiview_fuse: feature maps disagree on channel count");
    }

    std::vector<double> acc(n_points * channels, 0.0);
    std::vector<std::int32_t> count(n_points, 0);
    for (const Correspondence& c : correspondences) {
        if (c.view_index < 0 ||
            static_cast<std::size_t>(c.view_index) >= per_view_feature_maps.size())
            throw ValidationError("multiview_fuse: correspondence view index out of range");
        const Tensor& fm = per_view_feature_maps[static_cast<std::size_t>(c.view_index)];
        if (c.pixel_row < 0 || static_cast<std::size_t>(c.pixel_row) >= fm.dim(0) ||
            c.pixel_col < 0 || static_cast<std::size_t>(c.pixel_col) >= fm.dim(1))
            throw ValidationError("multiview_fuse: correspondence pixel out of range");
        if (c.point_index < 0 || static_cast<std::size_t>(c.point_index) >= n_points)
            throw ValidationError("multiview_fuse: correspondence point index out of range");

        const float* px = &fm(static_cast<std::size_t>(c.pixel_row),
                              static_cast<std::size_t>(c.pixel_col), 0);
        double* dst = acc.data() + static_cast<std::size_t>(c.point_index) * channels;
        for (std::size_t k = 0; k < channels; ++k) dst[k] += px[k];
        ++count[static_cast<std::size_t>(c.point_index)];
    }

    PointFeatureSet out;
    out.features = Tensor({n_points, channels});
    out.valid.assign(n_points, 0);
    out.view_count = std::move(count);
    for (std::size_t i = 0; i < n_points; ++i) {
        if (out.view_count[i] <= 0) continue;
        out.valid[i] = 1;
        float* rowp = out.features.row(i);
        const double inv = 1.0 / out.view_count[i];
        for (std::size_t k = 0; k < channels; ++k)
            rowp[k] = static_cast<float>(acc[i * channels + k] * inv);
    }
    l2_normalize_rows_inplace(out.features);
    return out;
}

namespace {

struct VoxelKey {
    std::int64_t x, y, z;
    bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const {
        std::uint64_t h = 0x9e3779b97f4a7c15ull;
        for (std::int64_t v : {k.x, k.y, k.z}) {
            h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

VoxelDownsampleResult voxel_downsample(const PointScene& scene, float voxel_size) {
    if (voxel_size <= 0) throw ValidationError("voxel_downsample: voxel size must be positive");
    scene.validate();
    const std::size_t n = scene.size();

    std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slot;
    slot.reserve(n);
    std::vector<std::array<double, 3>> centroid;
    std::vector<std::size_t> members;
    std::vector<std::unordered_map<std::int32_t, std::size_t>> label_votes;
    VoxelDownsampleResult out;
    out.index_map.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const VoxelKey key{
            static_cast<std::int64_t>(std::floor(scene.points(i, 0) / voxel_size)),
            static_cast<std::int64_t>(std::floor(scene.points(i, 1) / voxel_size)),
            static_cast<std::int64_t>(std::floor(scene.points(i, 2) / voxel_size))};
        auto [it, inserted] = slot.try_emplace(key, centroid.size());
        if (inserted) {
            centroid.push_back({0, 0, 0});
            members.push_back(0);
            if (scene.has_labels()) label_votes.emplace_back();
        }
        const std::size_t v = it->second;
        out.index_map[i] = static_cast<std::int32_t>(v);
        for (int a = 0; a < 3; ++a) centroid[v][a] += scene.points(i, static_cast<std::size_t>(a));
        ++members[v];
        if (scene.has_labels()) ++label_votes[v][scene.labels[i]];
    }

    const std::size_t m = centroid.size();
    out.scene.points = Tensor({m, 3});
    if (scene.has_labels()) out.scene.labels.resize(m);
    for (std::size_t v = 0; v < m; ++v) {
        for (int a = 0; a < 3; ++a)
            out.scene.points(v, static_cast<std::size_t>(a)) =
                static_cast<float>(centroid[v][a] / static_cast<double>(members[v]));
        if (scene.has_labels()) {
            std::int32_t best = 0;
            std::size_t best_votes = 0;
            bool first = true;
            for (const auto& [cls, votes] : label_votes[v]) {
                if (first || votes > best_votes || (votes == best_votes && cls < best)) {
                    best = cls;
                    best_votes = votes;
                    first = false;
                }
            }
            out.scene.labels[v] = best;
        }
    }
    return out;
}

CameraManifest load_camera_manifest(const std::filesystem::path& json_path) {
    std::ifstream f(json_path);
    if (!f) throw IoFailure("cannot open: " + json_path.string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError(json_path.string() + ": malformed JSON");

    CameraManifest out;
    try {
        const auto& in = j.at("intrinsics");
        out.view.fx = in.at("fx").get<float>();
        out.view.fy = in.at("fy").get<float>();
        out.view.cx = in.at("cx").get<float>();
        out.view.cy = in.at("cy").get<float>();
        const auto& pose = j.at("pose");
        if (!pose.is_array() || pose.size() != 16)
            throw ValidationError(json_path.string() + ": pose must hold 16 floats");
        for (std::size_t i = 0; i < 16; ++i) out.view.world_to_camera[i] = pose[i].get<float>();
        out.view.width = j.at("width").get<int>();
        out.view.height = j.at("height").get<int>();
        const auto base = json_path.parent_path();
        out.view.depth = io::read_tensor_f32(base / j.at("depth").get<std::string>());
        if (j.contains("features"))
            out.features = base / j.at("features").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(json_path.string() + ": " + e.what());
    }
    out.view.validate();
    return out;
}

void write_camera_manifest(const CameraView& view, const std::filesystem::path& depth_rel,
                           const std::filesystem::path& features_rel,
                           const std::filesystem::path& json_path) {
    nlohmann::json j;
    j["intrinsics"] = {{"fx", view.fx}, {"fy", view.fy}, {"cx", view.cx}, {"cy", view.cy}};
    j["pose"] = view.world_to_camera;
    j["width"] = view.width;
    j["height"] = view.height;
    j["depth"] = depth_rel.generic_string();
    if (!features_rel.empty()) j["features"] = features_rel.generic_string();
    std::ofstream f(json_path, std::ios::trunc);
    if (!f) throw IoFailure("cannot open for writing: " + json_path.string());
    f << j.dump(2) << "\n";
}

}  // namespace ovfuse
