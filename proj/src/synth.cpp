#include "ovfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "ovfuse/kernels.hpp"
#include "ovfuse/tensor_io.hpp"
#include "ovfuse/text_bridge.hpp"

namespace ovfuse {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::mt19937_64 stream(std::uint64_t seed, const std::string& tag) {
    return std::mt19937_64(splitmix64(seed ^ fnv1a(tag)));
}

// Axis-aligned rectangle: plane axis `a` at coordinate `c`, spanning the
// two remaining axes.
struct Rect {
    int axis;
    float coord;
    std::array<float, 2> lo{}, hi{};  // bounds over axes (a+1)%3, (a+2)%3
    std::int32_t cls = -1;
};

void append_rects(const PrimitiveSpec& p, std::int32_t cls, std::vector<Rect>& out) {
    auto rect = [&](int axis, float coord) {
        Rect r;
        r.axis = axis;
        r.coord = coord;
        const int u = (axis + 1) % 3;
        const int v = (axis + 2) % 3;
        r.lo = {p.center[static_cast<std::size_t>(u)] - 0.5f * p.size[static_cast<std::size_t>(u)],
                p.center[static_cast<std::size_t>(v)] - 0.5f * p.size[static_cast<std::size_t>(v)]};
        r.hi = {p.center[static_cast<std::size_t>(u)] + 0.5f * p.size[static_cast<std::size_t>(u)],
                p.center[static_cast<std::size_t>(v)] + 0.5f * p.size[static_cast<std::size_t>(v)]};
        r.cls = cls;
        out.push_back(r);
    };
    if (p.kind == "plane") {
        int axis = -1;
        for (int a = 0; a < 3; ++a)
            if (p.size[static_cast<std::size_t>(a)] == 0.0f) axis = a;
        rect(axis, p.center[static_cast<std::size_t>(axis)]);
        return;
    }
    for (int a = 0; a < 3; ++a) {
        const float half = 0.5f * p.size[static_cast<std::size_t>(a)];
        rect(a, p.center[static_cast<std::size_t>(a)] + half);
        // Skip the -z face of open boxes; ring cameras can never see it.
        if (a == 2 && !p.closed) continue;
        rect(a, p.center[static_cast<std::size_t>(a)] - half);
    }
}

// Grid-meshes one rectangle, appending vertices (all labeled cls) and fan
// triangles with a fixed winding. Vertices are not welded across
// rectangles, so flat faces form their own connected components.
void mesh_rect(const Rect& r, float step, std::int32_t cls, std::vector<std::array<float, 3>>& pts,
               std::vector<std::int32_t>& labels, std::vector<std::array<std::int32_t, 3>>& faces) {
    const int u = (r.axis + 1) % 3;
    const int v = (r.axis + 2) % 3;
    const float du = r.hi[0] - r.lo[0];
    const float dv = r.hi[1] - r.lo[1];
    const int nu = std::max(1, static_cast<int>(std::ceil(du / step)));
    const int nv = std::max(1, static_cast<int>(std::ceil(dv / step)));
    const std::int32_t base = static_cast<std::int32_t>(pts.size());

    for (int i = 0; i <= nu; ++i) {
        for (int j = 0; j <= nv; ++j) {
            std::array<float, 3> p{};
            p[static_cast<std::size_t>(r.axis)] = r.coord;
            p[static_cast<std::size_t>(u)] = r.lo[0] + du * static_cast<float>(i) / nu;
            p[static_cast<std::size_t>(v)] = r.lo[1] + dv * static_cast<float>(j) / nv;
            pts.push_back(p);
            labels.push_back(cls);
        }
    }
    auto vid = [&](int i, int j) { return base + i * (nv + 1) + j; };
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
            faces.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
            faces.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
        }
    }
}

struct Ray {
    std::array<double, 3> origin;
    std::array<double, 3> dir;
};

// Nearest rectangle hit; returns the ray parameter (camera-space z when the
// direction has unit camera-z) or 0 with cls -1 on a miss.
std::pair<double, std::int32_t> cast_ray(const Ray& ray, const std::vector<Rect>& rects) {
    double best = std::numeric_limits<double>::infinity();
    std::int32_t cls = -1;
    for (const Rect& r : rects) {
        const double da = ray.dir[static_cast<std::size_t>(r.axis)];
        if (std::abs(da) < 1e-12) continue;
        const double t = (static_cast<double>(r.coord) - ray.origin[static_cast<std::size_t>(r.axis)]) / da;
        if (t <= 1e-6 || t >= best) continue;
        const int u = (r.axis + 1) % 3;
        const int v = (r.axis + 2) % 3;
        const double pu = ray.origin[static_cast<std::size_t>(u)] + t * ray.dir[static_cast<std::size_t>(u)];
        const double pv = ray.origin[static_cast<std::size_t>(v)] + t * ray.dir[static_cast<std::size_t>(v)];
        if (pu < r.lo[0] || pu > r.hi[0] || pv < r.lo[1] || pv > r.hi[1]) continue;
        best = t;
        cls = r.cls;
    }
    if (cls < 0) return {0.0, -1};
    return {best, cls};
}

CameraView make_camera(const std::array<float, 3>& eye, const std::array<float, 3>& target,
                       int width, int height, float fov_deg) {
    auto sub = [](const std::array<float, 3>& a, const std::array<float, 3>& b) {
        return std::array<float, 3>{a[0] - b[0], a[1] - b[1], a[2] - b[2]};
    };
    auto cross = [](const std::array<float, 3>& a, const std::array<float, 3>& b) {
        return std::array<float, 3>{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                                    a[0] * b[1] - a[1] * b[0]};
    };
    auto normalize = [](std::array<float, 3> a) {
        const float len = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
        return std::array<float, 3>{a[0] / len, a[1] / len, a[2] / len};
    };

    const auto forward = normalize(sub(target, eye));
    const auto right = normalize(cross(forward, {0, 0, 1}));
    const auto down = cross(forward, right);

    CameraView cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = 0.5f * static_cast<float>(width) /
                      std::tan(0.5f * fov_deg * std::numbers::pi_v<float> / 180.0f);
    cam.cx = 0.5f * static_cast<float>(width - 1);
    cam.cy = 0.5f * static_cast<float>(height - 1);

    const std::array<std::array<float, 3>, 3> rot{right, down, forward};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c)
            cam.world_to_camera[static_cast<std::size_t>(4 * r + c)] =
                rot[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        cam.world_to_camera[static_cast<std::size_t>(4 * r + 3)] =
            -(rot[static_cast<std::size_t>(r)][0] * eye[0] + rot[static_cast<std::size_t>(r)][1] * eye[1] +
              rot[static_cast<std::size_t>(r)][2] * eye[2]);
    }
    cam.world_to_camera[15] = 1.0f;
    cam.depth = Tensor({static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
    return cam;
}

Tensor orthonormal_embeddings(std::size_t k, std::size_t c, std::mt19937_64& rng) {
    if (k > c)
        throw ValidationError("synth: class count exceeds channels, embeddings cannot be orthonormal");
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> rows(k, std::vector<double>(c));
    for (auto& row : rows)
        for (double& v : row) v = gauss(rng);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double proj = 0;
            for (std::size_t a = 0; a < c; ++a) proj += rows[i][a] * rows[j][a];
            for (std::size_t a = 0; a < c; ++a) rows[i][a] -= proj * rows[j][a];
        }
        double norm = 0;
        for (double v : rows[i]) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-9) throw ValidationError("synth: degenerate random embedding basis");
        for (double& v : rows[i]) v /= norm;
    }
    Tensor out({k, c});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t a = 0; a < c; ++a) out(i, a) = static_cast<float>(rows[i][a]);
    return out;
}

}  // namespace

void SyntheticSceneSpec::validate() const {
    if (primitives.empty()) throw EmptySpec("synth: no primitives");
    if (camera_count < 1) throw EmptySpec("synth: no cameras");
    if (classes.size() < 2) throw ValidationError("synth: need at least two classes");
    std::set<std::string> names(classes.begin(), classes.end());
    if (names.size() != classes.size()) throw ValidationError("synth: duplicate class names");
    for (const PrimitiveSpec& p : primitives) {
        if (p.kind != "box" && p.kind != "plane")
            throw ValidationError("synth: unknown primitive kind '" + p.kind + "'");
        if (!names.count(p.label))
            throw ValidationError("synth: primitive label '" + p.label + "' not in class list");
        int zero_extents = 0;
        for (float s : p.size) {
            if (s < 0) throw ValidationError("synth: negative primitive extent");
            zero_extents += (s == 0.0f) ? 1 : 0;
        }
        if (p.kind == "plane" && zero_extents != 1)
            throw ValidationError("synth: a plane needs exactly one zero extent");
        if (p.kind == "box" && zero_extents != 0)
            throw ValidationError("synth: a box needs three positive extents");
    }
    for (const SynthModelSpec& m : models) {
        if (m.id.empty()) throw ValidationError("synth: model with empty id");
        if (m.source != "dense" && m.source != "mask")
            throw ValidationError("synth: unknown model source '" + m.source + "'");
        for (const auto& [cls, corr] : m.corruption) {
            if (!names.count(cls) || !names.count(corr.target))
                throw ValidationError("synth: corruption entry names unknown class");
            if (corr.rate < 0 || corr.rate > 1)
                throw ValidationError("synth: corruption rate outside [0,1]");
            if (corr.target == cls)
                throw ValidationError("synth: corruption target equals the class itself");
        }
    }
    if (image_width < 8 || image_height < 8) throw ValidationError("synth: image too small");
    if (!(camera_radius > 0) || !(grid_step > 0) || !(fov_deg > 0) || fov_deg >= 180)
        throw ValidationError("synth: camera or sampling parameter out of range");
    if (channels < 2) throw ValidationError("synth: need at least two feature channels");
    if (feature_noise < 0) throw ValidationError("synth: negative feature noise");
    if (capability_samples < 1) throw ValidationError("synth: capability_samples must be >= 1");
}

SynthResult synth_generate(const SyntheticSceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t k = spec.classes.size();
    const std::size_t c = static_cast<std::size_t>(spec.channels);
    const std::size_t h = static_cast<std::size_t>(spec.image_height);
    const std::size_t w = static_cast<std::size_t>(spec.image_width);

    SynthResult out;

    auto class_index = [&](const std::string& name) {
        for (std::size_t i = 0; i < k; ++i)
            if (spec.classes[i] == name) return static_cast<std::int32_t>(i);
        throw ValidationError("synth: unknown class '" + name + "'");
    };

    {
        auto rng = stream(seed, "class-embeddings");
        out.classes.names = spec.classes;
        out.classes.vectors = orthonormal_embeddings(k, c, rng);
    }

    // Geometry: rectangles for ray casting, grid meshes for the point cloud.
    std::vector<Rect> rects;
    std::vector<std::array<float, 3>> pts;
    std::vector<std::int32_t> labels;
    for (const PrimitiveSpec& p : spec.primitives) {
        const std::int32_t cls = class_index(p.label);
        std::vector<Rect> prim_rects;
        append_rects(p, cls, prim_rects);
        for (const Rect& r : prim_rects) {
            mesh_rect(r, spec.grid_step, cls, pts, labels, out.scene.faces);
            rects.push_back(r);
        }
    }
    out.scene.points = Tensor({pts.size(), 3});
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t a = 0; a < 3; ++a) out.scene.points(i, a) = pts[i][a];
    out.scene.labels = std::move(labels);
    out.scene.validate();

    // Scene centroid as the common camera target.
    std::array<float, 3> target{0, 0, 0};
    {
        std::array<double, 3> acc{0, 0, 0};
        for (const auto& p : pts)
            for (std::size_t a = 0; a < 3; ++a) acc[a] += p[a];
        for (std::size_t a = 0; a < 3; ++a)
            target[a] = static_cast<float>(acc[a] / static_cast<double>(pts.size()));
    }

    std::normal_distribution<float> jitter(0.0f, 1.0f);
    const float noise = spec.feature_noise;

    for (int v = 0; v < spec.camera_count; ++v) {
        const float angle = 2.0f * std::numbers::pi_v<float> * static_cast<float>(v) /
                            static_cast<float>(spec.camera_count);
        const std::array<float, 3> eye{target[0] + spec.camera_radius * std::cos(angle),
                                       target[1] + spec.camera_radius * std::sin(angle),
                                       spec.camera_height};
        SynthViewData view;
        view.view = make_camera(eye, target, spec.image_width, spec.image_height, spec.fov_deg);
        view.pixel_classes = TensorI32({h, w});

        const auto& m = view.view.world_to_camera;
        const std::array<double, 3> origin{
            -(m[0] * m[3] + m[4] * m[7] + m[8] * m[11]),
            -(m[1] * m[3] + m[5] * m[7] + m[9] * m[11]),
            -(m[2] * m[3] + m[6] * m[7] + m[10] * m[11])};
        for (std::size_t row = 0; row < h; ++row) {
            for (std::size_t col = 0; col < w; ++col) {
                const double dx = (static_cast<double>(col) - view.view.cx) / view.view.fx;
                const double dy = (static_cast<double>(row) - view.view.cy) / view.view.fy;
                // Camera ray with unit camera-z so the hit parameter is z-depth.
                Ray ray;
                ray.origin = origin;
                ray.dir = {m[0] * dx + m[4] * dy + m[8], m[1] * dx + m[5] * dy + m[9],
                           m[2] * dx + m[6] * dy + m[10]};
                const auto [depth, cls] = cast_ray(ray, rects);
                view.view.depth(row, col) = static_cast<float>(depth);
                view.pixel_classes(row, col) = cls;
            }
        }
        view.view.validate();

        for (std::size_t mi = 0; mi < spec.models.size(); ++mi) {
            const SynthModelSpec& model = spec.models[mi];
            auto rng = stream(seed, "features/" + model.id + "/" + std::to_string(v));
            std::uniform_real_distribution<float> coin(0.0f, 1.0f);

            // Emitted class per pixel (dense) or per class region (mask).
            std::vector<std::int32_t> emitted(k);
            for (std::size_t cls = 0; cls < k; ++cls) emitted[cls] = static_cast<std::int32_t>(cls);
            if (model.source == "mask") {
                for (std::size_t cls = 0; cls < k; ++cls) {
                    auto it = model.corruption.find(spec.classes[cls]);
                    if (it == model.corruption.end()) continue;
                    if (coin(rng) < it->second.rate) emitted[cls] = class_index(it->second.target);
                }
            }

            Tensor fm({h, w, c});
            MaskLabelSet mask_set;
            std::vector<std::int32_t> mask_class;
            if (model.source == "mask") {
                for (std::size_t cls = 0; cls < k; ++cls) {
                    TensorU8 mask({h, w});
                    bool any = false;
                    for (std::size_t i = 0; i < h * w; ++i) {
                        if (view.pixel_classes.data[i] == static_cast<std::int32_t>(cls)) {
                            mask.data[i] = 1;
                            any = true;
                        }
                    }
                    if (!any) continue;
                    const std::string& true_name = spec.classes[cls];
                    const std::string emitted_name =
                        spec.classes[static_cast<std::size_t>(emitted[cls])];
                    const std::string caption = "a rendered " + true_name;
                    mask_set.masks.push_back(std::move(mask));
                    mask_set.labels.push_back(emitted_name);
                    mask_set.captions.push_back(caption);
                    mask_set.noun_spans.emplace_back(std::string("a rendered ").size(),
                                                     caption.size());
                    mask_class.push_back(emitted[cls]);
                }
                mask_set.embeddings = Tensor({mask_set.masks.size(), c});
                for (std::size_t row = 0; row < mask_set.masks.size(); ++row) {
                    const float* e =
                        out.classes.vectors.row(static_cast<std::size_t>(mask_class[row]));
                    float* dst = mask_set.embeddings.row(row);
                    for (std::size_t j = 0; j < c; ++j) dst[j] = e[j] + noise * jitter(rng);
                }
                l2_normalize_rows_inplace(mask_set.embeddings);
                const RasterizedFeatures raster = rasterize_mask_features(
                    mask_set, spec.image_width, spec.image_height, spec.channels);
                fm = raster.features;
            } else {
                for (std::size_t i = 0; i < h * w; ++i) {
                    const std::int32_t cls = view.pixel_classes.data[i];
                    if (cls < 0) continue;
                    std::int32_t emit = cls;
                    auto it = model.corruption.find(spec.classes[static_cast<std::size_t>(cls)]);
                    if (it != model.corruption.end() && coin(rng) < it->second.rate)
                        emit = class_index(it->second.target);
                    const float* e = out.classes.vectors.row(static_cast<std::size_t>(emit));
                    float* dst = fm.data.data() + i * c;
                    for (std::size_t j = 0; j < c; ++j) dst[j] = e[j] + noise * jitter(rng);
                    const float norm = std::sqrt(kernels::squared_norm(dst, c));
                    if (norm > 0) kernels::scale(dst, c, 1.0f / norm);
                }
            }
            view.feature_maps.push_back(std::move(fm));
            view.mask_sets.push_back(std::move(mask_set));
        }
        out.views.push_back(std::move(view));
    }

    // Capability corpora: per model and class, pairs of identical rectangle
    // masks, emptied on corrupted draws so the mean IoU estimates 1 - rate.
    out.capability_corpus.resize(spec.models.size());
    for (std::size_t mi = 0; mi < spec.models.size(); ++mi) {
        const SynthModelSpec& model = spec.models[mi];
        out.capability_corpus[mi].resize(k);
        for (std::size_t cls = 0; cls < k; ++cls) {
            auto rng = stream(seed, "capability/" + model.id + "/" + spec.classes[cls]);
            std::uniform_real_distribution<float> coin(0.0f, 1.0f);
            std::uniform_int_distribution<int> pos(0, 15);
            std::uniform_int_distribution<int> ext(4, 8);
            float rate = 0.0f;
            auto it = model.corruption.find(spec.classes[cls]);
            if (it != model.corruption.end()) rate = it->second.rate;
            for (int s = 0; s < spec.capability_samples; ++s) {
                MaskPair pair;
                pair.pseudo = TensorU8({24, 24});
                const int r0 = pos(rng), c0 = pos(rng), rh = ext(rng), cw = ext(rng);
                for (int r = r0; r < std::min(24, r0 + rh); ++r)
                    for (int cc = c0; cc < std::min(24, c0 + cw); ++cc)
                        pair.pseudo(static_cast<std::size_t>(r), static_cast<std::size_t>(cc)) = 1;
                pair.model = (coin(rng) < rate) ? TensorU8({24, 24}) : pair.pseudo;
                out.capability_corpus[mi][cls].push_back(std::move(pair));
            }
        }
    }
    return out;
}

namespace {

std::string view_tag(int v) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%03d", v);
    return buf;
}

}  // namespace

void write_synth(const SynthResult& result, const SyntheticSceneSpec& spec, std::uint64_t seed,
                 const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "views");
    fs::create_directories(out_dir / "capability");

    io::write_ply(result.scene, out_dir / "scene.ply");
    TensorI32 gt({result.scene.size()});
    std::copy(result.scene.labels.begin(), result.scene.labels.end(), gt.data.begin());
    io::write_tensor(gt, out_dir / "gt_labels.ovt");
    save_class_embeddings(result.classes, out_dir / "classes.json", "class_embeddings.ovt");

    nlohmann::json models_json = nlohmann::json::array();
    for (std::size_t mi = 0; mi < spec.models.size(); ++mi) {
        const SynthModelSpec& model = spec.models[mi];
        nlohmann::json entry;
        entry["id"] = model.id;
        nlohmann::json cams = nlohmann::json::array();
        nlohmann::json mask_sets = nlohmann::json::array();

        for (std::size_t v = 0; v < result.views.size(); ++v) {
            const SynthViewData& view = result.views[v];
            const std::string tag = view_tag(static_cast<int>(v));
            const std::string depth_rel = "depth_" + tag + ".ovt";
            if (mi == 0) {
                io::write_tensor(view.view.depth, out_dir / "views" / depth_rel);
                io::write_tensor(view.pixel_classes, out_dir / "views" / ("gtclass_" + tag + ".ovt"));
            }

            const std::string cam_rel = "cam_" + model.id + "_" + tag + ".json";
            if (model.source == "dense") {
                const std::string feat_rel = "feat_" + model.id + "_" + tag + ".ovt";
                io::write_tensor(view.feature_maps[mi], out_dir / "views" / feat_rel);
                write_camera_manifest(view.view, depth_rel, feat_rel,
                                      out_dir / "views" / cam_rel);
            } else {
                write_camera_manifest(view.view, depth_rel, "", out_dir / "views" / cam_rel);
                // Mask-model inputs: one PGM per mask plus the manifest.
                const MaskLabelSet& ms = view.mask_sets[mi];
                const std::string set_dir = "masks_" + model.id + "_" + tag;
                fs::create_directories(out_dir / "views" / set_dir);
                nlohmann::json masks = nlohmann::json::array();
                for (std::size_t i = 0; i < ms.masks.size(); ++i) {
                    char mb[16];
                    std::snprintf(mb, sizeof(mb), "mask_%02zu.pgm", i);
                    io::write_pgm(ms.masks[i], out_dir / "views" / set_dir / mb);
                    masks.push_back({{"mask", set_dir + "/" + mb},
                                     {"label", ms.labels[i]},
                                     {"caption", ms.captions[i]},
                                     {"noun_span", {ms.noun_spans[i].first, ms.noun_spans[i].second}}});
                }
                const std::string emb_rel = "maskemb_" + model.id + "_" + tag + ".ovt";
                io::write_tensor(ms.embeddings, out_dir / "views" / emb_rel);
                nlohmann::json manifest;
                manifest["masks"] = masks;
                manifest["embeddings"] = emb_rel;
                const std::string set_rel = "maskset_" + model.id + "_" + tag + ".json";
                std::ofstream mf(out_dir / "views" / set_rel, std::ios::trunc);
                if (!mf) throw IoFailure("cannot write mask manifest for view " + tag);
                mf << manifest.dump(2) << "\n";
                mask_sets.push_back("views/" + set_rel);
            }
            cams.push_back("views/" + cam_rel);
        }
        entry["cameras"] = cams;
        if (model.source == "mask") entry["mask_sets"] = mask_sets;

        // Capability corpus manifest and PGMs.
        nlohmann::json classes = nlohmann::json::object();
        const fs::path mask_dir = out_dir / "capability" / model.id;
        fs::create_directories(mask_dir);
        for (std::size_t cls = 0; cls < spec.classes.size(); ++cls) {
            nlohmann::json pairs = nlohmann::json::array();
            for (std::size_t s = 0; s < result.capability_corpus[mi][cls].size(); ++s) {
                const MaskPair& p = result.capability_corpus[mi][cls][s];
                char pb[64], mb[64];
                std::snprintf(pb, sizeof(pb), "%s/c%02zu_s%02zu_pseudo.pgm", model.id.c_str(), cls, s);
                std::snprintf(mb, sizeof(mb), "%s/c%02zu_s%02zu_model.pgm", model.id.c_str(), cls, s);
                io::write_pgm(p.pseudo, out_dir / "capability" / pb);
                io::write_pgm(p.model, out_dir / "capability" / mb);
                pairs.push_back({{"pseudo_mask", pb}, {"model_mask", mb}});
            }
            classes[spec.classes[cls]] = pairs;
        }
        nlohmann::json corpus;
        corpus["model_id"] = model.id;
        corpus["classes"] = classes;
        const std::string corpus_rel = "capability/corpus_" + model.id + ".json";
        std::ofstream cf(out_dir / corpus_rel, std::ios::trunc);
        if (!cf) throw IoFailure("cannot write capability corpus for " + model.id);
        cf << corpus.dump(2) << "\n";
        entry["capability_corpus"] = corpus_rel;
        models_json.push_back(entry);
    }

    nlohmann::json cfg;
    cfg["scene"] = "scene.ply";
    cfg["labels"] = "gt_labels.ovt";
    cfg["classes"] = "classes.json";
    cfg["sigma_rel"] = 0.2;
    cfg["voxel_size"] = 0.0;
    cfg["tau"] = 0.1;
    cfg["superpoints"] = {{"mode", "mesh"}, {"k", 0.02}, {"min_size", 50}};
    cfg["schedule"] = {{"epochs", 100},     {"phase1", 70},  {"alpha", 0.9},
                       {"tau_ce", 0.07},    {"lr", 0.01},    {"lr_final_scale", 0.1},
                       {"hidden", 64},      {"frequencies", 8}, {"seed", seed}};
    cfg["models"] = models_json;
    std::ofstream pf(out_dir / "pipeline.json", std::ios::trunc);
    if (!pf) throw IoFailure("cannot write pipeline config");
    pf << cfg.dump(2) << "\n";
}

SyntheticSceneSpec load_synth_spec(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open: " + path.string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError(path.string() + ": malformed JSON");

    auto reject_unknown = [&](const nlohmann::json& obj, const std::set<std::string>& known,
                              const std::string& where) {
        for (const auto& [key, value] : obj.items()) {
            (void)value;
            if (!known.count(key))
                throw ValidationError(path.string() + ": unknown key '" + key + "' in " + where);
        }
    };

    SyntheticSceneSpec spec;
    try {
        reject_unknown(j, {"primitives", "classes", "models", "camera_count", "camera_radius",
                           "camera_height", "image_width", "image_height", "fov_deg", "grid_step",
                           "channels", "feature_noise", "capability_samples"},
                       "spec");
        for (const auto& p : j.at("primitives")) {
            reject_unknown(p, {"kind", "center", "size", "label", "closed"}, "primitive");
            PrimitiveSpec prim;
            prim.kind = p.at("kind").get<std::string>();
            for (std::size_t a = 0; a < 3; ++a) {
                prim.center[a] = p.at("center").at(a).get<float>();
                prim.size[a] = p.at("size").at(a).get<float>();
            }
            prim.label = p.at("label").get<std::string>();
            if (p.contains("closed")) prim.closed = p["closed"].get<bool>();
            spec.primitives.push_back(prim);
        }
        for (const auto& n : j.at("classes")) spec.classes.push_back(n.get<std::string>());
        if (j.contains("models")) {
            for (const auto& m : j["models"]) {
                reject_unknown(m, {"id", "source", "corruption"}, "model");
                SynthModelSpec model;
                model.id = m.at("id").get<std::string>();
                if (m.contains("source")) model.source = m["source"].get<std::string>();
                if (m.contains("corruption")) {
                    for (const auto& [cls, entry] : m["corruption"].items()) {
                        reject_unknown(entry, {"target", "rate"}, "corruption entry");
                        model.corruption[cls] = {entry.at("target").get<std::string>(),
                                                 entry.at("rate").get<float>()};
                    }
                }
                spec.models.push_back(std::move(model));
            }
        }
        if (j.contains("camera_count")) spec.camera_count = j["camera_count"].get<int>();
        if (j.contains("camera_radius")) spec.camera_radius = j["camera_radius"].get<float>();
        if (j.contains("camera_height")) spec.camera_height = j["camera_height"].get<float>();
        if (j.contains("image_width")) spec.image_width = j["image_width"].get<int>();
        if (j.contains("image_height")) spec.image_height = j["image_height"].get<int>();
        if (j.contains("fov_deg")) spec.fov_deg = j["fov_deg"].get<float>();
        if (j.contains("grid_step")) spec.grid_step = j["grid_step"].get<float>();
        if (j.contains("channels")) spec.channels = j["channels"].get<int>();
        if (j.contains("feature_noise")) spec.feature_noise = j["feature_noise"].get<float>();
        if (j.contains("capability_samples"))
            spec.capability_samples = j["capability_samples"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    spec.validate();
    return spec;
}

}  // namespace ovfuse
