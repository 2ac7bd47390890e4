#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ovfuse/capability.hpp"
#include "ovfuse/fusion.hpp"
#include "ovfuse/geometry.hpp"
#include "ovfuse/scene.hpp"
#include "ovfuse/text_bridge.hpp"

namespace ovfuse {

// Axis-aligned labeled primitive. A plane has exactly one zero extent; a
// box meshes five faces (no bottom) unless closed is set, so ring cameras
// can see every generated point.
struct PrimitiveSpec {
    std::string kind;  // "box" | "plane"
    std::array<float, 3> center{0, 0, 0};
    std::array<float, 3> size{1, 1, 1};
    std::string label;
    bool closed = false;
};

struct CorruptionSpec {
    std::string target;  // confusion class the model emits instead
    float rate = 0;      // probability of mislabeling
};

// One synthetic 2D model. "dense" models corrupt per pixel; "mask" models
// emit mask/label/caption sets and corrupt whole regions per view.
struct SynthModelSpec {
    std::string id;
    std::string source = "dense";  // "dense" | "mask"
    std::map<std::string, CorruptionSpec> corruption;  // keyed by class name
};

struct SyntheticSceneSpec {
    std::vector<PrimitiveSpec> primitives;
    std::vector<std::string> classes;
    std::vector<SynthModelSpec> models;
    int camera_count = 8;
    float camera_radius = 3.0f;
    float camera_height = 2.0f;
    int image_width = 96;
    int image_height = 72;
    float fov_deg = 70.0f;
    float grid_step = 0.05f;
    int channels = 16;
    float feature_noise = 0.05f;
    int capability_samples = 20;  // mask pairs per class (m)

    void validate() const;
};

SyntheticSceneSpec load_synth_spec(const std::filesystem::path& path);

struct SynthViewData {
    CameraView view;
    TensorI32 pixel_classes;             // [H,W], -1 where no surface
    std::vector<Tensor> feature_maps;    // per model, [H,W,C]
    std::vector<MaskLabelSet> mask_sets; // per model, populated for "mask" sources
};

struct SynthResult {
    PointScene scene;  // vertices labeled with class indices, mesh faces present
    ClassEmbeddings classes;
    std::vector<SynthViewData> views;
    // per model, per class: capability mask pairs
    std::vector<std::vector<std::vector<MaskPair>>> capability_corpus;
};

// Fully deterministic per (spec, seed): ray-cast depth against the
// primitives analytically, per-model feature maps carrying the class
// embedding of the emitted (possibly corrupted) class, and capability
// corpora whose per-class mean IoU estimates 1 - corruption rate.
SynthResult synth_generate(const SyntheticSceneSpec& spec, std::uint64_t seed);

// Writes the scene, views, per-model inputs, capability corpora and a
// ready-to-run pipeline config under out_dir.
void write_synth(const SynthResult& result, const SyntheticSceneSpec& spec,
                 std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace ovfuse
