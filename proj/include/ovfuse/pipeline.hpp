#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ovfuse/distill.hpp"

namespace ovfuse {

// One 2D-model input source: posed cameras whose manifests name dense
// feature maps, or mask-set manifests rasterized on the fly, plus the
// model's capability corpus.
struct PipelineModel {
    std::string id;
    std::vector<std::filesystem::path> cameras;
    std::vector<std::filesystem::path> mask_sets;  // empty for dense models
    std::filesystem::path capability_corpus;
};

struct SuperpointConfig {
    std::string mode = "mesh";  // "mesh" | "identity"
    float k = 0.02f;
    int min_size = 50;
};

struct PipelineConfig {
    std::filesystem::path scene;
    std::filesystem::path labels;  // optional i32 ground truth
    std::filesystem::path classes;
    std::filesystem::path label_map;  // optional
    float sigma_rel = 0.2f;
    float voxel_size = 0.0f;  // 0 = no downsampling
    float tau = 0.1f;
    SuperpointConfig superpoints;
    TrainSchedule schedule;
    std::vector<PipelineModel> models;

    void validate() const;
};

// Reads the config JSON (unknown keys rejected) and resolves relative paths
// against the config file's directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct PipelineOutputs {
    std::filesystem::path fused_features;
    std::filesystem::path superpoints;
    std::filesystem::path checkpoint_dir;
    std::filesystem::path metrics;        // empty when no ground truth
    std::filesystem::path manifest;
    double fused_miou = -1;    // -1 when no ground truth
    double model_miou = -1;
};

// Runs align -> capability -> fusion -> superpoints -> distill -> eval,
// writing stage outputs plus a manifest of config and artifact hashes.
// Rerunning on identical inputs produces bit-identical artifacts.
PipelineOutputs run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace ovfuse
