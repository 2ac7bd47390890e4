#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ovfuse/capability.hpp"
#include "ovfuse/scene.hpp"

namespace ovfuse {

inline constexpr std::int32_t kInvalidLabel = -1;

// Class vocabulary with unit-norm text embeddings, shared by fusion,
// distillation and evaluation.
struct ClassEmbeddings {
    std::vector<std::string> names;
    Tensor vectors;  // [K,C], rows L2-normalized

    std::size_t class_count() const { return names.size(); }
    std::size_t channels() const { return vectors.rank() == 2 ? vectors.dim(1) : 0; }
    void validate() const;
};

// JSON: {"names":[...], "embeddings":"emb.ovt"}; the embeddings entry is
// optional (capability corpora only need names). Rows are renormalized on
// load.
ClassEmbeddings load_class_embeddings(const std::filesystem::path& path,
                                      bool require_vectors = true);
void save_class_embeddings(const ClassEmbeddings& emb, const std::filesystem::path& json_path,
                           const std::filesystem::path& tensor_rel);

struct FusionConfig {
    float temperature = 0.1f;
    void validate() const;
};

// Per-point argmax class of feature-times-embedding similarity; ties break
// to the smallest class index, invalid points get kInvalidLabel.
std::vector<std::int32_t> point_predictions(const PointFeatureSet& f, const ClassEmbeddings& emb);

// Per-model per-point confidence: the model's mean capability score over
// the distinct classes predicted at that point by the models that see it.
// With two models this is exactly (S[predA]+S[predB])/2. Entries for points
// a model does not see are left at 0 and never consumed downstream.
std::vector<std::vector<float>> fusion_confidences(
    const std::vector<CapabilityTable>& tables,
    const std::vector<std::vector<std::int32_t>>& predictions);

// Two-model form.
std::pair<std::vector<float>, std::vector<float>> fusion_confidences(
    const CapabilityTable& cap_a, const CapabilityTable& cap_b,
    const std::vector<std::int32_t>& pred_a, const std::vector<std::int32_t>& pred_b);

// Softmax(conf/tau)-weighted convex combination of the model features,
// restricted per point to the models that see it; rows re-normalized.
PointFeatureSet fuse_features(const std::vector<const PointFeatureSet*>& sets,
                              const std::vector<std::vector<float>>& confidences,
                              const FusionConfig& cfg);

PointFeatureSet fuse_features(const PointFeatureSet& fa, const PointFeatureSet& fb,
                              const std::vector<float>& conf_a, const std::vector<float>& conf_b,
                              const FusionConfig& cfg);

}  // namespace ovfuse
