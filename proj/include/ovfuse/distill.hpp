#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ovfuse/fusion.hpp"
#include "ovfuse/scene.hpp"
#include "ovfuse/superpoint.hpp"

namespace ovfuse {

struct ToyModelConfig {
    int hidden = 64;
    int frequencies = 8;  // per axis, sin+cos each: 6*frequencies inputs
    int channels = 0;
    float tau_ce = 0.07f;  // recorded for provenance, used by the trainer
    std::uint64_t seed = 0;
};

// Small per-point feature model standing in for the full 3D backbone:
// a 2-layer perceptron over sinusoidal encodings of (x,y,z), outputs
// L2-normalized. Deterministic given weights and inputs.
class ToyPointModel {
public:
    ToyPointModel() = default;
    // Initializes seeded weights and fits the input transform to the
    // bounding box of the given points.
    ToyPointModel(const ToyModelConfig& cfg, const Tensor& points);

    const ToyModelConfig& config() const { return cfg_; }
    int input_dim() const { return 6 * cfg_.frequencies; }

    Tensor forward(const Tensor& points) const;  // [N,C], unit rows

    struct Cache {
        Tensor encoded;  // [N,IN]
        Tensor hidden;   // [N,H] post-activation
        Tensor raw;      // [N,C] pre-normalization
        std::vector<float> raw_norm;
        Tensor output;   // [N,C] unit rows
    };
    const Tensor& forward_cached(const Tensor& points, Cache& cache) const;

    struct Gradients {
        Tensor w1, b1, w2, b2;
    };
    Gradients zero_gradients() const;
    // Accumulates parameter gradients for dLoss/dOutput (normalization
    // included in the chain).
    void backward(const Cache& cache, const Tensor& grad_output, Gradients& g) const;
    void step(const Gradients& g, float lr);

    void save(const std::filesystem::path& dir) const;
    static ToyPointModel load(const std::filesystem::path& dir);

private:
    ToyModelConfig cfg_;
    Tensor w1_, b1_, w2_, b2_;
    std::array<float, 3> center_{0, 0, 0};
    std::array<float, 3> scale_{1, 1, 1};

    void encode(const Tensor& points, Tensor& out) const;
};

// Temporal-ensembling buffer of per-point outputs. The first update copies
// the input exactly; later updates apply values = alpha*values +
// (1-alpha)*current.
struct EmaBuffer {
    Tensor values;
    float alpha = 0.9f;
    bool initialized = false;
};

void ema_update(EmaBuffer& buf, const Tensor& current);

struct DistillLoss {
    double total = 0;
    double point_level = 0;
    double super_level = 0;
    Tensor grad_points;  // d total / d f3d rows
    Tensor grad_pooled;  // d total / d pooled3d rows
};

// Point-level plus superpoint-level (1 - cosine) losses, averaged over the
// rows valid on both sides of each pair. Gradients treat f3d and pooled3d
// as free variables.
DistillLoss cosine_distill_loss(const PointFeatureSet& f3d, const PointFeatureSet& target,
                                const PointFeatureSet& pooled3d,
                                const PointFeatureSet& pooled_target);

struct PseudoLabels {
    std::vector<std::int32_t> point_labels;
    std::vector<std::int32_t> superpoint_labels;
};

// Argmax against the class embeddings at point level, and at superpoint
// level on the pooled-then-normalized buffer rows.
PseudoLabels pseudo_labels(const EmaBuffer& buf, const SuperpointPartition& part,
                           const ClassEmbeddings& emb);

// Softmax cross-entropy over similarity logits (feature . embedding / tau)
// against the pseudo labels, at point and superpoint level.
DistillLoss self_distill_loss(const PointFeatureSet& f3d, const PointFeatureSet& pooled3d,
                              const ClassEmbeddings& emb,
                              const std::vector<std::int32_t>& point_pseudo,
                              const std::vector<std::int32_t>& sp_pseudo, float tau_ce);

struct TrainSchedule {
    int total_epochs = 100;
    int phase1_epochs = 70;
    float learning_rate = 1e-2f;
    float lr_final_scale = 0.1f;  // linear decay to this fraction of the base rate
    float alpha = 0.9f;
    float tau_ce = 0.07f;
    int hidden = 64;
    int frequencies = 8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    float lr = 0;
    double point_loss = 0;
    double super_loss = 0;
    double ce_point_loss = 0;
    double ce_super_loss = 0;
    double total = 0;
};

struct TrainResult {
    ToyPointModel model;
    std::vector<EpochStats> log;
};

// Two-phase schedule: superpoint distillation alone for phase1_epochs, then
// both losses, with pseudo labels refreshed from the EMA buffer each epoch
// (the buffer absorbs the epoch's forward output before label extraction).
// The fused targets stay frozen throughout.
TrainResult train(const PointScene& scene, const PointFeatureSet& fused_targets,
                  const SuperpointPartition& part, const ClassEmbeddings& emb,
                  const TrainSchedule& sched);

void save_train_log(const std::vector<EpochStats>& log, const std::filesystem::path& path);

}  // namespace ovfuse
