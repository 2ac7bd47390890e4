#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ovfuse/tensor.hpp"

namespace ovfuse {

// Cross-attention maps for one class token, one map per UNet layer and
// diffusion step. Produced externally; consumed here as a [Y,Z,h,w] tensor.
struct AttentionStack {
    Tensor maps;  // [Y,Z,h,w], all values >= 0
    void validate() const;
};

// Mean over (layer, step) of each map divided by its own maximum. Output
// lies in [0,1].
Tensor aggregate_attention(const AttentionStack& stack);

// Pixel true iff m >= threshold * max(m), 0 < threshold < 1.
TensorU8 binarize_coarse_mask(const Tensor& m, float threshold);

struct PixelCoord {
    std::int32_t row = 0;
    std::int32_t col = 0;
    bool operator==(const PixelCoord&) const = default;
};

// Farthest-point sampling over the mask's true pixels, started from the
// true pixel nearest the mask centroid. Exact distance ties are resolved by
// a draw from the seeded generator, so results are deterministic per seed.
std::vector<PixelCoord> sample_prompt_points(const TensorU8& mask, int k, std::uint64_t seed);

// Foreground IoU between binary masks; 1.0 when both are empty.
double mask_iou(const TensorU8& a, const TensorU8& b);

// Per-class capability scores in [0,1] for one 2D model. Classes that
// contributed no mask pairs are absent and illegal to read.
struct CapabilityTable {
    std::string model_id;
    std::vector<double> scores;
    std::vector<std::int32_t> sample_counts;

    std::size_t class_count() const { return scores.size(); }
    bool present(std::size_t cls) const;
    double score(std::size_t cls) const;  // throws AbsentClassScore when absent
};

struct MaskPair {
    TensorU8 pseudo;  // reference mask (promptable-segmenter output)
    TensorU8 model;   // the scored model's mask
};

// scores[j] = mean IoU over the class's mask pairs.
CapabilityTable build_capability(const std::string& model_id,
                                 const std::vector<std::vector<MaskPair>>& per_class_pairs);

// Prompt used by image-synthesis producers.
std::string synthesis_prompt(const std::string& name);

// Corpus manifest JSON: {"model_id":.., "classes": {name: [{"pseudo_mask":
// "p.pgm", "model_mask": "m.pgm"}...]}}. Order of classes follows the given
// class-name list; names missing from the manifest come out absent.
CapabilityTable load_capability_corpus(const std::filesystem::path& manifest_path,
                                       const std::vector<std::string>& class_names);

void save_capability_table(const CapabilityTable& table,
                           const std::vector<std::string>& class_names,
                           const std::filesystem::path& path);
CapabilityTable load_capability_table(const std::filesystem::path& path,
                                      const std::vector<std::string>& class_names);

}  // namespace ovfuse
