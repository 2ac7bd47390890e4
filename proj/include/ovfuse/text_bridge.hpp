#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ovfuse/tensor.hpp"

namespace ovfuse {

// Mask/label/caption triples from a mask-style 2D model, plus the
// pre-encoded caption embeddings that put them in the shared text space.
struct MaskLabelSet {
    std::vector<TensorU8> masks;  // each [H,W], nonzero = member
    std::vector<std::string> labels;
    std::vector<std::string> captions;
    std::vector<std::pair<std::size_t, std::size_t>> noun_spans;  // byte [begin,end)
    Tensor embeddings;                                            // [n_masks, C]
};

// Replaces the caption's noun span with the model-predicted label; all other
// bytes are unchanged.
std::string caption_substitute(const std::string& caption, std::size_t begin, std::size_t end,
                               const std::string& label);

// Fallback span when the producer supplied none: the final
// whitespace-delimited token.
std::pair<std::size_t, std::size_t> final_token_span(const std::string& caption);

struct RasterizedFeatures {
    Tensor features;    // [H,W,C]
    TensorU8 coverage;  // [H,W], 1 where some mask covers the pixel
};

// Paints each mask's embedding onto its pixels; where masks overlap the
// mask with the largest index wins. Uncovered pixels stay zero and are
// excluded via the coverage mask.
RasterizedFeatures rasterize_mask_features(const MaskLabelSet& set, int width, int height,
                                           int channels);

// Manifest JSON: {"masks":[{"mask":"m.pgm","label":..,"caption":..,
// "noun_span":[b,e]}...], "embeddings":"emb.ovt"}; noun_span optional
// (falls back to the final token). Paths resolve against the manifest.
MaskLabelSet load_mask_label_set(const std::filesystem::path& manifest_path);

}  // namespace ovfuse
