#include "ovfuse/text_bridge.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ovfuse/tensor_io.hpp"

namespace ovfuse {

std::string caption_substitute(const std::string& caption, std::size_t begin, std::size_t end,
                               const std::string& label) {
    if (begin >= end || end > caption.size())
        throw InvalidSpan("caption_substitute: span [" + std::to_string(begin) + "," +
                          std::to_string(end) + ") invalid for caption of " +
                          std::to_string(caption.size()) + " bytes");
    std::string out;
    out.reserve(caption.size() - (end - begin) + label.size());
    out.append(caption, 0, begin);
    out.append(label);
    out.append(caption, end, caption.size() - end);
    return out;
}

std::pair<std::size_t, std::size_t> final_token_span(const std::string& caption) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    std::size_t end = caption.size();
    while (end > 0 && is_space(caption[end - 1])) --end;
    std::size_t begin = end;
    while (begin > 0 && !is_space(caption[begin - 1])) --begin;
    if (begin == end) throw InvalidSpan("final_token_span: caption has no token");
    return {begin, end};
}

RasterizedFeatures rasterize_mask_features(const MaskLabelSet& set, int width, int height,
                                           int channels) {
    const std::size_t n = set.masks.size();
    if (set.embeddings.rank() != 2 || set.embeddings.dim(0) != n)
        throw EmbeddingCountMismatch("rasterize_mask_features: need one embedding row per mask (" +
                                     std::to_string(n) + " masks)");
    if (set.embeddings.dim(1) != static_cast<std::size_t>(channels))
        throw EmbeddingCountMismatch("rasterize_mask_features: embedding width differs from channels");

    const std::size_t h = static_cast<std::size_t>(height);
    const std::size_t w = static_cast<std::size_t>(width);
    RasterizedFeatures out;
    out.features = Tensor({h, w, static_cast<std::size_t>(channels)});
    out.coverage = TensorU8({h, w});

    for (std::size_t m = 0; m < n; ++m) {
        const TensorU8& mask = set.masks[m];
        if (mask.rank() != 2 || mask.dim(0) != h || mask.dim(1) != w)
            throw ValidationError("rasterize_mask_features: mask " + std::to_string(m) +
                                  " shape differs from the frame");
        const float* emb = set.embeddings.row(m);
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                if (!mask(r, c)) continue;
                std::memcpy(&out.features(r, c, 0), emb,
                            static_cast<std::size_t>(channels) * sizeof(float));
                out.coverage(r, c) = 1;
            }
        }
    }
    return out;
}

MaskLabelSet load_mask_label_set(const std::filesystem::path& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw IoFailure("cannot open: " + manifest_path.string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError(manifest_path.string() + ": malformed JSON");

    MaskLabelSet out;
    const auto base = manifest_path.parent_path();
    try {
        for (const auto& e : j.at("masks")) {
            out.masks.push_back(io::read_pgm(base / e.at("mask").get<std::string>()));
            out.labels.push_back(e.at("label").get<std::string>());
            out.captions.push_back(e.at("caption").get<std::string>());
            if (e.contains("noun_span")) {
                const auto& s = e["noun_span"];
                out.noun_spans.emplace_back(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>());
            } else {
                out.noun_spans.push_back(final_token_span(out.captions.back()));
            }
        }
        if (j.contains("embeddings"))
            out.embeddings = io::read_tensor_f32(base / j.at("embeddings").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(manifest_path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace ovfuse
