#include "ovfuse/capability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "ovfuse/tensor_io.hpp"

namespace ovfuse {

void AttentionStack::validate() const {
    if (maps.rank() != 4) throw ValidationError("attention stack: tensor must be [Y,Z,h,w]");
    if (maps.dim(0) < 1 || maps.dim(1) < 1)
        throw ValidationError("attention stack: need at least one layer and one step");
    for (float v : maps.data)
        if (v < 0) throw ValidationError("attention stack: negative attention value");
}

Tensor aggregate_attention(const AttentionStack& stack) {
    stack.validate();
    const std::size_t ny = stack.maps.dim(0);
    const std::size_t nz = stack.maps.dim(1);
    const std::size_t h = stack.maps.dim(2);
    const std::size_t w = stack.maps.dim(3);
    const std::size_t hw = h * w;

    std::vector<double> acc(hw, 0.0);
    for (std::size_t y = 0; y < ny; ++y) {
        for (std::size_t z = 0; z < nz; ++z) {
            const float* map = &stack.maps(y, z, 0, 0);
            const float mx = *std::max_element(map, map + hw);
            if (mx <= 0)
                throw ZeroMap("aggregate_attention: map at layer " + std::to_string(y) +
                              ", step " + std::to_string(z) + " is identically zero");
            const double inv = 1.0 / mx;
            for (std::size_t i = 0; i < hw; ++i) acc[i] += map[i] * inv;
        }
    }

    Tensor out({h, w});
    const double inv_count = 1.0 / static_cast<double>(ny * nz);
    for (std::size_t i = 0; i < hw; ++i) out.data[i] = static_cast<float>(acc[i] * inv_count);
    return out;
}

TensorU8 binarize_coarse_mask(const Tensor& m, float threshold) {
    if (m.rank() != 2) throw ValidationError("binarize_coarse_mask: map must be rank 2");
    if (!(threshold > 0.0f && threshold < 1.0f))
        throw ValidationError("binarize_coarse_mask: threshold must lie in (0,1)");
    const float mx = m.data.empty() ? 0.0f : *std::max_element(m.data.begin(), m.data.end());
    const float cut = threshold * mx;
    TensorU8 out({m.dim(0), m.dim(1)});
    for (std::size_t i = 0; i < m.numel(); ++i) out.data[i] = m.data[i] >= cut ? 1 : 0;
    return out;
}

std::vector<PixelCoord> sample_prompt_points(const TensorU8& mask, int k, std::uint64_t seed) {
    if (mask.rank() != 2) throw ValidationError("sample_prompt_points: mask must be rank 2");
    const std::size_t h = mask.dim(0);
    const std::size_t w = mask.dim(1);

    std::vector<PixelCoord> pixels;
    double crow = 0, ccol = 0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (!mask(r, c)) continue;
            pixels.push_back({static_cast<std::int32_t>(r), static_cast<std::int32_t>(c)});
            crow += static_cast<double>(r);
            ccol += static_cast<double>(c);
        }
    }
    if (pixels.empty()) throw EmptyMask("sample_prompt_points: mask has no true pixel");
    crow /= static_cast<double>(pixels.size());
    ccol /= static_cast<double>(pixels.size());

    std::mt19937_64 rng(seed);
    auto pick_tied = [&rng](const std::vector<std::size_t>& candidates) {
        if (candidates.size() == 1) return candidates[0];
        return candidates[rng() % candidates.size()];
    };

    auto sq = [](double v) { return v * v; };

    // Start: true pixel nearest the centroid.
    std::vector<std::size_t> best;
    double best_d = 0;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double d = sq(pixels[i].row - crow) + sq(pixels[i].col - ccol);
        if (best.empty() || d < best_d) {
            best.assign(1, i);
            best_d = d;
        } else if (d == best_d) {
            best.push_back(i);
        }
    }

    const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)),
                                                   pixels.size());
    std::vector<PixelCoord> out;
    if (want == 0) return out;

    std::vector<double> min_d(pixels.size(), std::numeric_limits<double>::infinity());
    std::size_t current = pick_tied(best);
    out.push_back(pixels[current]);

    while (out.size() < want) {
        for (std::size_t i = 0; i < pixels.size(); ++i) {
            const double d = sq(pixels[i].row - pixels[current].row) +
                             sq(pixels[i].col - pixels[current].col);
            min_d[i] = std::min(min_d[i], d);
        }
        std::vector<std::size_t> far;
        double far_d = -1;
        for (std::size_t i = 0; i < pixels.size(); ++i) {
            if (min_d[i] == 0) continue;  // already selected
            if (min_d[i] > far_d) {
                far.assign(1, i);
                far_d = min_d[i];
            } else if (min_d[i] == far_d) {
                far.push_back(i);
            }
        }
        current = pick_tied(far);
        out.push_back(pixels[current]);
    }
    return out;
}

double mask_iou(const TensorU8& a, const TensorU8& b) {
    if (a.shape != b.shape) throw ShapeMismatch("mask_iou: mask shapes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const bool av = a.data[i] != 0;
        const bool bv = b.data[i] != 0;
        inter += (av && bv) ? 1 : 0;
        uni += (av || bv) ? 1 : 0;
    }
    if (uni == 0) return 1.0;  // both empty: the model correctly predicts "absent"
    return static_cast<double>(inter) / static_cast<double>(uni);
}

bool CapabilityTable::present(std::size_t cls) const {
    return cls < sample_counts.size() && sample_counts[cls] > 0;
}

double CapabilityTable::score(std::size_t cls) const {
    if (cls >= scores.size())
        throw AbsentClassScore("capability table '" + model_id + "': class index " +
                               std::to_string(cls) + " out of range");
    if (sample_counts[cls] <= 0)
        throw AbsentClassScore("capability table '" + model_id + "': class " +
                               std::to_string(cls) + " has no samples");
    return scores[cls];
}

CapabilityTable build_capability(const std::string& model_id,
                                 const std::vector<std::vector<MaskPair>>& per_class_pairs) {
    CapabilityTable out;
    out.model_id = model_id;
    out.scores.resize(per_class_pairs.size(), 0.0);
    out.sample_counts.resize(per_class_pairs.size(), 0);
    for (std::size_t j = 0; j < per_class_pairs.size(); ++j) {
        const auto& pairs = per_class_pairs[j];
        if (pairs.empty()) continue;  // marked absent
        double sum = 0.0;
        for (const MaskPair& p : pairs) sum += mask_iou(p.pseudo, p.model);
        out.scores[j] = sum / static_cast<double>(pairs.size());
        out.sample_counts[j] = static_cast<std::int32_t>(pairs.size());
    }
    return out;
}

std::string synthesis_prompt(const std::string& name) {
    if (name.empty()) throw EmptyName("synthesis_prompt: empty class name");
    return "a good photo of " + name;
}

CapabilityTable load_capability_corpus(const std::filesystem::path& manifest_path,
                                       const std::vector<std::string>& class_names) {
    std::ifstream f(manifest_path);
    if (!f) throw IoFailure("cannot open: " + manifest_path.string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError(manifest_path.string() + ": malformed JSON");

    const auto base = manifest_path.parent_path();
    std::vector<std::vector<MaskPair>> per_class(class_names.size());
    std::string model_id;
    try {
        model_id = j.at("model_id").get<std::string>();
        const auto& classes = j.at("classes");
        for (std::size_t c = 0; c < class_names.size(); ++c) {
            if (!classes.contains(class_names[c])) continue;
            for (const auto& e : classes.at(class_names[c])) {
                MaskPair p;
                p.pseudo = io::read_pgm(base / e.at("pseudo_mask").get<std::string>());
                p.model = io::read_pgm(base / e.at("model_mask").get<std::string>());
                per_class[c].push_back(std::move(p));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(manifest_path.string() + ": " + e.what());
    }
    return build_capability(model_id, per_class);
}

void save_capability_table(const CapabilityTable& table,
                           const std::vector<std::string>& class_names,
                           const std::filesystem::path& path) {
    if (class_names.size() != table.class_count())
        throw ValidationError("save_capability_table: class-name count differs from table");
    nlohmann::json scores = nlohmann::json::object();
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        if (table.present(c)) scores[class_names[c]] = table.scores[c];
    }
    nlohmann::json counts = nlohmann::json::object();
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        if (table.present(c)) counts[class_names[c]] = table.sample_counts[c];
    }
    nlohmann::json j;
    j["model_id"] = table.model_id;
    j["scores"] = scores;
    j["sample_counts"] = counts;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoFailure("cannot open for writing: " + path.string());
    f << j.dump(2) << "\n";
}

CapabilityTable load_capability_table(const std::filesystem::path& path,
                                      const std::vector<std::string>& class_names) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open: " + path.string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError(path.string() + ": malformed JSON");

    CapabilityTable out;
    out.scores.assign(class_names.size(), 0.0);
    out.sample_counts.assign(class_names.size(), 0);
    try {
        out.model_id = j.at("model_id").get<std::string>();
        const auto& scores = j.at("scores");
        for (std::size_t c = 0; c < class_names.size(); ++c) {
            if (!scores.contains(class_names[c])) continue;
            const double s = scores.at(class_names[c]).get<double>();
            if (s < 0.0 || s > 1.0)
                throw ValidationError(path.string() + ": score for '" + class_names[c] +
                                      "' outside [0,1]");
            out.scores[c] = s;
            out.sample_counts[c] = 1;
            if (j.contains("sample_counts") && j["sample_counts"].contains(class_names[c]))
                out.sample_counts[c] = j["sample_counts"][class_names[c]].get<std::int32_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace ovfuse
