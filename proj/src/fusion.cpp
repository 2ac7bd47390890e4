#include "ovfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "ovfuse/kernels.hpp"
#include "ovfuse/tensor_io.hpp"

namespace ovfuse {

void ClassEmbeddings::validate() const {
    if (names.size() < 2) throw ValidationError("class embeddings: need at least two classes");
    std::unordered_set<std::string> seen;
    for (const std::string& n : names) {
        if (n.empty()) throw EmptyName("class embeddings: empty class name");
        if (!seen.insert(n).second)
            throw ValidationError("class embeddings: duplicate class name '" + n + "'");
    }
    if (vectors.rank() != 2 || vectors.dim(0) != names.size())
        throw ValidationError("class embeddings: vectors must be [K,C] with one row per name");
    for (std::size_t k = 0; k < names.size(); ++k) {
        const float n2 = kernels::squared_norm(vectors.row(k), vectors.dim(1));
        if (std::abs(n2 - 1.0f) > 1e-3f)
            throw ValidationError("class embeddings: row for '" + names[k] + "' is not unit norm");
    }
}

ClassEmbeddings load_class_embeddings(const std::filesystem::path& path, bool require_vectors) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open: " + path.string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError(path.string() + ": malformed JSON");

    ClassEmbeddings out;
    try {
        for (const auto& n : j.at("names")) out.names.push_back(n.get<std::string>());
        if (j.contains("embeddings")) {
            out.vectors =
                io::read_tensor_f32(path.parent_path() / j.at("embeddings").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    if (out.vectors.numel() == 0) {
        if (require_vectors)
            throw ValidationError(path.string() + ": class list carries no embeddings");
        return out;
    }
    const auto zeroed = l2_normalize_rows_inplace(out.vectors);
    for (std::size_t k = 0; k < zeroed.size(); ++k)
        if (zeroed[k])
            throw ValidationError(path.string() + ": embedding row " + std::to_string(k) +
                                  " is zero");
    out.validate();
    return out;
}

void save_class_embeddings(const ClassEmbeddings& emb, const std::filesystem::path& json_path,
                           const std::filesystem::path& tensor_rel) {
    nlohmann::json j;
    j["names"] = emb.names;
    if (emb.vectors.numel() > 0) {
        j["embeddings"] = tensor_rel.generic_string();
        io::write_tensor(emb.vectors, json_path.parent_path() / tensor_rel);
    }
    std::ofstream f(json_path, std::ios::trunc);
    if (!f) throw IoFailure("cannot open for writing: " + json_path.string());
    f << j.dump(2) << "\n";
}

void FusionConfig::validate() const {
    if (!(temperature > 0)) throw ValidationError("fusion: temperature must be positive");
}

std::vector<std::int32_t> point_predictions(const PointFeatureSet& f, const ClassEmbeddings& emb) {
    emb.validate();
    if (f.channels() != emb.channels())
        throw ChannelMismatch("point_predictions: feature channels (" +
                              std::to_string(f.channels()) + ") differ from embeddings (" +
                              std::to_string(emb.channels()) + ")");
    const std::size_t n = f.size();
    const std::size_t k = emb.class_count();
    const std::size_t c = f.channels();

    std::vector<std::int32_t> out(n, kInvalidLabel);
    for (std::size_t i = 0; i < n; ++i) {
        if (!f.valid[i]) continue;
        const float* row = f.features.row(i);
        std::int32_t best = 0;
        float best_score = kernels::dot(row, emb.vectors.row(0), c);
        for (std::size_t cls = 1; cls < k; ++cls) {
            const float s = kernels::dot(row, emb.vectors.row(cls), c);
            if (s > best_score) {  // strict: ties keep the smaller index
                best_score = s;
                best = static_cast<std::int32_t>(cls);
            }
        }
        out[i] = best;
    }
    return out;
}

std::vector<std::vector<float>> fusion_confidences(
    const std::vector<CapabilityTable>& tables,
    const std::vector<std::vector<std::int32_t>>& predictions) {
    if (tables.size() != predictions.size() || tables.empty())
        throw ValidationError("fusion_confidences: need one prediction vector per table");
    const std::size_t n = predictions[0].size();
    for (const auto& p : predictions)
        if (p.size() != n)
            throw ValidationError("fusion_confidences: prediction vectors disagree on point count");

    std::vector<std::vector<float>> conf(tables.size(), std::vector<float>(n, 0.0f));
    std::vector<std::int32_t> distinct;
    for (std::size_t i = 0; i < n; ++i) {
        distinct.clear();
        for (const auto& p : predictions) {
            const std::int32_t cls = p[i];
            if (cls == kInvalidLabel) continue;
            if (cls < 0)
                throw LabelOutOfRange("fusion_confidences: negative predicted class");
            if (std::find(distinct.begin(), distinct.end(), cls) == distinct.end())
                distinct.push_back(cls);
        }
        if (distinct.empty()) continue;
        for (std::size_t m = 0; m < tables.size(); ++m) {
            if (predictions[m][i] == kInvalidLabel) continue;
            double sum = 0.0;
            for (std::int32_t cls : distinct) sum += tables[m].score(static_cast<std::size_t>(cls));
            conf[m][i] = static_cast<float>(sum / static_cast<double>(distinct.size()));
        }
    }
    return conf;
}

std::pair<std::vector<float>, std::vector<float>> fusion_confidences(
    const CapabilityTable& cap_a, const CapabilityTable& cap_b,
    const std::vector<std::int32_t>& pred_a, const std::vector<std::int32_t>& pred_b) {
    auto conf = fusion_confidences(std::vector<CapabilityTable>{cap_a, cap_b},
                                   {pred_a, pred_b});
    return {std::move(conf[0]), std::move(conf[1])};
}

PointFeatureSet fuse_features(const std::vector<const PointFeatureSet*>& sets,
                              const std::vector<std::vector<float>>& confidences,
                              const FusionConfig& cfg) {
    cfg.validate();
    if (sets.empty() || sets.size() != confidences.size())
        throw ValidationError("fuse_features: need one confidence vector per feature set");
    const std::size_t n = sets[0]->size();
    const std::size_t c = sets[0]->channels();
    for (std::size_t m = 0; m < sets.size(); ++m) {
        if (sets[m]->size() != n || confidences[m].size() != n)
            throw ShapeMismatch("fuse_features: inputs disagree on point count");
        if (sets[m]->channels() != c)
            throw ShapeMismatch("fuse_features: inputs disagree on channel count");
    }

    PointFeatureSet out;
    out.features = Tensor({n, c});
    out.valid.assign(n, 0);
    out.view_count.assign(n, 0);

    std::vector<std::size_t> live;
    std::vector<float> weight;
    for (std::size_t i = 0; i < n; ++i) {
        live.clear();
        for (std::size_t m = 0; m < sets.size(); ++m)
            if (sets[m]->valid[i]) live.push_back(m);
        if (live.empty()) continue;

        out.valid[i] = 1;
        out.view_count[i] = static_cast<std::int32_t>(live.size());
        float* dst = out.features.row(i);

        if (live.size() == 1) {
            const float* src = sets[live[0]]->features.row(i);
            std::copy(src, src + c, dst);
            continue;
        }

        // Softmax over conf/tau, shifted by the max for stability.
        weight.resize(live.size());
        float peak = -std::numeric_limits<float>::infinity();
        for (std::size_t m = 0; m < live.size(); ++m)
            peak = std::max(peak, confidences[live[m]][i]);
        float total = 0.0f;
        for (std::size_t m = 0; m < live.size(); ++m) {
            weight[m] = std::exp((confidences[live[m]][i] - peak) / cfg.temperature);
            total += weight[m];
        }

        if (live.size() == 2) {
            kernels::blend2(dst, sets[live[0]]->features.row(i), weight[0] / total,
                            sets[live[1]]->features.row(i), weight[1] / total, c);
        } else {
            std::fill(dst, dst + c, 0.0f);
            for (std::size_t m = 0; m < live.size(); ++m)
                kernels::axpy(dst, sets[live[m]]->features.row(i), weight[m] / total, c);
        }
    }
    l2_normalize_rows_inplace(out.features);
    return out;
}

PointFeatureSet fuse_features(const PointFeatureSet& fa, const PointFeatureSet& fb,
                              const std::vector<float>& conf_a, const std::vector<float>& conf_b,
                              const FusionConfig& cfg) {
    return fuse_features({&fa, &fb}, {conf_a, conf_b}, cfg);
}

}  // namespace ovfuse
