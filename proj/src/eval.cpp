#include "ovfuse/eval.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <json.hpp>

#include "ovfuse/kernels.hpp"

namespace ovfuse {

std::string prompt_template(const std::string& name) {
    if (name.empty()) throw EmptyName("prompt_template: empty class name");
    return "a " + name + " in a scene";
}

void LabelMap::validate() const {
    if (coarse_names.empty() || fine_names.empty())
        throw ValidationError("label map: class lists must be non-empty");
    if (fine_to_coarse.size() != fine_names.size())
        throw ValidationError("label map: mapping must be total over the fine classes");
    for (std::int32_t m : fine_to_coarse) {
        if (m < 0 || static_cast<std::size_t>(m) >= coarse_names.size())
            throw ValidationError("label map: mapping target out of range");
    }
}

std::int32_t LabelMap::coarse_index(const std::string& coarse_name) const {
    for (std::size_t i = 0; i < coarse_names.size(); ++i)
        if (coarse_names[i] == coarse_name) return static_cast<std::int32_t>(i);
    throw ValidationError("label map: unknown coarse class '" + coarse_name + "'");
}

LabelMap load_label_map(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open: " + path.string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError(path.string() + ": malformed JSON");

    LabelMap out;
    try {
        for (const auto& n : j.at("coarse_names")) out.coarse_names.push_back(n.get<std::string>());
        for (const auto& n : j.at("fine_names")) out.fine_names.push_back(n.get<std::string>());
        const auto& map = j.at("map");
        for (const std::string& fine : out.fine_names) {
            if (!map.contains(fine))
                throw ValidationError(path.string() + ": fine class '" + fine + "' unmapped");
            out.fine_to_coarse.push_back(out.coarse_index(map.at(fine).get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    out.validate();
    return out;
}

std::vector<std::int32_t> classify_points(const PointFeatureSet& f, const ClassEmbeddings& emb,
                                          const LabelMap* map) {
    if (map) {
        map->validate();
        if (map->fine_names != emb.names)
            throw ValidationError("classify_points: label map fine classes differ from embeddings");
    }
    std::vector<std::int32_t> labels = point_predictions(f, emb);
    if (map) {
        for (auto& l : labels)
            if (l != kInvalidLabel) l = map->fine_to_coarse[static_cast<std::size_t>(l)];
    }
    return labels;
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (std::int64_t v : counts) t += v;
    return t;
}

Metrics confusion_and_metrics(const std::vector<std::int32_t>& pred,
                              const std::vector<std::int32_t>& truth, std::size_t k) {
    if (pred.size() != truth.size())
        throw ValidationError("confusion_and_metrics: label vectors differ in length");
    if (k == 0) throw ValidationError("confusion_and_metrics: need at least one class");

    Metrics out;
    out.confusion.classes = k;
    out.confusion.counts.assign(k * k, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == kInvalidLabel || truth[i] == kInvalidLabel) continue;
        if (pred[i] < 0 || static_cast<std::size_t>(pred[i]) >= k)
            throw LabelOutOfRange("confusion_and_metrics: prediction " + std::to_string(pred[i]) +
                                  " outside [0," + std::to_string(k) + ")");
        if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= k)
            throw LabelOutOfRange("confusion_and_metrics: ground truth " +
                                  std::to_string(truth[i]) + " outside [0," + std::to_string(k) +
                                  ")");
        ++out.confusion.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(pred[i]));
        ++out.evaluated_points;
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.per_class_iou.assign(k, nan);
    out.per_class_recall.assign(k, nan);
    double iou_sum = 0, recall_sum = 0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::int64_t tp = out.confusion.at(c, c);
        std::int64_t fn = 0, fp = 0;
        for (std::size_t o = 0; o < k; ++o) {
            if (o == c) continue;
            fn += out.confusion.at(c, o);
            fp += out.confusion.at(o, c);
        }
        if (tp + fn == 0) continue;  // class absent from ground truth
        ++present;
        out.per_class_iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        out.per_class_recall[c] = static_cast<double>(tp) / static_cast<double>(tp + fn);
        iou_sum += out.per_class_iou[c];
        recall_sum += out.per_class_recall[c];
    }
    if (present > 0) {
        out.miou = iou_sum / static_cast<double>(present);
        out.macc = recall_sum / static_cast<double>(present);
    }
    return out;
}

void save_metrics(const Metrics& metrics, const std::vector<std::string>& class_names,
                  const std::filesystem::path& path) {
    if (class_names.size() != metrics.confusion.classes)
        throw ValidationError("save_metrics: class-name count differs from metrics");
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        if (std::isnan(metrics.per_class_iou[c])) per_class[class_names[c]] = nullptr;
        else per_class[class_names[c]] = metrics.per_class_iou[c];
    }
    nlohmann::json j;
    j["per_class_iou"] = per_class;
    j["miou"] = metrics.miou;
    j["macc"] = metrics.macc;
    j["counts"] = metrics.confusion.counts;
    j["evaluated_points"] = metrics.evaluated_points;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoFailure("cannot open for writing: " + path.string());
    f << j.dump(2) << "\n";
}

}  // namespace ovfuse
