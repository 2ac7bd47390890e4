#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ovfuse/fusion.hpp"

namespace ovfuse {

// Inference-time prompt: class name "XX" becomes "a XX in a scene".
std::string prompt_template(const std::string& name);

// Total map from detailed class names onto the evaluation taxonomy.
struct LabelMap {
    std::vector<std::string> fine_names;
    std::vector<std::string> coarse_names;
    std::vector<std::int32_t> fine_to_coarse;  // one entry per fine class

    void validate() const;
    std::int32_t coarse_index(const std::string& coarse_name) const;
};

// JSON: {"coarse_names":[...], "fine_names":[...], "map":{fine:coarse,...}}.
LabelMap load_label_map(const std::filesystem::path& path);

// Similarity argmax over the (fine) classes, remapped to coarse labels when
// a map is supplied; invalid points get kInvalidLabel.
std::vector<std::int32_t> classify_points(const PointFeatureSet& f, const ClassEmbeddings& emb,
                                          const LabelMap* map = nullptr);

struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::int64_t> counts;  // K*K, rows = ground truth

    std::int64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * classes + pred]; }
    std::int64_t at(std::size_t truth, std::size_t pred) const {
        return counts[truth * classes + pred];
    }
    std::int64_t total() const;
};

struct Metrics {
    ConfusionMatrix confusion;
    std::vector<double> per_class_iou;  // NaN for classes absent from truth
    std::vector<double> per_class_recall;
    double miou = 0;
    double macc = 0;
    std::int64_t evaluated_points = 0;
};

// IoU_j = TP/(TP+FP+FN), mIoU and mAcc averaged over classes present in the
// ground truth; points carrying a sentinel label on either side are skipped.
Metrics confusion_and_metrics(const std::vector<std::int32_t>& pred,
                              const std::vector<std::int32_t>& truth, std::size_t k);

void save_metrics(const Metrics& metrics, const std::vector<std::string>& class_names,
                  const std::filesystem::path& path);

}  // namespace ovfuse
