#include "ovfuse/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "ovfuse/digest.hpp"
#include "ovfuse/eval.hpp"
#include "ovfuse/geometry.hpp"
#include "ovfuse/superpoint.hpp"
#include "ovfuse/tensor_io.hpp"
#include "ovfuse/text_bridge.hpp"

namespace ovfuse {

namespace {
constexpr const char* kPipelineVersion = "ovfuse-pipeline/1";
}

void PipelineConfig::validate() const {
    if (scene.empty()) throw ValidationError("pipeline: scene path missing");
    if (classes.empty()) throw ValidationError("pipeline: classes path missing");
    if (!(sigma_rel > 0)) throw ValidationError("pipeline: sigma_rel must be positive");
    if (voxel_size < 0) throw ValidationError("pipeline: voxel_size must be >= 0");
    if (!(tau > 0)) throw ValidationError("pipeline: tau must be positive");
    if (superpoints.mode != "mesh" && superpoints.mode != "identity")
        throw ValidationError("pipeline: superpoints.mode must be 'mesh' or 'identity'");
    if (superpoints.mode == "mesh" && (!(superpoints.k > 0) || superpoints.min_size < 1))
        throw ValidationError("pipeline: superpoint parameters out of range");
    schedule.validate();
    if (models.empty()) throw ValidationError("pipeline: need at least one model");
    std::set<std::string> ids;
    for (const PipelineModel& m : models) {
        if (m.id.empty()) throw ValidationError("pipeline: model with empty id");
        if (!ids.insert(m.id).second)
            throw ValidationError("pipeline: duplicate model id '" + m.id + "'");
        if (m.cameras.empty())
            throw ValidationError("pipeline: model '" + m.id + "' lists no cameras");
        if (!m.mask_sets.empty() && m.mask_sets.size() != m.cameras.size())
            throw ValidationError("pipeline: model '" + m.id +
                                  "' mask_sets must pair up with cameras");
        if (m.capability_corpus.empty())
            throw ValidationError("pipeline: model '" + m.id + "' lacks a capability corpus");
    }
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open: " + path.string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError(path.string() + ": malformed JSON");

    const auto base = path.parent_path();
    auto reject_unknown = [&](const nlohmann::json& obj, const std::set<std::string>& known,
                              const std::string& where) {
        for (const auto& [key, value] : obj.items()) {
            (void)value;
            if (!known.count(key))
                throw ValidationError(path.string() + ": unknown key '" + key + "' in " + where);
        }
    };

    PipelineConfig cfg;
    try {
        reject_unknown(j, {"scene", "labels", "classes", "label_map", "sigma_rel", "voxel_size",
                           "tau", "superpoints", "schedule", "models"},
                       "config");
        cfg.scene = base / j.at("scene").get<std::string>();
        if (j.contains("labels") && !j["labels"].is_null())
            cfg.labels = base / j["labels"].get<std::string>();
        cfg.classes = base / j.at("classes").get<std::string>();
        if (j.contains("label_map") && !j["label_map"].is_null())
            cfg.label_map = base / j["label_map"].get<std::string>();
        if (j.contains("sigma_rel")) cfg.sigma_rel = j["sigma_rel"].get<float>();
        if (j.contains("voxel_size")) cfg.voxel_size = j["voxel_size"].get<float>();
        if (j.contains("tau")) cfg.tau = j["tau"].get<float>();
        if (j.contains("superpoints")) {
            const auto& sp = j["superpoints"];
            reject_unknown(sp, {"mode", "k", "min_size"}, "superpoints");
            if (sp.contains("mode")) cfg.superpoints.mode = sp["mode"].get<std::string>();
            if (sp.contains("k")) cfg.superpoints.k = sp["k"].get<float>();
            if (sp.contains("min_size")) cfg.superpoints.min_size = sp["min_size"].get<int>();
        }
        if (j.contains("schedule")) {
            const auto& s = j["schedule"];
            reject_unknown(s, {"epochs", "phase1", "lr", "lr_final_scale", "alpha", "tau_ce",
                               "hidden", "frequencies", "seed"},
                           "schedule");
            if (s.contains("epochs")) cfg.schedule.total_epochs = s["epochs"].get<int>();
            if (s.contains("phase1")) cfg.schedule.phase1_epochs = s["phase1"].get<int>();
            if (s.contains("lr")) cfg.schedule.learning_rate = s["lr"].get<float>();
            if (s.contains("lr_final_scale"))
                cfg.schedule.lr_final_scale = s["lr_final_scale"].get<float>();
            if (s.contains("alpha")) cfg.schedule.alpha = s["alpha"].get<float>();
            if (s.contains("tau_ce")) cfg.schedule.tau_ce = s["tau_ce"].get<float>();
            if (s.contains("hidden")) cfg.schedule.hidden = s["hidden"].get<int>();
            if (s.contains("frequencies")) cfg.schedule.frequencies = s["frequencies"].get<int>();
            if (s.contains("seed")) cfg.schedule.seed = s["seed"].get<std::uint64_t>();
        }
        for (const auto& m : j.at("models")) {
            reject_unknown(m, {"id", "cameras", "mask_sets", "capability_corpus"}, "model");
            PipelineModel model;
            model.id = m.at("id").get<std::string>();
            for (const auto& c : m.at("cameras")) model.cameras.push_back(base / c.get<std::string>());
            if (m.contains("mask_sets"))
                for (const auto& s : m["mask_sets"]) model.mask_sets.push_back(base / s.get<std::string>());
            model.capability_corpus = base / m.at("capability_corpus").get<std::string>();
            cfg.models.push_back(std::move(model));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    cfg.validate();
    return cfg;
}

namespace {

// Stable content identity of the resolved config for the manifest.
std::string config_fingerprint(const PipelineConfig& cfg) {
    nlohmann::json j;
    j["scene"] = cfg.scene.generic_string();
    j["labels"] = cfg.labels.generic_string();
    j["classes"] = cfg.classes.generic_string();
    j["label_map"] = cfg.label_map.generic_string();
    j["sigma_rel"] = cfg.sigma_rel;
    j["voxel_size"] = cfg.voxel_size;
    j["tau"] = cfg.tau;
    j["superpoints"] = {{"mode", cfg.superpoints.mode},
                        {"k", cfg.superpoints.k},
                        {"min_size", cfg.superpoints.min_size}};
    j["schedule"] = {{"epochs", cfg.schedule.total_epochs},
                     {"phase1", cfg.schedule.phase1_epochs},
                     {"lr", cfg.schedule.learning_rate},
                     {"lr_final_scale", cfg.schedule.lr_final_scale},
                     {"alpha", cfg.schedule.alpha},
                     {"tau_ce", cfg.schedule.tau_ce},
                     {"hidden", cfg.schedule.hidden},
                     {"frequencies", cfg.schedule.frequencies},
                     {"seed", cfg.schedule.seed}};
    nlohmann::json models = nlohmann::json::array();
    for (const PipelineModel& m : cfg.models) {
        nlohmann::json e;
        e["id"] = m.id;
        nlohmann::json cams = nlohmann::json::array();
        for (const auto& c : m.cameras) cams.push_back(c.generic_string());
        e["cameras"] = cams;
        nlohmann::json sets = nlohmann::json::array();
        for (const auto& s : m.mask_sets) sets.push_back(s.generic_string());
        e["mask_sets"] = sets;
        e["capability_corpus"] = m.capability_corpus.generic_string();
        models.push_back(e);
    }
    j["models"] = models;
    return sha256_hex(j.dump());
}

template <typename Fn>
auto run_stage(const std::string& stage, const std::string& input, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, input, e.what());
    }
}

}  // namespace

PipelineOutputs run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    cfg.validate();
    fs::create_directories(out_dir);

    PipelineOutputs outputs;
    std::vector<fs::path> artifacts;

    // scene
    PointScene scene = run_stage("scene", cfg.scene.string(), [&] {
        PointScene s = io::read_ply(cfg.scene);
        if (!cfg.labels.empty()) {
            const TensorI32 gt = io::read_tensor_i32(cfg.labels);
            if (gt.numel() != s.size())
                throw ValidationError(cfg.labels.string() + ": label count differs from points");
            s.labels.assign(gt.data.begin(), gt.data.end());
        }
        return s;
    });

    // superpoints are segmented on the full-resolution mesh, then carried
    // through voxelization by majority vote.
    SuperpointPartition part = run_stage("superpoints", cfg.scene.string(), [&] {
        if (cfg.superpoints.mode == "identity") return identity_partition(scene.size());
        return segment_mesh(scene, cfg.superpoints.k, cfg.superpoints.min_size);
    });

    std::vector<std::int32_t> voxel_map;  // original -> downsampled index
    if (cfg.voxel_size > 0) {
        run_stage("voxel", cfg.scene.string(), [&] {
            VoxelDownsampleResult down = voxel_downsample(scene, cfg.voxel_size);
            voxel_map = std::move(down.index_map);

            // Majority segment per voxel, ties to the smaller segment id.
            const std::size_t m = down.scene.size();
            std::vector<std::map<std::int32_t, std::int32_t>> votes(m);
            for (std::size_t i = 0; i < scene.size(); ++i)
                ++votes[static_cast<std::size_t>(voxel_map[i])][part.assignment[i]];
            std::vector<std::int32_t> coarse(m, 0);
            for (std::size_t v = 0; v < m; ++v) {
                std::int32_t best = -1, best_votes = 0;
                for (const auto& [seg, nv] : votes[v]) {
                    if (nv > best_votes) {
                        best = seg;
                        best_votes = nv;
                    }
                }
                coarse[v] = best;
            }
            // Compact the segment ids that survive.
            std::map<std::int32_t, std::int32_t> relabel;
            for (std::int32_t seg : coarse) relabel.emplace(seg, 0);
            std::int32_t next = 0;
            for (auto& [seg, id] : relabel) id = next++;
            SuperpointPartition reduced;
            reduced.count = next;
            reduced.sizes.assign(static_cast<std::size_t>(next), 0);
            reduced.assignment.resize(m);
            for (std::size_t v = 0; v < m; ++v) {
                reduced.assignment[v] = relabel.at(coarse[v]);
                ++reduced.sizes[static_cast<std::size_t>(reduced.assignment[v])];
            }
            reduced.validate();
            part = std::move(reduced);
            scene = std::move(down.scene);
            return 0;
        });
    }

    const ClassEmbeddings classes = run_stage("classes", cfg.classes.string(), [&] {
        return load_class_embeddings(cfg.classes);
    });

    // align: per model, project every camera and fuse over views
    std::vector<PointFeatureSet> model_features;
    for (const PipelineModel& model : cfg.models) {
        PointFeatureSet feats = run_stage("align", model.cameras.front().string(), [&] {
            std::vector<Tensor> maps;
            std::vector<Correspondence> all;
            for (std::size_t v = 0; v < model.cameras.size(); ++v) {
                const CameraManifest cam = load_camera_manifest(model.cameras[v]);
                Tensor fm;
                if (!model.mask_sets.empty()) {
                    const MaskLabelSet set = load_mask_label_set(model.mask_sets[v]);
                    fm = rasterize_mask_features(set, cam.view.width, cam.view.height,
                                                 static_cast<int>(set.embeddings.dim(1)))
                             .features;
                } else {
                    if (cam.features.empty())
                        throw ValidationError(model.cameras[v].string() +
                                              ": camera names no feature map");
                    fm = io::read_tensor_f32(cam.features);
                }
                std::vector<Correspondence> corr =
                    project_points(scene, cam.view, cfg.sigma_rel, static_cast<std::int32_t>(v));
                all.insert(all.end(), corr.begin(), corr.end());
                maps.push_back(std::move(fm));
            }
            return multiview_fuse(maps, all, scene.size());
        });
        const fs::path out = out_dir / ("features_" + model.id + ".ovt");
        io::write_tensor(feats.features, out);
        artifacts.push_back(out);
        model_features.push_back(std::move(feats));
    }

    // capability tables
    std::vector<CapabilityTable> tables;
    for (const PipelineModel& model : cfg.models) {
        CapabilityTable table = run_stage("capability", model.capability_corpus.string(), [&] {
            return load_capability_corpus(model.capability_corpus, classes.names);
        });
        const fs::path out = out_dir / ("capability_" + model.id + ".json");
        save_capability_table(table, classes.names, out);
        artifacts.push_back(out);
        tables.push_back(std::move(table));
    }

    // fusion
    PointFeatureSet fused = run_stage("fusion", cfg.classes.string(), [&] {
        std::vector<std::vector<std::int32_t>> preds;
        preds.reserve(model_features.size());
        for (const PointFeatureSet& f : model_features)
            preds.push_back(point_predictions(f, classes));
        const auto confs = fusion_confidences(tables, preds);
        std::vector<const PointFeatureSet*> sets;
        sets.reserve(model_features.size());
        for (const PointFeatureSet& f : model_features) sets.push_back(&f);
        FusionConfig fc;
        fc.temperature = cfg.tau;
        return fuse_features(sets, confs, fc);
    });
    outputs.fused_features = out_dir / "fused.ovt";
    io::write_tensor(fused.features, outputs.fused_features);
    artifacts.push_back(outputs.fused_features);

    // superpoints artifact
    outputs.superpoints = out_dir / "superpoints.ovt";
    {
        TensorI32 sp({part.assignment.size()});
        std::copy(part.assignment.begin(), part.assignment.end(), sp.data.begin());
        io::write_tensor(sp, outputs.superpoints);
        artifacts.push_back(outputs.superpoints);
    }

    // distill
    TrainResult trained = run_stage("distill", cfg.scene.string(), [&] {
        return train(scene, fused, part, classes, cfg.schedule);
    });
    outputs.checkpoint_dir = out_dir / "model";
    trained.model.save(outputs.checkpoint_dir);
    for (const char* name :
         {"model.json", "w1.ovt", "b1.ovt", "w2.ovt", "b2.ovt", "input_transform.ovt"})
        artifacts.push_back(outputs.checkpoint_dir / name);
    save_train_log(trained.log, out_dir / "train_log.json");
    artifacts.push_back(out_dir / "train_log.json");

    // eval (needs ground truth)
    if (scene.has_labels()) {
        run_stage("eval", cfg.labels.empty() ? cfg.scene.string() : cfg.labels.string(), [&] {
            const LabelMap* map_ptr = nullptr;
            LabelMap map;
            if (!cfg.label_map.empty()) {
                map = load_label_map(cfg.label_map);
                map_ptr = &map;
            }
            const std::size_t k = map_ptr ? map.coarse_names.size() : classes.class_count();
            const auto& names = map_ptr ? map.coarse_names : classes.names;

            PointFeatureSet model_out = PointFeatureSet::from_tensor(
                trained.model.forward(scene.points));
            const auto pred_model = classify_points(model_out, classes, map_ptr);
            const Metrics m_model = confusion_and_metrics(pred_model, scene.labels, k);
            save_metrics(m_model, names, out_dir / "metrics.json");
            outputs.model_miou = m_model.miou;

            const auto pred_fused = classify_points(fused, classes, map_ptr);
            const Metrics m_fused = confusion_and_metrics(pred_fused, scene.labels, k);
            save_metrics(m_fused, names, out_dir / "metrics_fused.json");
            outputs.fused_miou = m_fused.miou;
            return 0;
        });
        outputs.metrics = out_dir / "metrics.json";
        artifacts.push_back(outputs.metrics);
        artifacts.push_back(out_dir / "metrics_fused.json");
    }

    // manifest: config fingerprint plus artifact hashes, no timestamps
    nlohmann::json manifest;
    manifest["version"] = kPipelineVersion;
    manifest["config_sha256"] = config_fingerprint(cfg);
    nlohmann::json files = nlohmann::json::object();
    std::sort(artifacts.begin(), artifacts.end());
    for (const fs::path& p : artifacts)
        files[fs::relative(p, out_dir).generic_string()] = sha256_file(p);
    manifest["artifacts"] = files;
    outputs.manifest = out_dir / "manifest.json";
    std::ofstream mf(outputs.manifest, std::ios::trunc);
    if (!mf) throw IoFailure("cannot write manifest");
    mf << manifest.dump(2) << "\n";
    return outputs;
}

}  // namespace ovfuse
