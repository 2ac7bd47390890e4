// ovfuse: open-vocabulary 3D feature pipeline CLI.
//
// Subcommands cover the pipeline stages (project, align, capability, fuse,
// superpoints, distill, eval), the synthetic fixture generator (synth) and
// the end-to-end orchestrator (run). Every subcommand is a pure function of
// its inputs plus the seed. Exit codes: 0 success, 2 validation error,
// 3 runtime error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ovfuse/capability.hpp"
#include "ovfuse/distill.hpp"
#include "ovfuse/eval.hpp"
#include "ovfuse/fusion.hpp"
#include "ovfuse/geometry.hpp"
#include "ovfuse/pipeline.hpp"
#include "ovfuse/superpoint.hpp"
#include "ovfuse/synth.hpp"
#include "ovfuse/tensor_io.hpp"
#include "ovfuse/text_bridge.hpp"

namespace fs = std::filesystem;
using namespace ovfuse;

namespace {

PointScene load_scene(const fs::path& scene_path, const fs::path& labels_path) {
    PointScene scene = io::read_ply(scene_path);
    if (!labels_path.empty()) {
        const TensorI32 gt = io::read_tensor_i32(labels_path);
        if (gt.numel() != scene.size())
            throw ValidationError(labels_path.string() + ": label count differs from points");
        scene.labels.assign(gt.data.begin(), gt.data.end());
    }
    return scene;
}

PointFeatureSet align_model(const PointScene& scene, const std::vector<fs::path>& cameras,
                            const std::vector<fs::path>& mask_sets, float sigma_rel) {
    if (!mask_sets.empty() && mask_sets.size() != cameras.size())
        throw ValidationError("align: --masks must pair one manifest with each camera");
    std::vector<Tensor> maps;
    std::vector<Correspondence> all;
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const CameraManifest cam = load_camera_manifest(cameras[v]);
        Tensor fm;
        if (!mask_sets.empty()) {
            const MaskLabelSet set = load_mask_label_set(mask_sets[v]);
            fm = rasterize_mask_features(set, cam.view.width, cam.view.height,
                                         static_cast<int>(set.embeddings.dim(1)))
                     .features;
        } else {
            if (cam.features.empty())
                throw ValidationError(cameras[v].string() + ": camera names no feature map");
            fm = io::read_tensor_f32(cam.features);
        }
        auto corr = project_points(scene, cam.view, sigma_rel, static_cast<std::int32_t>(v));
        all.insert(all.end(), corr.begin(), corr.end());
        maps.push_back(std::move(fm));
    }
    return multiview_fuse(maps, all, scene.size());
}

void dispatch(CLI::App& app) {
    // project: pixel-point correspondences for one view
    auto* project = app.add_subcommand("project", "Project scene points into one posed view");
    auto p_scene = std::make_shared<fs::path>();
    auto p_camera = std::make_shared<fs::path>();
    auto p_out = std::make_shared<fs::path>();
    auto p_sigma = std::make_shared<float>(0.2f);
    auto p_view_index = std::make_shared<int>(0);
    project->add_option("--scene", *p_scene, "scene PLY")->required();
    project->add_option("--camera", *p_camera, "camera JSON")->required();
    project->add_option("--sigma-rel", *p_sigma, "occlusion tolerance as fraction of pixel depth");
    project->add_option("--view-index", *p_view_index, "view index stored in the output");
    project->add_option("--out", *p_out, "output .ovt (i32 [M,4]: point, view, row, col)")
        ->required();
    project->callback([=] {
        const PointScene scene = load_scene(*p_scene, {});
        const CameraManifest cam = load_camera_manifest(*p_camera);
        const auto corr =
            project_points(scene, cam.view, *p_sigma, static_cast<std::int32_t>(*p_view_index));
        TensorI32 out({corr.size(), 4});
        for (std::size_t i = 0; i < corr.size(); ++i) {
            out(i, 0) = corr[i].point_index;
            out(i, 1) = corr[i].view_index;
            out(i, 2) = corr[i].pixel_row;
            out(i, 3) = corr[i].pixel_col;
        }
        io::write_tensor(out, *p_out);
        std::cout << corr.size() << " correspondences -> " << p_out->string() << "\n";
    });

    // align: multi-view fusion of per-pixel features onto points
    auto* align = app.add_subcommand("align", "Fuse per-pixel features onto scene points");
    auto a_scene = std::make_shared<fs::path>();
    auto a_out = std::make_shared<fs::path>();
    auto a_cameras = std::make_shared<std::vector<fs::path>>();
    auto a_masks = std::make_shared<std::vector<fs::path>>();
    auto a_sigma = std::make_shared<float>(0.2f);
    align->add_option("--scene", *a_scene, "scene PLY")->required();
    align->add_option("--cameras", *a_cameras, "camera JSONs")->required()->expected(-1);
    align->add_option("--masks", *a_masks, "mask-set manifests (one per camera)")->expected(-1);
    align->add_option("--sigma-rel", *a_sigma, "occlusion tolerance");
    align->add_option("--out", *a_out, "output point features .ovt")->required();
    align->callback([=] {
        const PointScene scene = load_scene(*a_scene, {});
        const PointFeatureSet feats = align_model(scene, *a_cameras, *a_masks, *a_sigma);
        io::write_tensor(feats.features, *a_out);
        std::size_t valid = 0;
        for (auto v : feats.valid) valid += v;
        std::cout << valid << "/" << feats.size() << " points observed -> " << a_out->string()
                  << "\n";
    });

    // capability: corpus -> table, or attention stack -> coarse mask + prompts
    auto* capability =
        app.add_subcommand("capability", "Build a capability table or derive prompt points");
    auto c_corpus = std::make_shared<fs::path>();
    auto c_classes = std::make_shared<fs::path>();
    auto c_out = std::make_shared<fs::path>();
    auto c_attention = std::make_shared<fs::path>();
    auto c_out_mask = std::make_shared<fs::path>();
    auto c_out_points = std::make_shared<fs::path>();
    auto c_threshold = std::make_shared<float>(0.5f);
    auto c_points = std::make_shared<int>(3);
    auto c_seed = std::make_shared<std::uint64_t>(0);
    capability->add_option("--corpus", *c_corpus, "capability corpus manifest JSON");
    capability->add_option("--classes", *c_classes, "class list JSON");
    capability->add_option("--out", *c_out, "output capability table JSON");
    capability->add_option("--attention", *c_attention, "attention stack .ovt [Y,Z,h,w]");
    capability->add_option("--threshold", *c_threshold, "binarization threshold (fraction of max)");
    capability->add_option("--prompt-points", *c_points, "prompt points to sample");
    capability->add_option("--seed", *c_seed, "sampling seed");
    capability->add_option("--out-mask", *c_out_mask, "coarse mask PGM output");
    capability->add_option("--out-points", *c_out_points, "prompt points JSON output");
    capability->callback([=] {
        if (!c_attention->empty()) {
            AttentionStack stack;
            stack.maps = io::read_tensor_f32(*c_attention);
            const Tensor agg = aggregate_attention(stack);
            const TensorU8 mask = binarize_coarse_mask(agg, *c_threshold);
            if (!c_out_mask->empty()) io::write_pgm(mask, *c_out_mask);
            if (!c_out_points->empty()) {
                const auto pts = sample_prompt_points(mask, *c_points, *c_seed);
                nlohmann::json arr = nlohmann::json::array();
                for (const PixelCoord& p : pts) arr.push_back({p.row, p.col});
                std::ofstream f(*c_out_points, std::ios::trunc);
                if (!f) throw IoFailure("cannot write " + c_out_points->string());
                f << arr.dump(2) << "\n";
            }
            return;
        }
        if (c_corpus->empty() || c_classes->empty() || c_out->empty())
            throw ValidationError(
                "capability: need --corpus, --classes and --out (or --attention)");
        const ClassEmbeddings cls = load_class_embeddings(*c_classes, /*require_vectors=*/false);
        const CapabilityTable table = load_capability_corpus(*c_corpus, cls.names);
        save_capability_table(table, cls.names, *c_out);
        std::cout << "capability table for '" << table.model_id << "' -> " << c_out->string()
                  << "\n";
    });

    // fuse
    auto* fuse = app.add_subcommand("fuse", "Capability-guided fusion of point features");
    auto f_features = std::make_shared<std::vector<fs::path>>();
    auto f_caps = std::make_shared<std::vector<fs::path>>();
    auto f_classes = std::make_shared<fs::path>();
    auto f_out = std::make_shared<fs::path>();
    auto f_tau = std::make_shared<float>(0.1f);
    fuse->add_option("--features", *f_features, "per-model point features .ovt")
        ->required()
        ->expected(-1);
    fuse->add_option("--caps", *f_caps, "per-model capability tables JSON")
        ->required()
        ->expected(-1);
    fuse->add_option("--classes", *f_classes, "class list JSON with embeddings")->required();
    fuse->add_option("--tau", *f_tau, "softmax temperature");
    fuse->add_option("--out", *f_out, "fused features .ovt")->required();
    fuse->callback([=] {
        if (f_features->size() != f_caps->size() || f_features->empty())
            throw ValidationError("fuse: need one capability table per feature file");
        const ClassEmbeddings cls = load_class_embeddings(*f_classes);
        std::vector<PointFeatureSet> sets;
        std::vector<CapabilityTable> tables;
        std::vector<std::vector<std::int32_t>> preds;
        for (std::size_t m = 0; m < f_features->size(); ++m) {
            sets.push_back(PointFeatureSet::from_tensor(io::read_tensor_f32((*f_features)[m])));
            tables.push_back(load_capability_table((*f_caps)[m], cls.names));
            preds.push_back(point_predictions(sets.back(), cls));
        }
        const auto confs = fusion_confidences(tables, preds);
        std::vector<const PointFeatureSet*> ptrs;
        for (const auto& s : sets) ptrs.push_back(&s);
        FusionConfig fc;
        fc.temperature = *f_tau;
        const PointFeatureSet fused = fuse_features(ptrs, confs, fc);
        io::write_tensor(fused.features, *f_out);
        std::cout << "fused " << f_features->size() << " models -> " << f_out->string() << "\n";
    });

    // superpoints
    auto* superpoints = app.add_subcommand("superpoints", "Segment a mesh into superpoints");
    auto s_mesh = std::make_shared<fs::path>();
    auto s_out = std::make_shared<fs::path>();
    auto s_k = std::make_shared<float>(0.02f);
    auto s_min_size = std::make_shared<int>(50);
    auto s_identity = std::make_shared<std::size_t>(0);
    superpoints->add_option("--mesh", *s_mesh, "mesh PLY");
    superpoints->add_option("--k", *s_k, "merge threshold");
    superpoints->add_option("--min-size", *s_min_size, "minimum segment size");
    superpoints->add_option("--identity", *s_identity,
                            "emit an identity partition of this many points instead");
    superpoints->add_option("--out", *s_out, "partition .ovt (i32 [N])")->required();
    superpoints->callback([=] {
        SuperpointPartition part;
        if (*s_identity > 0) {
            part = identity_partition(*s_identity);
        } else {
            if (s_mesh->empty()) throw ValidationError("superpoints: need --mesh or --identity");
            part = segment_mesh(io::read_ply(*s_mesh), *s_k, *s_min_size);
        }
        TensorI32 out({part.assignment.size()});
        std::copy(part.assignment.begin(), part.assignment.end(), out.data.begin());
        io::write_tensor(out, *s_out);
        std::cout << part.count << " superpoints -> " << s_out->string() << "\n";
    });

    // distill
    auto* distill = app.add_subcommand("distill", "Train the 3D point-feature model");
    auto d_scene = std::make_shared<fs::path>();
    auto d_targets = std::make_shared<fs::path>();
    auto d_superpoints = std::make_shared<fs::path>();
    auto d_classes = std::make_shared<fs::path>();
    auto d_out = std::make_shared<fs::path>();
    auto d_sched = std::make_shared<TrainSchedule>();
    distill->add_option("--scene", *d_scene, "scene PLY")->required();
    distill->add_option("--targets", *d_targets, "fused target features .ovt")->required();
    distill->add_option("--superpoints", *d_superpoints, "partition .ovt")->required();
    distill->add_option("--classes", *d_classes, "class list JSON with embeddings")->required();
    distill->add_option("--epochs", d_sched->total_epochs, "total epochs");
    distill->add_option("--phase1", d_sched->phase1_epochs, "superpoint-only epochs");
    distill->add_option("--lr", d_sched->learning_rate, "base learning rate");
    distill->add_option("--alpha", d_sched->alpha, "EMA coefficient");
    distill->add_option("--tau-ce", d_sched->tau_ce, "self-distillation temperature");
    distill->add_option("--hidden", d_sched->hidden, "hidden width");
    distill->add_option("--seed", d_sched->seed, "init seed");
    distill->add_option("--out", *d_out, "checkpoint directory")->required();
    distill->callback([=] {
        const PointScene scene = load_scene(*d_scene, {});
        const PointFeatureSet targets =
            PointFeatureSet::from_tensor(io::read_tensor_f32(*d_targets));
        const TensorI32 sp = io::read_tensor_i32(*d_superpoints);
        SuperpointPartition part;
        part.assignment.assign(sp.data.begin(), sp.data.end());
        part.count = part.assignment.empty()
                         ? 0
                         : *std::max_element(part.assignment.begin(), part.assignment.end()) + 1;
        part.sizes.assign(static_cast<std::size_t>(part.count), 0);
        for (std::int32_t a : part.assignment) ++part.sizes[static_cast<std::size_t>(a)];
        const ClassEmbeddings cls = load_class_embeddings(*d_classes);
        const TrainResult result = train(scene, targets, part, cls, *d_sched);
        result.model.save(*d_out);
        save_train_log(result.log, *d_out / "train_log.json");
        std::cout << "trained " << d_sched->total_epochs << " epochs, final loss "
                  << (result.log.empty() ? 0.0 : result.log.back().total) << " -> "
                  << d_out->string() << "\n";
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Zero-shot classification metrics");
    auto e_features = std::make_shared<fs::path>();
    auto e_classes = std::make_shared<fs::path>();
    auto e_labels = std::make_shared<fs::path>();
    auto e_map = std::make_shared<fs::path>();
    auto e_out = std::make_shared<fs::path>();
    auto e_checkpoint = std::make_shared<fs::path>();
    auto e_scene = std::make_shared<fs::path>();
    eval_cmd->add_option("--features", *e_features, "point features .ovt");
    eval_cmd->add_option("--checkpoint", *e_checkpoint,
                         "model checkpoint dir (forwards --scene instead of --features)");
    eval_cmd->add_option("--scene", *e_scene, "scene PLY (with --checkpoint)");
    eval_cmd->add_option("--classes", *e_classes, "class list JSON with embeddings")->required();
    eval_cmd->add_option("--labels", *e_labels, "ground-truth labels .ovt (i32)")->required();
    eval_cmd->add_option("--label-map", *e_map, "fine-to-coarse label map JSON");
    eval_cmd->add_option("--out", *e_out, "metrics JSON");
    eval_cmd->callback([=] {
        const ClassEmbeddings cls = load_class_embeddings(*e_classes);
        PointFeatureSet feats;
        if (!e_checkpoint->empty()) {
            if (e_scene->empty()) throw ValidationError("eval: --checkpoint needs --scene");
            const ToyPointModel model = ToyPointModel::load(*e_checkpoint);
            feats = PointFeatureSet::from_tensor(model.forward(load_scene(*e_scene, {}).points));
        } else {
            if (e_features->empty()) throw ValidationError("eval: need --features or --checkpoint");
            feats = PointFeatureSet::from_tensor(io::read_tensor_f32(*e_features));
        }
        const TensorI32 gt = io::read_tensor_i32(*e_labels);
        std::vector<std::int32_t> truth(gt.data.begin(), gt.data.end());

        LabelMap map;
        const LabelMap* map_ptr = nullptr;
        if (!e_map->empty()) {
            map = load_label_map(*e_map);
            map_ptr = &map;
        }
        const auto pred = classify_points(feats, cls, map_ptr);
        const std::size_t k = map_ptr ? map.coarse_names.size() : cls.class_count();
        const Metrics metrics = confusion_and_metrics(pred, truth, k);
        if (!e_out->empty()) save_metrics(metrics, map_ptr ? map.coarse_names : cls.names, *e_out);
        std::cout << "miou " << metrics.miou << " macc " << metrics.macc << " over "
                  << metrics.evaluated_points << " points\n";
    });

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic desk-scale fixture");
    auto y_spec = std::make_shared<fs::path>();
    auto y_out = std::make_shared<fs::path>();
    auto y_seed = std::make_shared<std::uint64_t>(0);
    synth->add_option("--spec", *y_spec, "scene spec JSON")->required();
    synth->add_option("--seed", *y_seed, "generation seed");
    synth->add_option("--out", *y_out, "output directory")->required();
    synth->callback([=] {
        const SyntheticSceneSpec spec = load_synth_spec(*y_spec);
        const SynthResult result = synth_generate(spec, *y_seed);
        write_synth(result, spec, *y_seed, *y_out);
        std::cout << result.scene.size() << " points, " << result.views.size() << " views -> "
                  << y_out->string() << "\n";
    });

    // run
    auto* run = app.add_subcommand("run", "Run the full pipeline from a config");
    auto r_config = std::make_shared<fs::path>();
    auto r_out = std::make_shared<fs::path>();
    auto r_overrides = std::make_shared<std::vector<std::string>>();
    run->add_option("--config", *r_config, "pipeline config JSON")->required();
    run->add_option("--out", *r_out, "artifact directory")->required();
    run->add_option("--set", *r_overrides,
                    "override a config field, e.g. --set tau=0.2 --set schedule.seed=7")
        ->expected(-1);
    run->callback([=] {
        PipelineConfig cfg = load_pipeline_config(*r_config);
        for (const std::string& kv : *r_overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ValidationError("run: override '" + kv + "' is not key=value");
            const std::string key = kv.substr(0, eq);
            const double value = std::stod(kv.substr(eq + 1));
            if (key == "tau") cfg.tau = static_cast<float>(value);
            else if (key == "sigma_rel") cfg.sigma_rel = static_cast<float>(value);
            else if (key == "voxel_size") cfg.voxel_size = static_cast<float>(value);
            else if (key == "schedule.seed") cfg.schedule.seed = static_cast<std::uint64_t>(value);
            else if (key == "schedule.epochs") cfg.schedule.total_epochs = static_cast<int>(value);
            else if (key == "schedule.phase1") cfg.schedule.phase1_epochs = static_cast<int>(value);
            else if (key == "schedule.lr") cfg.schedule.learning_rate = static_cast<float>(value);
            else throw ValidationError("run: unknown override key '" + key + "'");
        }
        const PipelineOutputs outputs = run_pipeline(cfg, *r_out);
        std::cout << "pipeline complete -> " << r_out->string() << "\n";
        if (outputs.fused_miou >= 0)
            std::cout << "fused miou " << outputs.fused_miou << ", distilled miou "
                      << outputs.model_miou << "\n";
    });

    app.require_subcommand(1);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ovfuse: open-vocabulary 3D feature fusion and distillation"};
    dispatch(app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
