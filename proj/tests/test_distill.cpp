#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ovfuse/distill.hpp"
#include "ovfuse/superpoint.hpp"
#include "test_util.hpp"

using namespace ovfuse;

namespace {

// Independent double-precision re-implementation of the cosine loss for the
// finite-difference oracle. Works on raw copies so perturbations are exact.
double cosine_ref(const std::vector<double>& a_data, const PointFeatureSet& a_like,
                  const PointFeatureSet& b, const std::vector<double>& pa_data,
                  const PointFeatureSet& pa_like, const PointFeatureSet& pb) {
    auto level = [](const std::vector<double>& lhs, const PointFeatureSet& lhs_like,
                    const PointFeatureSet& rhs) {
        const std::size_t n = lhs_like.size();
        const std::size_t c = lhs_like.channels();
        double acc = 0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!lhs_like.valid[i] || !rhs.valid[i]) continue;
            double na = 0, nb = 0, ab = 0;
            for (std::size_t j = 0; j < c; ++j) {
                const double av = lhs[i * c + j];
                const double bv = rhs.features(i, j);
                na += av * av;
                nb += bv * bv;
                ab += av * bv;
            }
            acc += 1.0 - ab / (std::sqrt(na) * std::sqrt(nb));
            ++count;
        }
        return count ? acc / static_cast<double>(count) : 0.0;
    };
    return level(a_data, a_like, b) + level(pa_data, pa_like, pb);
}

std::vector<double> to_double(const Tensor& t) {
    return std::vector<double>(t.data.begin(), t.data.end());
}

// Relative error between an analytic gradient and its FD estimate.
double grad_rel_error(const Tensor& analytic, const std::vector<double>& fd) {
    double diff2 = 0, ref2 = 0;
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
        const double d = analytic.data[i] - fd[i];
        diff2 += d * d;
        ref2 += fd[i] * fd[i];
    }
    return std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-12);
}

ClassEmbeddings orthonormal_classes(std::size_t k, std::size_t c) {
    ClassEmbeddings emb;
    emb.vectors = Tensor({k, c});
    for (std::size_t i = 0; i < k; ++i) {
        emb.names.push_back("c" + std::to_string(i));
        emb.vectors(i, i) = 1.0f;
    }
    return emb;
}

SuperpointPartition random_partition(std::size_t n, std::int32_t segments, std::mt19937_64& rng) {
    SuperpointPartition part;
    part.count = segments;
    part.sizes.assign(static_cast<std::size_t>(segments), 0);
    part.assignment.resize(n);
    std::uniform_int_distribution<std::int32_t> seg(0, segments - 1);
    for (std::size_t i = 0; i < n; ++i) part.assignment[i] = seg(rng);
    for (std::int32_t s = 0; s < segments; ++s)
        part.assignment[static_cast<std::size_t>(s) % n] = s;  // no empty segment
    for (std::int32_t a : part.assignment) ++part.sizes[static_cast<std::size_t>(a)];
    return part;
}

}  // namespace

TEST_CASE("cosine loss: equal features give zero loss, antipodal give 2+2") {
    std::mt19937_64 rng(3);
    const PointFeatureSet f = ovtest::random_unit_feature_set(5, 4, rng);
    const DistillLoss zero = cosine_distill_loss(f, f, f, f);
    CHECK(zero.total == doctest::Approx(0.0).epsilon(1e-6));

    PointFeatureSet neg = f;
    for (float& v : neg.features.data) v = -v;
    const DistillLoss anti = cosine_distill_loss(neg, f, neg, f);
    CHECK(anti.point_level == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(anti.super_level == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(anti.total == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("cosine loss stays within [0,4] and needs a valid row") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        const PointFeatureSet a = ovtest::random_unit_feature_set(6, 4, rng);
        const PointFeatureSet b = ovtest::random_unit_feature_set(6, 4, rng);
        const DistillLoss loss = cosine_distill_loss(a, b, a, b);
        CHECK(loss.total >= 0.0);
        CHECK(loss.total <= 4.0 + 1e-9);
    }
    PointFeatureSet invalid;
    invalid.features = Tensor({2, 3});
    invalid.valid = {0, 0};
    invalid.view_count = {0, 0};
    CHECK_THROWS_AS(cosine_distill_loss(invalid, invalid, invalid, invalid), NoValidPoints);
}

TEST_CASE("cosine loss gradients match central finite differences (random instances)") {
    std::mt19937_64 rng(7);
    const double h = 1e-5;
    for (int rep = 0; rep < 8; ++rep) {
        const std::size_t n = 6, c = 4, L = 3;
        PointFeatureSet f3d = ovtest::random_feature_set(n, c, rng);
        PointFeatureSet target = ovtest::random_unit_feature_set(n, c, rng);
        target.valid[1] = 0;
        target.view_count[1] = 0;
        for (std::size_t j = 0; j < c; ++j) target.features(1, j) = 0;
        PointFeatureSet pooled = ovtest::random_feature_set(L, c, rng);
        PointFeatureSet pooled_target = ovtest::random_unit_feature_set(L, c, rng);

        const DistillLoss loss = cosine_distill_loss(f3d, target, pooled, pooled_target);

        std::vector<double> f3d_d = to_double(f3d.features);
        std::vector<double> pooled_d = to_double(pooled.features);

        std::vector<double> fd_points(n * c, 0.0), fd_pooled(L * c, 0.0);
        for (std::size_t i = 0; i < n * c; ++i) {
            if (!f3d.valid[i / c]) continue;
            auto plus = f3d_d, minus = f3d_d;
            plus[i] += h;
            minus[i] -= h;
            fd_points[i] = (cosine_ref(plus, f3d, target, pooled_d, pooled, pooled_target) -
                            cosine_ref(minus, f3d, target, pooled_d, pooled, pooled_target)) /
                           (2 * h);
        }
        for (std::size_t i = 0; i < L * c; ++i) {
            auto plus = pooled_d, minus = pooled_d;
            plus[i] += h;
            minus[i] -= h;
            fd_pooled[i] = (cosine_ref(f3d_d, f3d, target, plus, pooled, pooled_target) -
                            cosine_ref(f3d_d, f3d, target, minus, pooled, pooled_target)) /
                           (2 * h);
        }
        CHECK(grad_rel_error(loss.grad_points, fd_points) < 1e-4);
        CHECK(grad_rel_error(loss.grad_pooled, fd_pooled) < 1e-4);
    }
}

TEST_CASE("ema_update: initialization copies, alpha edge cases, hand value") {
    EmaBuffer buf;
    buf.alpha = 1.0f;
    const Tensor first({1, 2}, {3, 4});
    ema_update(buf, first);
    CHECK(buf.initialized);
    CHECK(buf.values == first);  // first update copies exactly

    // alpha = 1: later updates change nothing.
    ema_update(buf, Tensor({1, 2}, {100, 100}));
    CHECK(buf.values == first);

    // alpha = 0: buffer tracks the current input.
    EmaBuffer zero;
    zero.alpha = 0.0f;
    ema_update(zero, first);
    const Tensor next({1, 2}, {7, 8});
    ema_update(zero, next);
    CHECK(zero.values == next);

    // alpha = 0.5, init 0, then 2 -> 1.
    EmaBuffer half;
    half.alpha = 0.5f;
    ema_update(half, Tensor({1, 1}, {0}));
    ema_update(half, Tensor({1, 1}, {2}));
    CHECK(half.values(0, 0) == doctest::Approx(1.0));

    CHECK_THROWS_AS(ema_update(half, Tensor({2, 1})), ShapeMismatch);
}

TEST_CASE("ema geometric series: n updates with constant input match the closed form") {
    EmaBuffer buf;
    buf.alpha = 0.9f;
    const float v0 = 5.0f, cval = 1.0f;
    ema_update(buf, Tensor({1, 1}, {v0}));
    const Tensor constant({1, 1}, {cval});
    const int nsteps = 50;
    for (int i = 0; i < nsteps; ++i) ema_update(buf, constant);
    const double want = std::pow(0.9, nsteps) * v0 + (1.0 - std::pow(0.9, nsteps)) * cval;
    CHECK(buf.values(0, 0) == doctest::Approx(want).epsilon(1e-5));
}

TEST_CASE("pseudo labels: embedding rows label themselves; identity partition collapses") {
    const ClassEmbeddings emb = orthonormal_classes(4, 6);
    EmaBuffer buf;
    ema_update(buf, emb.vectors);  // buffer rows are the class embeddings
    const SuperpointPartition part = identity_partition(4);
    const PseudoLabels labels = pseudo_labels(buf, part, emb);
    for (std::int32_t i = 0; i < 4; ++i) {
        CHECK(labels.point_labels[static_cast<std::size_t>(i)] == i);
        CHECK(labels.superpoint_labels[static_cast<std::size_t>(i)] == i);
    }
}

TEST_CASE("pseudo labels: random buffer against an exhaustive similarity loop") {
    std::mt19937_64 rng(11);
    const std::size_t n = 12, c = 5, k = 4;
    ClassEmbeddings emb;
    emb.vectors = ovtest::random_tensor({k, c}, rng);
    l2_normalize_rows_inplace(emb.vectors);
    for (std::size_t i = 0; i < k; ++i) emb.names.push_back("c" + std::to_string(i));

    EmaBuffer buf;
    ema_update(buf, ovtest::random_tensor({n, c}, rng));
    const SuperpointPartition part = random_partition(n, 3, rng);
    const PseudoLabels labels = pseudo_labels(buf, part, emb);

    for (std::size_t i = 0; i < n; ++i) {
        std::int32_t best = 0;
        double best_score = -1e18;
        for (std::size_t cls = 0; cls < k; ++cls) {
            const double s = ovtest::dot_d(buf.values.row(i), emb.vectors.row(cls), c);
            if (s > best_score + 1e-12) {
                best_score = s;
                best = static_cast<std::int32_t>(cls);
            }
        }
        CHECK(labels.point_labels[i] == best);
    }
    // Superpoint branch: pooled-then-normalized rows.
    for (std::int32_t l = 0; l < 3; ++l) {
        std::vector<double> mean(c, 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (part.assignment[i] != l) continue;
            for (std::size_t j = 0; j < c; ++j) mean[j] += buf.values(i, j);
            ++count;
        }
        for (double& v : mean) v /= static_cast<double>(count);
        std::int32_t best = 0;
        double best_score = -1e18;
        for (std::size_t cls = 0; cls < k; ++cls) {
            double s = 0;
            for (std::size_t j = 0; j < c; ++j) s += mean[j] * emb.vectors(cls, j);
            if (s > best_score + 1e-12) {
                best_score = s;
                best = static_cast<std::int32_t>(cls);
            }
        }
        CHECK(labels.superpoint_labels[static_cast<std::size_t>(l)] == best);
    }
}

TEST_CASE("pseudo labels require an initialized buffer") {
    EmaBuffer buf;
    CHECK_THROWS_AS(pseudo_labels(buf, identity_partition(2), orthonormal_classes(2, 2)),
                    Uninitialized);
}

TEST_CASE("self-distillation: uniform logits cost 2 ln K, aligned features cost ~0") {
    const std::size_t k = 4, c = 4, n = 5;
    const ClassEmbeddings emb = orthonormal_classes(k, c);

    PointFeatureSet zero;
    zero.features = Tensor({n, c});
    zero.valid.assign(n, 1);
    zero.view_count.assign(n, 1);
    std::vector<std::int32_t> labels(n, 2);
    const DistillLoss uniform = self_distill_loss(zero, zero, emb, labels, labels, 0.07f);
    CHECK(uniform.total == doctest::Approx(2.0 * std::log(static_cast<double>(k))).epsilon(1e-6));

    PointFeatureSet aligned;
    aligned.features = Tensor({n, c});
    for (std::size_t i = 0; i < n; ++i)
        aligned.features(i, static_cast<std::size_t>(labels[i])) = 1.0f;
    aligned.valid.assign(n, 1);
    aligned.view_count.assign(n, 1);
    const DistillLoss sharp = self_distill_loss(aligned, aligned, emb, labels, labels, 0.01f);
    CHECK(sharp.total < 1e-9);
}

TEST_CASE("self-distillation gradients match central finite differences") {
    std::mt19937_64 rng(13);
    const double h = 1e-5;
    for (int rep = 0; rep < 8; ++rep) {
        const std::size_t n = 5, c = 6, k = 5, L = 3;
        ClassEmbeddings emb;
        emb.vectors = ovtest::random_tensor({k, c}, rng);
        l2_normalize_rows_inplace(emb.vectors);
        for (std::size_t i = 0; i < k; ++i) emb.names.push_back("c" + std::to_string(i));

        const PointFeatureSet f3d = ovtest::random_feature_set(n, c, rng);
        const PointFeatureSet pooled = ovtest::random_feature_set(L, c, rng);
        std::uniform_int_distribution<std::int32_t> cls(0, k - 1);
        std::vector<std::int32_t> pl(n), sl(L);
        for (auto& v : pl) v = cls(rng);
        for (auto& v : sl) v = cls(rng);
        const float tau = 0.2f;

        const DistillLoss loss = self_distill_loss(f3d, pooled, emb, pl, sl, tau);

        // Independent double-precision CE for the FD oracle.
        auto ce_ref = [&](const std::vector<double>& rows, std::size_t count,
                          const std::vector<std::int32_t>& labels) {
            double acc = 0;
            for (std::size_t i = 0; i < count; ++i) {
                std::vector<double> logits(k);
                double peak = -1e300;
                for (std::size_t cc = 0; cc < k; ++cc) {
                    double s = 0;
                    for (std::size_t j = 0; j < c; ++j)
                        s += rows[i * c + j] * emb.vectors(cc, j);
                    logits[cc] = s / tau;
                    peak = std::max(peak, logits[cc]);
                }
                double denom = 0;
                for (std::size_t cc = 0; cc < k; ++cc) denom += std::exp(logits[cc] - peak);
                acc += std::log(denom) - (logits[static_cast<std::size_t>(labels[i])] - peak);
            }
            return acc / static_cast<double>(count);
        };

        std::vector<double> fp = to_double(f3d.features);
        std::vector<double> pp = to_double(pooled.features);
        std::vector<double> fd_points(n * c), fd_pooled(L * c);
        for (std::size_t i = 0; i < n * c; ++i) {
            auto plus = fp, minus = fp;
            plus[i] += h;
            minus[i] -= h;
            fd_points[i] = (ce_ref(plus, n, pl) - ce_ref(minus, n, pl)) / (2 * h);
        }
        for (std::size_t i = 0; i < L * c; ++i) {
            auto plus = pp, minus = pp;
            plus[i] += h;
            minus[i] -= h;
            fd_pooled[i] = (ce_ref(plus, L, sl) - ce_ref(minus, L, sl)) / (2 * h);
        }
        CHECK(grad_rel_error(loss.grad_points, fd_points) < 1e-4);
        CHECK(grad_rel_error(loss.grad_pooled, fd_pooled) < 1e-4);
    }
}

TEST_CASE("self-distillation rejects labels out of range") {
    const ClassEmbeddings emb = orthonormal_classes(3, 3);
    PointFeatureSet f;
    f.features = Tensor({1, 3});
    f.valid = {1};
    f.view_count = {1};
    CHECK_THROWS_AS(self_distill_loss(f, f, emb, {5}, {0}, 0.07f), LabelOutOfRange);
}

namespace {

// Two-plane scene: floor (class 0) and wall (class 1), unit-grid meshes.
struct TwoClassScene {
    PointScene scene;
    PointFeatureSet targets;
    SuperpointPartition part;
    ClassEmbeddings emb;
};

TwoClassScene make_two_class_scene(float corrupt_fraction, std::uint64_t seed) {
    TwoClassScene out;
    const int n = 7;
    std::vector<float> pts;
    std::vector<std::int32_t> labels;
    for (int plane = 0; plane < 2; ++plane) {
        for (int i = 0; i <= n; ++i) {
            for (int j = 0; j <= n; ++j) {
                const float u = static_cast<float>(i) / n, v = static_cast<float>(j) / n;
                if (plane == 0) {
                    pts.insert(pts.end(), {u, v, 0.0f});
                } else {
                    pts.insert(pts.end(), {1.0f, u, v});
                }
                labels.push_back(plane);
            }
        }
    }
    const std::size_t total = labels.size();
    out.scene.points = Tensor({total, 3}, std::move(pts));
    out.scene.labels = labels;

    out.emb = orthonormal_classes(2, 8);
    out.targets.features = Tensor({total, 8});
    out.targets.valid.assign(total, 1);
    out.targets.view_count.assign(total, 1);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::size_t i = 0; i < total; ++i) {
        std::size_t cls = static_cast<std::size_t>(labels[i]);
        if (u(rng) < corrupt_fraction) cls = 1 - cls;
        for (std::size_t j = 0; j < 8; ++j) out.targets.features(i, j) = out.emb.vectors(cls, j);
    }

    out.part.count = 2;
    out.part.assignment.assign(total, 0);
    const std::size_t half = total / 2;
    for (std::size_t i = half; i < total; ++i) out.part.assignment[i] = 1;
    out.part.sizes = {static_cast<std::int32_t>(half), static_cast<std::int32_t>(total - half)};
    return out;
}

double argmax_accuracy(const PointFeatureSet& f, const ClassEmbeddings& emb,
                       const std::vector<std::int32_t>& truth) {
    const auto pred = point_predictions(f, emb);
    std::size_t hit = 0, total = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (pred[i] == kInvalidLabel) continue;
        ++total;
        hit += (pred[i] == truth[i]) ? 1 : 0;
    }
    return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace

TEST_CASE("train: zero epochs returns an initialized model and an empty log") {
    const TwoClassScene fixture = make_two_class_scene(0.0f, 1);
    TrainSchedule sched;
    sched.total_epochs = 0;
    sched.phase1_epochs = 0;
    const TrainResult r = train(fixture.scene, fixture.targets, fixture.part, fixture.emb, sched);
    CHECK(r.log.empty());
    const Tensor out = r.model.forward(fixture.scene.points);
    CHECK(out.dim(0) == fixture.scene.size());
    for (std::size_t i = 0; i < out.dim(0); ++i)
        CHECK(ovtest::norm_d(out.row(i), out.dim(1)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("train: phase-1 loss is non-increasing on the two-class scene (lr 1e-2)") {
    const TwoClassScene fixture = make_two_class_scene(0.0f, 2);
    TrainSchedule sched;
    sched.total_epochs = 30;
    sched.phase1_epochs = 30;
    sched.learning_rate = 1e-2f;
    sched.hidden = 32;
    sched.seed = 7;
    const TrainResult r = train(fixture.scene, fixture.targets, fixture.part, fixture.emb, sched);
    REQUIRE(r.log.size() == 30);
    for (std::size_t e = 1; e < r.log.size(); ++e)
        CHECK(r.log[e].total <= r.log[e - 1].total + 1e-3);
}

TEST_CASE("train: full schedule reaches at least the accuracy of the raw targets") {
    const TwoClassScene fixture = make_two_class_scene(0.15f, 3);
    TrainSchedule sched;
    sched.total_epochs = 50;
    sched.phase1_epochs = 35;
    sched.learning_rate = 1e-2f;
    sched.hidden = 32;
    sched.seed = 11;
    const TrainResult r = train(fixture.scene, fixture.targets, fixture.part, fixture.emb, sched);
    PointFeatureSet model_out = PointFeatureSet::from_tensor(r.model.forward(fixture.scene.points));
    const double model_acc = argmax_accuracy(model_out, fixture.emb, fixture.scene.labels);
    const double target_acc = argmax_accuracy(fixture.targets, fixture.emb, fixture.scene.labels);
    CHECK(model_acc >= target_acc);
}

TEST_CASE("train: identical seeds give bit-identical logs") {
    const TwoClassScene fixture = make_two_class_scene(0.1f, 4);
    TrainSchedule sched;
    sched.total_epochs = 12;
    sched.phase1_epochs = 8;
    sched.hidden = 16;
    sched.seed = 99;
    const TrainResult a = train(fixture.scene, fixture.targets, fixture.part, fixture.emb, sched);
    const TrainResult b = train(fixture.scene, fixture.targets, fixture.part, fixture.emb, sched);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t e = 0; e < a.log.size(); ++e) {
        CHECK(a.log[e].total == b.log[e].total);  // bit-identical doubles
        CHECK(a.log[e].point_loss == b.log[e].point_loss);
        CHECK(a.log[e].super_loss == b.log[e].super_loss);
    }
    CHECK(a.model.forward(fixture.scene.points) == b.model.forward(fixture.scene.points));
}

TEST_CASE("identity partition collapses the superpoint loss onto the point loss") {
    std::mt19937_64 rng(17);
    const std::size_t n = 20, c = 6;
    const PointFeatureSet f3d = ovtest::random_unit_feature_set(n, c, rng);
    const PointFeatureSet target = ovtest::random_unit_feature_set(n, c, rng);
    const SuperpointPartition part = identity_partition(n);
    const PointFeatureSet pooled3d = superpoint_pool(f3d, part);
    const PointFeatureSet pooled_target = superpoint_pool(target, part);
    const DistillLoss loss = cosine_distill_loss(f3d, target, pooled3d, pooled_target);
    CHECK(loss.super_level == doctest::Approx(loss.point_level).epsilon(1e-6));
}

TEST_CASE("train rejects an all-invalid target set") {
    const TwoClassScene fixture = make_two_class_scene(0.0f, 5);
    PointFeatureSet empty = fixture.targets;
    for (std::size_t i = 0; i < empty.size(); ++i) {
        empty.valid[i] = 0;
        empty.view_count[i] = 0;
        for (std::size_t j = 0; j < empty.channels(); ++j) empty.features(i, j) = 0;
    }
    CHECK_THROWS_AS(train(fixture.scene, empty, fixture.part, fixture.emb, TrainSchedule{}),
                    NoValidPoints);
}

TEST_CASE("model checkpoint round trip preserves the forward pass") {
    const auto dir = ovtest::temp_dir("checkpoint");
    const TwoClassScene fixture = make_two_class_scene(0.0f, 6);
    TrainSchedule sched;
    sched.total_epochs = 3;
    sched.phase1_epochs = 3;
    sched.hidden = 16;
    const TrainResult r = train(fixture.scene, fixture.targets, fixture.part, fixture.emb, sched);
    r.model.save(dir);
    const ToyPointModel loaded = ToyPointModel::load(dir);
    CHECK(loaded.forward(fixture.scene.points) == r.model.forward(fixture.scene.points));
}
