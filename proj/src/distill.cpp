#include "ovfuse/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "ovfuse/kernels.hpp"
#include "ovfuse/tensor_io.hpp"

namespace ovfuse {

namespace {
constexpr float kNormFloor = 1e-12f;
}

ToyPointModel::ToyPointModel(const ToyModelConfig& cfg, const Tensor& points) : cfg_(cfg) {
    if (cfg_.hidden < 1 || cfg_.frequencies < 1 || cfg_.channels < 1)
        throw ValidationError("toy model: hidden, frequencies and channels must be positive");
    if (points.rank() != 2 || points.dim(1) != 3 || points.dim(0) == 0)
        throw ValidationError("toy model: points must be a non-empty [N,3] tensor");

    for (int a = 0; a < 3; ++a) {
        float lo = points(0, static_cast<std::size_t>(a));
        float hi = lo;
        for (std::size_t i = 1; i < points.dim(0); ++i) {
            lo = std::min(lo, points(i, static_cast<std::size_t>(a)));
            hi = std::max(hi, points(i, static_cast<std::size_t>(a)));
        }
        center_[static_cast<std::size_t>(a)] = 0.5f * (lo + hi);
        scale_[static_cast<std::size_t>(a)] = std::max(0.5f * (hi - lo), 1e-6f);
    }

    const std::size_t in = static_cast<std::size_t>(input_dim());
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const std::size_t c = static_cast<std::size_t>(cfg_.channels);
    w1_ = Tensor({h, in});
    b1_ = Tensor({h});
    w2_ = Tensor({c, h});
    b2_ = Tensor({c});

    std::mt19937_64 rng(cfg_.seed);
    std::normal_distribution<float> n1(0.0f, 1.0f / std::sqrt(static_cast<float>(in)));
    std::normal_distribution<float> n2(0.0f, 1.0f / std::sqrt(static_cast<float>(h)));
    for (float& v : w1_.data) v = n1(rng);
    for (float& v : w2_.data) v = n2(rng);
}

void ToyPointModel::encode(const Tensor& points, Tensor& out) const {
    const std::size_t n = points.dim(0);
    const std::size_t freqs = static_cast<std::size_t>(cfg_.frequencies);
    out = Tensor({n, static_cast<std::size_t>(input_dim())});
    for (std::size_t i = 0; i < n; ++i) {
        float* row = out.row(i);
        for (std::size_t a = 0; a < 3; ++a) {
            const float v = (points(i, a) - center_[a]) / scale_[a];
            float omega = std::numbers::pi_v<float>;
            for (std::size_t f = 0; f < freqs; ++f) {
                row[(a * freqs + f) * 2] = std::sin(omega * v);
                row[(a * freqs + f) * 2 + 1] = std::cos(omega * v);
                omega *= 2.0f;
            }
        }
    }
}

const Tensor& ToyPointModel::forward_cached(const Tensor& points, Cache& cache) const {
    if (points.rank() != 2 || points.dim(1) != 3)
        throw ValidationError("toy model: points must be [N,3]");
    const std::size_t n = points.dim(0);
    const std::size_t in = static_cast<std::size_t>(input_dim());
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const std::size_t c = static_cast<std::size_t>(cfg_.channels);

    encode(points, cache.encoded);
    cache.hidden = Tensor({n, h});
    cache.raw = Tensor({n, c});
    cache.output = Tensor({n, c});
    cache.raw_norm.assign(n, 0.0f);

    for (std::size_t i = 0; i < n; ++i) {
        const float* enc = cache.encoded.row(i);
        float* hid = cache.hidden.row(i);
        for (std::size_t j = 0; j < h; ++j)
            hid[j] = std::tanh(kernels::dot(w1_.row(j), enc, in) + b1_.data[j]);

        float* raw = cache.raw.row(i);
        for (std::size_t j = 0; j < c; ++j)
            raw[j] = kernels::dot(w2_.row(j), hid, h) + b2_.data[j];

        const float norm = std::sqrt(kernels::squared_norm(raw, c));
        cache.raw_norm[i] = norm;
        float* out = cache.output.row(i);
        if (norm < kNormFloor) {
            std::fill(out, out + c, 0.0f);
        } else {
            const float inv = 1.0f / norm;
            for (std::size_t j = 0; j < c; ++j) out[j] = raw[j] * inv;
        }
    }
    return cache.output;
}

Tensor ToyPointModel::forward(const Tensor& points) const {
    Cache cache;
    forward_cached(points, cache);
    return std::move(cache.output);
}

ToyPointModel::Gradients ToyPointModel::zero_gradients() const {
    Gradients g;
    g.w1 = Tensor(w1_.shape);
    g.b1 = Tensor(b1_.shape);
    g.w2 = Tensor(w2_.shape);
    g.b2 = Tensor(b2_.shape);
    return g;
}

void ToyPointModel::backward(const Cache& cache, const Tensor& grad_output, Gradients& g) const {
    const std::size_t n = cache.output.dim(0);
    const std::size_t in = static_cast<std::size_t>(input_dim());
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const std::size_t c = static_cast<std::size_t>(cfg_.channels);
    if (grad_output.shape != cache.output.shape)
        throw ValidationError("toy model backward: gradient shape mismatch");

    std::vector<float> gy(c), gh(h), gpre(h);
    for (std::size_t i = 0; i < n; ++i) {
        const float* go = grad_output.row(i);
        bool nonzero = false;
        for (std::size_t j = 0; j < c; ++j) nonzero |= (go[j] != 0.0f);
        if (!nonzero) continue;

        const float norm = cache.raw_norm[i];
        const float* out = cache.output.row(i);
        if (norm < kNormFloor) continue;
        // Through y -> y/|y|: g_y = (g_o - out * <out,g_o>) / |y|
        const float proj = kernels::dot(out, go, c);
        const float inv = 1.0f / norm;
        for (std::size_t j = 0; j < c; ++j) gy[j] = (go[j] - out[j] * proj) * inv;

        const float* hid = cache.hidden.row(i);
        for (std::size_t j = 0; j < c; ++j) {
            kernels::axpy(g.w2.row(j), hid, gy[j], h);
            g.b2.data[j] += gy[j];
        }
        std::fill(gh.begin(), gh.end(), 0.0f);
        for (std::size_t j = 0; j < c; ++j) kernels::axpy(gh.data(), w2_.row(j), gy[j], h);

        for (std::size_t j = 0; j < h; ++j) gpre[j] = gh[j] * (1.0f - hid[j] * hid[j]);

        const float* enc = cache.encoded.row(i);
        for (std::size_t j = 0; j < h; ++j) {
            if (gpre[j] == 0.0f) continue;
            kernels::axpy(g.w1.row(j), enc, gpre[j], in);
            g.b1.data[j] += gpre[j];
        }
    }
}

void ToyPointModel::step(const Gradients& g, float lr) {
    kernels::axpy(w1_.data.data(), g.w1.data.data(), -lr, w1_.numel());
    kernels::axpy(b1_.data.data(), g.b1.data.data(), -lr, b1_.numel());
    kernels::axpy(w2_.data.data(), g.w2.data.data(), -lr, w2_.numel());
    kernels::axpy(b2_.data.data(), g.b2.data.data(), -lr, b2_.numel());
}

void ToyPointModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    io::write_tensor(w1_, dir / "w1.ovt");
    io::write_tensor(b1_, dir / "b1.ovt");
    io::write_tensor(w2_, dir / "w2.ovt");
    io::write_tensor(b2_, dir / "b2.ovt");
    Tensor transform({2, 3});
    for (std::size_t a = 0; a < 3; ++a) {
        transform(0, a) = center_[a];
        transform(1, a) = scale_[a];
    }
    io::write_tensor(transform, dir / "input_transform.ovt");

    nlohmann::json j;
    j["hidden"] = cfg_.hidden;
    j["frequencies"] = cfg_.frequencies;
    j["channels"] = cfg_.channels;
    j["tau_ce"] = cfg_.tau_ce;
    j["seed"] = cfg_.seed;
    std::ofstream f(dir / "model.json", std::ios::trunc);
    if (!f) throw IoFailure("cannot open for writing: " + (dir / "model.json").string());
    f << j.dump(2) << "\n";
}

ToyPointModel ToyPointModel::load(const std::filesystem::path& dir) {
    std::ifstream f(dir / "model.json");
    if (!f) throw IoFailure("cannot open: " + (dir / "model.json").string());
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError((dir / "model.json").string() + ": malformed JSON");

    ToyPointModel m;
    try {
        m.cfg_.hidden = j.at("hidden").get<int>();
        m.cfg_.frequencies = j.at("frequencies").get<int>();
        m.cfg_.channels = j.at("channels").get<int>();
        m.cfg_.tau_ce = j.at("tau_ce").get<float>();
        m.cfg_.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError((dir / "model.json").string() + ": " + e.what());
    }
    m.w1_ = io::read_tensor_f32(dir / "w1.ovt");
    m.b1_ = io::read_tensor_f32(dir / "b1.ovt");
    m.w2_ = io::read_tensor_f32(dir / "w2.ovt");
    m.b2_ = io::read_tensor_f32(dir / "b2.ovt");
    const Tensor transform = io::read_tensor_f32(dir / "input_transform.ovt");
    if (transform.shape != std::vector<std::size_t>{2, 3})
        throw ShapeMismatch((dir / "input_transform.ovt").string() + ": expected shape [2,3]");
    for (std::size_t a = 0; a < 3; ++a) {
        m.center_[a] = transform(0, a);
        m.scale_[a] = transform(1, a);
    }
    const std::size_t in = static_cast<std::size_t>(m.input_dim());
    const std::size_t h = static_cast<std::size_t>(m.cfg_.hidden);
    const std::size_t c = static_cast<std::size_t>(m.cfg_.channels);
    if (m.w1_.shape != std::vector<std::size_t>{h, in} ||
        m.b1_.shape != std::vector<std::size_t>{h} ||
        m.w2_.shape != std::vector<std::size_t>{c, h} ||
        m.b2_.shape != std::vector<std::size_t>{c})
        throw ShapeMismatch(dir.string() + ": checkpoint tensor shapes inconsistent with model.json");
    return m;
}

void ema_update(EmaBuffer& buf, const Tensor& current) {
    if (!buf.initialized) {
        buf.values = current;
        buf.initialized = true;
        return;
    }
    if (buf.values.shape != current.shape)
        throw ShapeMismatch("ema_update: buffer and input shapes differ");
    const float a = buf.alpha;
    for (std::size_t i = 0; i < current.numel(); ++i)
        buf.values.data[i] = a * buf.values.data[i] + (1.0f - a) * current.data[i];
}

namespace {

// Accumulates mean (1 - cos) over rows valid on both sides, with gradients
// w.r.t. the left rows; returns the number of rows included.
std::size_t cosine_level(const PointFeatureSet& lhs, const PointFeatureSet& rhs, double& loss,
                         Tensor& grad) {
    if (lhs.features.shape != rhs.features.shape)
        throw ShapeMismatch("cosine_distill_loss: paired feature shapes differ");
    const std::size_t n = lhs.size();
    const std::size_t c = lhs.channels();
    grad = Tensor({n, c});

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i)
        if (lhs.valid[i] && rhs.valid[i]) rows.push_back(i);
    if (rows.empty()) {
        loss = 0;
        return 0;
    }

    const double inv_count = 1.0 / static_cast<double>(rows.size());
    double acc = 0;
    for (std::size_t i : rows) {
        const float* a = lhs.features.row(i);
        const float* b = rhs.features.row(i);
        double na2 = 0, nb2 = 0, ab = 0;
        for (std::size_t j = 0; j < c; ++j) {
            na2 += static_cast<double>(a[j]) * a[j];
            nb2 += static_cast<double>(b[j]) * b[j];
            ab += static_cast<double>(a[j]) * b[j];
        }
        const double na = std::sqrt(na2);
        const double nb = std::sqrt(nb2);
        if (na < kNormFloor || nb < kNormFloor)
            throw ValidationError("cosine_distill_loss: zero-norm row marked valid");
        const double cosv = ab / (na * nb);
        acc += 1.0 - cosv;
        // d(1-cos)/da = -(b/(|a||b|) - cos * a/|a|^2)
        float* g = grad.row(i);
        const double s1 = 1.0 / (na * nb);
        const double s2 = cosv / na2;
        for (std::size_t j = 0; j < c; ++j)
            g[j] = static_cast<float>(-inv_count * (b[j] * s1 - a[j] * s2));
    }
    loss = acc * inv_count;
    return rows.size();
}

}  // namespace

DistillLoss cosine_distill_loss(const PointFeatureSet& f3d, const PointFeatureSet& target,
                                const PointFeatureSet& pooled3d,
                                const PointFeatureSet& pooled_target) {
    DistillLoss out;
    const std::size_t np = cosine_level(f3d, target, out.point_level, out.grad_points);
    if (np == 0) throw NoValidPoints("cosine_distill_loss: no row valid on both sides");
    cosine_level(pooled3d, pooled_target, out.super_level, out.grad_pooled);
    out.total = out.point_level + out.super_level;
    return out;
}

namespace {

std::vector<std::int32_t> argmax_labels(const Tensor& rows, const ClassEmbeddings& emb) {
    const std::size_t n = rows.dim(0);
    const std::size_t c = rows.dim(1);
    const std::size_t k = emb.class_count();
    std::vector<std::int32_t> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = rows.row(i);
        std::int32_t best = 0;
        float best_score = kernels::dot(row, emb.vectors.row(0), c);
        for (std::size_t cls = 1; cls < k; ++cls) {
            const float s = kernels::dot(row, emb.vectors.row(cls), c);
            if (s > best_score) {
                best_score = s;
                best = static_cast<std::int32_t>(cls);
            }
        }
        out[i] = best;
    }
    return out;
}

}  // namespace

PseudoLabels pseudo_labels(const EmaBuffer& buf, const SuperpointPartition& part,
                           const ClassEmbeddings& emb) {
    if (!buf.initialized) throw Uninitialized("pseudo_labels: EMA buffer never updated");
    emb.validate();
    if (buf.values.rank() != 2 || buf.values.dim(1) != emb.channels())
        throw ChannelMismatch("pseudo_labels: buffer channels differ from embeddings");
    part.validate();
    if (buf.values.dim(0) != part.assignment.size())
        throw ValidationError("pseudo_labels: partition does not cover the buffer rows");

    PseudoLabels out;
    out.point_labels = argmax_labels(buf.values, emb);

    const std::size_t c = buf.values.dim(1);
    const std::size_t L = static_cast<std::size_t>(part.count);
    std::vector<double> acc(L * c, 0.0);
    for (std::size_t i = 0; i < buf.values.dim(0); ++i) {
        const std::size_t l = static_cast<std::size_t>(part.assignment[i]);
        const float* row = buf.values.row(i);
        for (std::size_t j = 0; j < c; ++j) acc[l * c + j] += row[j];
    }
    Tensor pooled({L, c});
    for (std::size_t l = 0; l < L; ++l) {
        const double inv = 1.0 / part.sizes[l];
        for (std::size_t j = 0; j < c; ++j)
            pooled(l, j) = static_cast<float>(acc[l * c + j] * inv);
    }
    l2_normalize_rows_inplace(pooled);
    out.superpoint_labels = argmax_labels(pooled, emb);
    return out;
}

namespace {

// Mean softmax cross-entropy over similarity logits for one level.
void ce_level(const PointFeatureSet& f, const ClassEmbeddings& emb,
              const std::vector<std::int32_t>& labels, float tau, double& loss, Tensor& grad) {
    const std::size_t n = f.size();
    const std::size_t c = f.channels();
    const std::size_t k = emb.class_count();
    if (labels.size() != n)
        throw ValidationError("self_distill_loss: label count differs from rows");
    grad = Tensor({n, c});

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == kInvalidLabel || !f.valid[i]) continue;
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
            throw LabelOutOfRange("self_distill_loss: pseudo label " + std::to_string(labels[i]) +
                                  " outside [0," + std::to_string(k) + ")");
        rows.push_back(i);
    }
    loss = 0;
    if (rows.empty()) return;

    const double inv_count = 1.0 / static_cast<double>(rows.size());
    std::vector<double> logits(k), prob(k);
    double acc = 0;
    for (std::size_t i : rows) {
        const float* row = f.features.row(i);
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t cls = 0; cls < k; ++cls) {
            logits[cls] = static_cast<double>(kernels::dot(row, emb.vectors.row(cls), c)) / tau;
            peak = std::max(peak, logits[cls]);
        }
        double denom = 0;
        for (std::size_t cls = 0; cls < k; ++cls) {
            prob[cls] = std::exp(logits[cls] - peak);
            denom += prob[cls];
        }
        const std::size_t y = static_cast<std::size_t>(labels[i]);
        acc += std::log(denom) - (logits[y] - peak);

        float* g = grad.row(i);
        for (std::size_t cls = 0; cls < k; ++cls) {
            const double coeff = (prob[cls] / denom - (cls == y ? 1.0 : 0.0)) * inv_count / tau;
            kernels::axpy(g, emb.vectors.row(cls), static_cast<float>(coeff), c);
        }
    }
    loss = acc * inv_count;
}

}  // namespace

DistillLoss self_distill_loss(const PointFeatureSet& f3d, const PointFeatureSet& pooled3d,
                              const ClassEmbeddings& emb,
                              const std::vector<std::int32_t>& point_pseudo,
                              const std::vector<std::int32_t>& sp_pseudo, float tau_ce) {
    emb.validate();
    if (!(tau_ce > 0)) throw ValidationError("self_distill_loss: tau_ce must be positive");
    if (f3d.channels() != emb.channels() || pooled3d.channels() != emb.channels())
        throw ChannelMismatch("self_distill_loss: channels differ from embeddings");

    DistillLoss out;
    ce_level(f3d, emb, point_pseudo, tau_ce, out.point_level, out.grad_points);
    ce_level(pooled3d, emb, sp_pseudo, tau_ce, out.super_level, out.grad_pooled);
    out.total = out.point_level + out.super_level;
    return out;
}

void TrainSchedule::validate() const {
    if (total_epochs < 0) throw ValidationError("schedule: total_epochs must be >= 0");
    if (phase1_epochs < 0 || phase1_epochs > total_epochs)
        throw ValidationError("schedule: phase1_epochs must lie in [0, total_epochs]");
    if (!(learning_rate > 0)) throw ValidationError("schedule: learning rate must be positive");
    if (!(lr_final_scale > 0 && lr_final_scale <= 1))
        throw ValidationError("schedule: lr_final_scale must lie in (0,1]");
    if (alpha < 0 || alpha > 1) throw ValidationError("schedule: alpha must lie in [0,1]");
    if (!(tau_ce > 0)) throw ValidationError("schedule: tau_ce must be positive");
    if (hidden < 1 || frequencies < 1)
        throw ValidationError("schedule: hidden and frequencies must be positive");
}

TrainResult train(const PointScene& scene, const PointFeatureSet& fused_targets,
                  const SuperpointPartition& part, const ClassEmbeddings& emb,
                  const TrainSchedule& sched) {
    sched.validate();
    scene.validate();
    part.validate();
    const std::size_t n = scene.size();
    if (fused_targets.size() != n || part.assignment.size() != n)
        throw ValidationError("train: targets and partition must cover the scene points");
    const std::size_t c = fused_targets.channels();
    if (emb.channels() != c) throw ChannelMismatch("train: embeddings differ from target channels");

    bool any_valid = false;
    for (std::uint8_t v : fused_targets.valid) any_valid |= (v != 0);
    if (!any_valid) throw NoValidPoints("train: no valid target row");

    // Frozen teacher side of Eq. 10: pooled targets and their broadcast.
    const PointFeatureSet target_sp = superpoint_pool(fused_targets, part);
    const PointFeatureSet target_pt = superpoint_broadcast(target_sp, part);

    TrainResult result;
    ToyModelConfig mcfg;
    mcfg.hidden = sched.hidden;
    mcfg.frequencies = sched.frequencies;
    mcfg.channels = static_cast<int>(c);
    mcfg.tau_ce = sched.tau_ce;
    mcfg.seed = sched.seed;
    result.model = ToyPointModel(mcfg, scene.points);

    EmaBuffer buffer;
    buffer.alpha = sched.alpha;

    const std::size_t L = static_cast<std::size_t>(part.count);
    ToyPointModel::Cache cache;
    std::vector<double> pool_acc(L * c);
    std::vector<double> pool_norm(L);
    Tensor pooled_grad_raw({L, c});

    for (int epoch = 0; epoch < sched.total_epochs; ++epoch) {
        const float t = sched.total_epochs > 1
                            ? static_cast<float>(epoch) / static_cast<float>(sched.total_epochs - 1)
                            : 0.0f;
        const float lr = sched.learning_rate * (1.0f - (1.0f - sched.lr_final_scale) * t);

        const Tensor& f3d = result.model.forward_cached(scene.points, cache);
        PointFeatureSet f3d_set;
        f3d_set.features = f3d;
        f3d_set.valid.assign(n, 1);
        f3d_set.view_count.assign(n, 1);

        // Superpoint means of the model output, normalized; raw norms kept
        // for the backward chain.
        std::fill(pool_acc.begin(), pool_acc.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t l = static_cast<std::size_t>(part.assignment[i]);
            const float* row = f3d.row(i);
            for (std::size_t j = 0; j < c; ++j) pool_acc[l * c + j] += row[j];
        }
        PointFeatureSet pooled3d;
        pooled3d.features = Tensor({L, c});
        pooled3d.valid.assign(L, 1);
        pooled3d.view_count.assign(L, 1);
        for (std::size_t l = 0; l < L; ++l) {
            const double inv = 1.0 / part.sizes[l];
            double norm2 = 0;
            for (std::size_t j = 0; j < c; ++j) {
                const double m = pool_acc[l * c + j] * inv;
                pool_acc[l * c + j] = m;
                norm2 += m * m;
            }
            pool_norm[l] = std::sqrt(norm2);
            float* row = pooled3d.features.row(l);
            if (pool_norm[l] < kNormFloor) {
                std::fill(row, row + c, 0.0f);
                pooled3d.valid[l] = 0;
                pooled3d.view_count[l] = 0;
            } else {
                for (std::size_t j = 0; j < c; ++j)
                    row[j] = static_cast<float>(pool_acc[l * c + j] / pool_norm[l]);
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;

        DistillLoss cosine = cosine_distill_loss(f3d_set, target_pt, pooled3d, target_sp);
        stats.point_loss = cosine.point_level;
        stats.super_loss = cosine.super_level;

        Tensor grad_points = std::move(cosine.grad_points);
        Tensor grad_pooled = std::move(cosine.grad_pooled);

        if (epoch >= sched.phase1_epochs) {
            ema_update(buffer, f3d);
            const PseudoLabels labels = pseudo_labels(buffer, part, emb);
            DistillLoss self = self_distill_loss(f3d_set, pooled3d, emb, labels.point_labels,
                                                 labels.superpoint_labels, sched.tau_ce);
            stats.ce_point_loss = self.point_level;
            stats.ce_super_loss = self.super_level;
            kernels::axpy(grad_points.data.data(), self.grad_points.data.data(), 1.0f,
                          grad_points.numel());
            kernels::axpy(grad_pooled.data.data(), self.grad_pooled.data.data(), 1.0f,
                          grad_pooled.numel());
        }
        stats.total = stats.point_loss + stats.super_loss + stats.ce_point_loss +
                      stats.ce_super_loss;
        result.log.push_back(stats);

        // Chain pooled gradients back to per-point rows: through the row
        // normalization, then the segment mean.
        for (std::size_t l = 0; l < L; ++l) {
            float* dst = pooled_grad_raw.row(l);
            if (!pooled3d.valid[l]) {
                std::fill(dst, dst + c, 0.0f);
                continue;
            }
            const float* g = grad_pooled.row(l);
            const float* p = pooled3d.features.row(l);
            const float proj = kernels::dot(p, g, c);
            const float inv = static_cast<float>(1.0 / pool_norm[l]) /
                              static_cast<float>(part.sizes[l]);
            for (std::size_t j = 0; j < c; ++j) dst[j] = (g[j] - p[j] * proj) * inv;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t l = static_cast<std::size_t>(part.assignment[i]);
            kernels::axpy(grad_points.row(i), pooled_grad_raw.row(l), 1.0f, c);
        }

        ToyPointModel::Gradients grads = result.model.zero_gradients();
        result.model.backward(cache, grad_points, grads);
        result.model.step(grads, lr);
    }
    return result;
}

void save_train_log(const std::vector<EpochStats>& log, const std::filesystem::path& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const EpochStats& e : log) {
        arr.push_back({{"epoch", e.epoch},
                       {"lr", e.lr},
                       {"point_loss", e.point_loss},
                       {"super_loss", e.super_loss},
                       {"ce_point_loss", e.ce_point_loss},
                       {"ce_super_loss", e.ce_super_loss},
                       {"total", e.total}});
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoFailure("cannot open for writing: " + path.string());
    f << arr.dump(2) << "\n";
}

}  // namespace ovfuse
