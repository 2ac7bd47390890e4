#include "ovfuse/superpoint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ovfuse/kernels.hpp"

namespace ovfuse {

void SuperpointPartition::validate() const {
    if (count < 0 || sizes.size() != static_cast<std::size_t>(count))
        throw ValidationError("partition: segment count does not match sizes array");
    std::vector<std::int32_t> seen(static_cast<std::size_t>(count), 0);
    for (std::int32_t a : assignment) {
        if (a < 0 || a >= count)
            throw ValidationError("partition: assignment outside [0,L)");
        ++seen[static_cast<std::size_t>(a)];
    }
    for (std::int32_t l = 0; l < count; ++l) {
        if (sizes[static_cast<std::size_t>(l)] < 1)
            throw ValidationError("partition: segment " + std::to_string(l) + " is empty");
        if (seen[static_cast<std::size_t>(l)] != sizes[static_cast<std::size_t>(l)])
            throw ValidationError("partition: stored size wrong for segment " + std::to_string(l));
    }
}

namespace {

struct UnionFind {
    std::vector<std::int32_t> parent;
    std::vector<std::int32_t> size;

    explicit UnionFind(std::size_t n) : parent(n), size(n, 1) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    std::int32_t find(std::int32_t v) {
        while (parent[static_cast<std::size_t>(v)] != v) {
            parent[static_cast<std::size_t>(v)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
            v = parent[static_cast<std::size_t>(v)];
        }
        return v;
    }
    std::int32_t join(std::int32_t a, std::int32_t b) {
        if (size[static_cast<std::size_t>(a)] < size[static_cast<std::size_t>(b)]) std::swap(a, b);
        parent[static_cast<std::size_t>(b)] = a;
        size[static_cast<std::size_t>(a)] += size[static_cast<std::size_t>(b)];
        return a;
    }
};

struct Edge {
    float w;
    std::int32_t u, v;
    bool operator<(const Edge& o) const {
        if (w != o.w) return w < o.w;
        if (u != o.u) return u < o.u;
        return v < o.v;
    }
};

}  // namespace

SuperpointPartition segment_mesh(const PointScene& mesh, float k, int min_size) {
    mesh.validate();
    if (!mesh.has_mesh()) throw DegenerateMesh("segment_mesh: mesh has no faces");
    if (!(k > 0)) throw ValidationError("segment_mesh: merge threshold k must be positive");
    if (min_size < 1) throw ValidationError("segment_mesh: min_size must be at least 1");

    const std::size_t n = mesh.size();

    // Area-weighted vertex normals: the face cross product carries twice the
    // face area, so summing raw cross products weights by area.
    std::vector<std::array<double, 3>> normal(n, {0, 0, 0});
    for (const auto& f : mesh.faces) {
        const auto p = [&](std::int32_t v, int a) {
            return static_cast<double>(
                mesh.points(static_cast<std::size_t>(v), static_cast<std::size_t>(a)));
        };
        const double e1[3] = {p(f[1], 0) - p(f[0], 0), p(f[1], 1) - p(f[0], 1),
                              p(f[1], 2) - p(f[0], 2)};
        const double e2[3] = {p(f[2], 0) - p(f[0], 0), p(f[2], 1) - p(f[0], 1),
                              p(f[2], 2) - p(f[0], 2)};
        const double cr[3] = {e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
                              e1[0] * e2[1] - e1[1] * e2[0]};
        for (std::int32_t v : f)
            for (int a = 0; a < 3; ++a)
                normal[static_cast<std::size_t>(v)][static_cast<std::size_t>(a)] += cr[a];
    }
    for (auto& nv : normal) {
        const double len = std::sqrt(nv[0] * nv[0] + nv[1] * nv[1] + nv[2] * nv[2]);
        if (len > 0)
            for (double& a : nv) a /= len;
    }

    std::vector<Edge> edges;
    edges.reserve(mesh.faces.size() * 3);
    auto add_edge = [&](std::int32_t a, std::int32_t b) {
        if (a == b) return;
        if (a > b) std::swap(a, b);
        const auto& na = normal[static_cast<std::size_t>(a)];
        const auto& nb = normal[static_cast<std::size_t>(b)];
        const double d = na[0] * nb[0] + na[1] * nb[1] + na[2] * nb[2];
        edges.push_back({static_cast<float>(std::max(0.0, 1.0 - d)), a, b});
    };
    for (const auto& f : mesh.faces) {
        add_edge(f[0], f[1]);
        add_edge(f[1], f[2]);
        add_edge(f[0], f[2]);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](const Edge& a, const Edge& b) { return a.u == b.u && a.v == b.v && a.w == b.w; }),
                edges.end());

    UnionFind uf(n);
    std::vector<float> internal(n, 0.0f);  // max merged weight inside each component
    for (const Edge& e : edges) {
        const std::int32_t a = uf.find(e.u);
        const std::int32_t b = uf.find(e.v);
        if (a == b) continue;
        const float ta = internal[static_cast<std::size_t>(a)] +
                         k / static_cast<float>(uf.size[static_cast<std::size_t>(a)]);
        const float tb = internal[static_cast<std::size_t>(b)] +
                         k / static_cast<float>(uf.size[static_cast<std::size_t>(b)]);
        if (e.w <= std::min(ta, tb)) {
            const std::int32_t root = uf.join(a, b);
            internal[static_cast<std::size_t>(root)] = e.w;
        }
    }

    // Small-segment cleanup: walking edges in ascending weight merges each
    // undersized segment across its cheapest boundary edge first.
    for (const Edge& e : edges) {
        const std::int32_t a = uf.find(e.u);
        const std::int32_t b = uf.find(e.v);
        if (a == b) continue;
        if (uf.size[static_cast<std::size_t>(a)] < min_size ||
            uf.size[static_cast<std::size_t>(b)] < min_size)
            uf.join(a, b);
    }

    // Segment ids ordered by smallest member vertex.
    SuperpointPartition out;
    out.assignment.assign(n, -1);
    std::vector<std::int32_t> label(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t root = uf.find(static_cast<std::int32_t>(i));
        if (label[static_cast<std::size_t>(root)] < 0) {
            label[static_cast<std::size_t>(root)] = out.count++;
            out.sizes.push_back(0);
        }
        out.assignment[i] = label[static_cast<std::size_t>(root)];
        ++out.sizes[static_cast<std::size_t>(out.assignment[i])];
    }
    out.validate();
    return out;
}

SuperpointPartition identity_partition(std::size_t n_points) {
    if (n_points < 1) throw ValidationError("identity_partition: need at least one point");
    SuperpointPartition out;
    out.count = static_cast<std::int32_t>(n_points);
    out.assignment.resize(n_points);
    std::iota(out.assignment.begin(), out.assignment.end(), 0);
    out.sizes.assign(n_points, 1);
    return out;
}

PointFeatureSet superpoint_pool(const PointFeatureSet& f, const SuperpointPartition& part) {
    part.validate();
    if (f.size() != part.assignment.size())
        throw ValidationError("superpoint_pool: partition does not cover the feature rows");
    const std::size_t c = f.channels();
    const std::size_t L = static_cast<std::size_t>(part.count);

    std::vector<double> acc(L * c, 0.0);
    std::vector<std::int32_t> members(L, 0);
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!f.valid[i]) continue;
        const std::size_t l = static_cast<std::size_t>(part.assignment[i]);
        const float* row = f.features.row(i);
        double* dst = acc.data() + l * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += row[j];
        ++members[l];
    }

    PointFeatureSet out;
    out.features = Tensor({L, c});
    out.valid.assign(L, 0);
    out.view_count = std::move(members);
    for (std::size_t l = 0; l < L; ++l) {
        if (out.view_count[l] <= 0) continue;
        out.valid[l] = 1;
        float* row = out.features.row(l);
        const double inv = 1.0 / out.view_count[l];
        for (std::size_t j = 0; j < c; ++j) row[j] = static_cast<float>(acc[l * c + j] * inv);
    }
    l2_normalize_rows_inplace(out.features);
    return out;
}

PointFeatureSet superpoint_broadcast(const PointFeatureSet& pooled,
                                     const SuperpointPartition& part) {
    part.validate();
    if (pooled.size() != static_cast<std::size_t>(part.count))
        throw ValidationError("superpoint_broadcast: pooled rows do not match segment count");
    const std::size_t c = pooled.channels();
    const std::size_t n = part.assignment.size();

    PointFeatureSet out;
    out.features = Tensor({n, c});
    out.valid.assign(n, 0);
    out.view_count.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t l = static_cast<std::size_t>(part.assignment[i]);
        if (!pooled.valid[l]) continue;
        const float* src = pooled.features.row(l);
        std::copy(src, src + c, out.features.row(i));
        out.valid[i] = 1;
        out.view_count[i] = pooled.view_count[l];
    }
    return out;
}

}  // namespace ovfuse
