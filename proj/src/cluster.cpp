#include "terraclust/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace terraclust {

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

std::vector<std::vector<int>> build_chunklets(int n,
                                              const std::vector<std::pair<int, int>>& hard_links) {
    UnionFind uf(n);
    for (const auto& [a, b] : hard_links) {
        if (a < 0 || b < 0 || a >= n || b >= n)
            throw std::invalid_argument("build_chunklets: link index out of range");
        uf.unite(a, b);
    }
    std::unordered_map<int, int> root_to_chunklet;
    std::vector<std::vector<int>> chunklets;
    for (int i = 0; i < n; ++i) {
        const int root = uf.find(i);
        auto [it, inserted] = root_to_chunklet.emplace(root, static_cast<int>(chunklets.size()));
        if (inserted) chunklets.emplace_back();
        chunklets[it->second].push_back(i);
    }
    return chunklets;
}

std::vector<double> kmeanspp_init(const std::vector<double>& points, int m, int dim,
                                  const std::vector<double>& masses, int k, Rng& rng) {
    if (m < k) throw std::invalid_argument("kmeanspp_init: fewer points than centers");
    std::vector<double> centroids(static_cast<size_t>(k) * dim);
    std::vector<double> min_d2(m, std::numeric_limits<double>::infinity());
    std::vector<char> chosen(m, 0);

    auto copy_center = [&](int t, int u) {
        std::copy_n(&points[static_cast<size_t>(u) * dim], dim,
                    &centroids[static_cast<size_t>(t) * dim]);
        chosen[u] = 1;
    };

    const int first = static_cast<int>(rng.weighted_index(masses));
    copy_center(0, first);
    for (int t = 1; t < k; ++t) {
        const double* last = &centroids[static_cast<size_t>(t - 1) * dim];
        std::vector<double> weights(m, 0.0);
        double total = 0.0;
        for (int u = 0; u < m; ++u) {
            double d2 = 0.0;
            const double* p = &points[static_cast<size_t>(u) * dim];
            for (int c = 0; c < dim; ++c) {
                const double d = p[c] - last[c];
                d2 += d * d;
            }
            min_d2[u] = std::min(min_d2[u], d2);
            if (!chosen[u]) {
                weights[u] = masses[u] * min_d2[u];
                total += weights[u];
            }
        }
        int next = -1;
        if (total > 0.0) {
            next = static_cast<int>(rng.weighted_index(weights));
            if (chosen[next]) next = -1;  // numeric edge; fall through
        }
        if (next < 0) {
            // All remaining candidates coincide with chosen centers; take the
            // smallest unchosen index for a deterministic fill.
            for (int u = 0; u < m; ++u)
                if (!chosen[u]) {
                    next = u;
                    break;
                }
        }
        copy_center(t, next);
    }
    return centroids;
}

double penalized_objective(const EmbeddingSet& embeddings, const std::vector<int>& assignments,
                           const std::vector<double>& centroids, int k,
                           const ConstraintSet& constraints, double lambda) {
    const int64_t n = embeddings.n_patches;
    const int64_t dim = embeddings.dim;
    std::unordered_map<int64_t, int> index_of;
    index_of.reserve(n);
    for (int64_t i = 0; i < n; ++i) index_of.emplace(embeddings.patch_ids[i], static_cast<int>(i));

    double J = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const float* x = embeddings.row(i);
        const double* c = &centroids[static_cast<size_t>(assignments[i]) * dim];
        for (int64_t d = 0; d < dim; ++d) {
            const double diff = x[d] - c[d];
            J += diff * diff;
        }
    }
    (void)k;
    for (const auto& s : constraints.soft_links) {
        const int ia = index_of.at(s.a), ib = index_of.at(s.b);
        if (assignments[ia] != assignments[ib]) J += lambda * s.confidence;
    }
    for (const auto& cl : constraints.cannot_links) {
        const int ia = index_of.at(cl.a), ib = index_of.at(cl.b);
        if (assignments[ia] == assignments[ib]) J += lambda * cl.weight;
    }
    return J;
}

ClusterModel pcc_kmeans(const EmbeddingSet& embeddings, int k, const ConstraintSet& constraints,
                        const PccConfig& cfg) {
    const int n = static_cast<int>(embeddings.n_patches);
    const int dim = static_cast<int>(embeddings.dim);
    if (k < 2) throw std::invalid_argument("pcc_kmeans: k must be >= 2");
    if (n == 0) throw std::invalid_argument("pcc_kmeans: empty embeddings");
    for (const float v : embeddings.values)
        if (!std::isfinite(v)) throw std::runtime_error("pcc_kmeans: non-finite embedding value");

    std::unordered_map<int64_t, int> index_of;
    index_of.reserve(n);
    for (int i = 0; i < n; ++i) index_of.emplace(embeddings.patch_ids[i], i);
    auto resolve = [&](int64_t id) {
        auto it = index_of.find(id);
        if (it == index_of.end())
            throw std::invalid_argument("pcc_kmeans: constraint references unknown patch " +
                                        std::to_string(id));
        return it->second;
    };

    std::vector<std::pair<int, int>> hard_idx;
    hard_idx.reserve(constraints.hard_links.size());
    for (const auto& h : constraints.hard_links)
        hard_idx.emplace_back(resolve(h.a), resolve(h.b));
    auto chunklets = build_chunklets(n, hard_idx);
    const int m = static_cast<int>(chunklets.size());
    if (m < k)
        throw std::runtime_error("pcc_kmeans: infeasible, " + std::to_string(m) +
                                 " chunklets for k=" + std::to_string(k));

    // Per-chunklet aggregates: the distance term of moving chunklet u to
    // centroid C is sumsq_u - 2 <sum_u, C> + mass_u ||C||^2.
    std::vector<int> chunklet_of(n);
    std::vector<double> sums(static_cast<size_t>(m) * dim, 0.0);
    std::vector<double> sumsq(m, 0.0);
    std::vector<double> masses(m, 0.0);
    std::vector<double> chunklet_centroids(static_cast<size_t>(m) * dim);
    for (int u = 0; u < m; ++u) {
        for (int i : chunklets[u]) {
            chunklet_of[i] = u;
            const float* x = embeddings.row(i);
            double* s = &sums[static_cast<size_t>(u) * dim];
            for (int d = 0; d < dim; ++d) {
                s[d] += x[d];
                sumsq[u] += double(x[d]) * x[d];
            }
        }
        masses[u] = static_cast<double>(chunklets[u].size());
        for (int d = 0; d < dim; ++d)
            chunklet_centroids[static_cast<size_t>(u) * dim + d] =
                sums[static_cast<size_t>(u) * dim + d] / masses[u];
    }

    // Soft links between chunklets (within-chunklet links are always
    // satisfied); cannot-links penalize sharing a cluster.
    struct Edge {
        int other;
        double weight;
    };
    std::vector<std::vector<Edge>> soft_adj(m), cannot_adj(m);
    std::vector<double> soft_total(m, 0.0);
    {
        std::unordered_map<int64_t, double> soft_acc, cannot_acc;
        auto key = [m](int u, int v) { return static_cast<int64_t>(u) * m + v; };
        for (const auto& s : constraints.soft_links) {
            const int u = chunklet_of[resolve(s.a)];
            const int v = chunklet_of[resolve(s.b)];
            if (u == v) continue;
            soft_acc[key(std::min(u, v), std::max(u, v))] += s.confidence;
        }
        for (const auto& c : constraints.cannot_links) {
            const int u = chunklet_of[resolve(c.a)];
            const int v = chunklet_of[resolve(c.b)];
            if (u == v) continue;  // conflicting hard+cannot: hard wins
            cannot_acc[key(std::min(u, v), std::max(u, v))] += c.weight;
        }
        for (const auto& [kk, w] : soft_acc) {
            const int u = static_cast<int>(kk / m), v = static_cast<int>(kk % m);
            soft_adj[u].push_back({v, w});
            soft_adj[v].push_back({u, w});
            soft_total[u] += w;
            soft_total[v] += w;
        }
        for (const auto& [kk, w] : cannot_acc) {
            const int u = static_cast<int>(kk / m), v = static_cast<int>(kk % m);
            cannot_adj[u].push_back({v, w});
            cannot_adj[v].push_back({u, w});
        }
    }

    Rng rng(cfg.seed);
    std::vector<double> centroids = kmeanspp_init(chunklet_centroids, m, dim, masses, k, rng);

    // Initial assignment: each chunklet to the nearest centroid (distance
    // term only; penalties enter from the first sweep on).
    std::vector<int> assign_u(m, 0);
    auto dist_term = [&](int u, const double* c, double c_norm2) {
        const double* s = &sums[static_cast<size_t>(u) * dim];
        double dot = 0.0;
        for (int d = 0; d < dim; ++d) dot += s[d] * c[d];
        return sumsq[u] - 2.0 * dot + masses[u] * c_norm2;
    };
    std::vector<double> c_norm2(k);
    auto refresh_norms = [&] {
        for (int c = 0; c < k; ++c) {
            const double* cc = &centroids[static_cast<size_t>(c) * dim];
            double acc = 0.0;
            for (int d = 0; d < dim; ++d) acc += cc[d] * cc[d];
            c_norm2[c] = acc;
        }
    };
    refresh_norms();
    for (int u = 0; u < m; ++u) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int c = 0; c < k; ++c) {
            const double d = dist_term(u, &centroids[static_cast<size_t>(c) * dim], c_norm2[c]);
            if (d < best) {
                best = d;
                arg = c;
            }
        }
        assign_u[u] = arg;
    }

    ClusterModel model;
    model.k = k;
    model.dim = dim;

    auto update_centroids = [&] {
        std::vector<double> acc(static_cast<size_t>(k) * dim, 0.0);
        std::vector<double> mass(k, 0.0);
        for (int u = 0; u < m; ++u) {
            const int c = assign_u[u];
            const double* s = &sums[static_cast<size_t>(u) * dim];
            double* a = &acc[static_cast<size_t>(c) * dim];
            for (int d = 0; d < dim; ++d) a[d] += s[d];
            mass[c] += masses[u];
        }
        std::vector<int> empty;
        for (int c = 0; c < k; ++c) {
            if (mass[c] > 0.0) {
                for (int d = 0; d < dim; ++d)
                    centroids[static_cast<size_t>(c) * dim + d] =
                        acc[static_cast<size_t>(c) * dim + d] / mass[c];
            } else {
                empty.push_back(c);
            }
        }
        return empty;
    };

    auto expand_assignments = [&] {
        std::vector<int> a(n);
        for (int u = 0; u < m; ++u)
            for (int i : chunklets[u]) a[i] = assign_u[u];
        return a;
    };

    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> cost(k);
    std::vector<int> prev_reseeded, reseeded;

    // Replace the k-means++ seeds by the means of the initial assignment so
    // the first sweep already works against honest centroids.
    update_centroids();
    refresh_norms();

    int iter = 0;
    for (; iter < cfg.max_iters; ++iter) {
        // ICM sweep in seeded-random order; strict improvement moves only.
        rng.shuffle(order);
        bool changed = false;
        for (int u : order) {
            for (int c = 0; c < k; ++c)
                cost[c] = dist_term(u, &centroids[static_cast<size_t>(c) * dim], c_norm2[c]);
            if (cfg.lambda != 0.0) {
                // Violated soft mass = total minus links into the candidate
                // cluster; equivalently credit each neighbor's cluster.
                for (int c = 0; c < k; ++c) cost[c] += cfg.lambda * soft_total[u];
                for (const Edge& e : soft_adj[u]) cost[assign_u[e.other]] -= cfg.lambda * e.weight;
                for (const Edge& e : cannot_adj[u]) cost[assign_u[e.other]] += cfg.lambda * e.weight;
            }
            int best = assign_u[u];
            for (int c = 0; c < k; ++c)
                if (cost[c] < cost[best]) best = c;  // ties keep the current cluster
            if (best != assign_u[u]) {
                assign_u[u] = best;
                changed = true;
            }
        }

        std::vector<int> empty = update_centroids();
        refresh_norms();

        // Reseed empty clusters at the point farthest from its centroid
        // (J-neutral: the reseeded cluster has no members).
        reseeded.clear();
        if (!empty.empty()) {
            const std::vector<int> point_assign = expand_assignments();
            std::vector<char> used(n, 0);
            for (int c : empty) {
                double far_d = -1.0;
                int far_i = -1;
                for (int i = 0; i < n; ++i) {
                    if (used[i]) continue;
                    const float* x = embeddings.row(i);
                    const double* cc = &centroids[static_cast<size_t>(point_assign[i]) * dim];
                    double d2 = 0.0;
                    for (int d = 0; d < dim; ++d) {
                        const double diff = x[d] - cc[d];
                        d2 += diff * diff;
                    }
                    if (d2 > far_d) {
                        far_d = d2;
                        far_i = i;
                    }
                }
                if (far_i >= 0) {
                    used[far_i] = 1;
                    const float* x = embeddings.row(far_i);
                    for (int d = 0; d < dim; ++d)
                        centroids[static_cast<size_t>(c) * dim + d] = x[d];
                    reseeded.push_back(far_i);
                }
            }
            refresh_norms();
        }

        const std::vector<int> point_assign = expand_assignments();
        model.objective_history.push_back(
            penalized_objective(embeddings, point_assign, centroids, k, constraints, cfg.lambda));

        if (!changed) {
            // A reseed warrants one more sweep unless it reseeded the very
            // same points again (stalled empty cluster).
            if (reseeded.empty() || reseeded == prev_reseeded) {
                ++iter;
                break;
            }
        }
        prev_reseeded = reseeded;
    }

    model.assignments = expand_assignments();
    model.centroids = centroids;
    model.chunklets = chunklets;
    model.iterations_run = iter;
    model.objective =
        penalized_objective(embeddings, model.assignments, centroids, k, constraints, cfg.lambda);
    return model;
}

std::vector<int> assign_holdout(const EmbeddingSet& embeddings, const ClusterModel& model) {
    if (embeddings.n_patches > 0 && embeddings.dim != model.dim)
        throw std::invalid_argument("assign_holdout: dimension mismatch");
    std::vector<int> out(embeddings.n_patches);
    for (int64_t i = 0; i < embeddings.n_patches; ++i) {
        const float* x = embeddings.row(i);
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int c = 0; c < model.k; ++c) {
            const double* cc = model.centroid(c);
            double d2 = 0.0;
            for (int64_t d = 0; d < model.dim; ++d) {
                const double diff = x[d] - cc[d];
                d2 += diff * diff;
            }
            if (d2 < best) {  // strict: ties keep the lowest index
                best = d2;
                arg = c;
            }
        }
        out[i] = arg;
    }
    return out;
}

}  // namespace terraclust
