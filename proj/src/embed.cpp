#include "terraclust/embed.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Dense>

namespace terraclust {

EmbeddingSet fit_pca_whiten(const EmbeddingSet& embeddings, const PcaOptions& opts) {
    const int64_t n = embeddings.n_patches;
    const int64_t d = embeddings.dim;
    if (n < 2) throw std::invalid_argument("fit_pca_whiten: need at least 2 rows");

    int out_dim = opts.out_dim;
    if (out_dim <= 0) out_dim = d > 256 ? 256 : static_cast<int>(std::min<int64_t>(d, n - 1));
    if (out_dim > d) throw std::invalid_argument("fit_pca_whiten: out_dim exceeds input dim");
    if (n <= out_dim) throw std::invalid_argument("fit_pca_whiten: need n_patches > out_dim");

    Eigen::MatrixXd X(n, d);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < d; ++c) X(r, c) = embeddings.row(r)[c];

    Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;
    Eigen::MatrixXd cov = (X.adjoint() * X) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("fit_pca_whiten: eigendecomposition failed");

    // Eigen returns ascending eigenvalues; take the top out_dim, largest first.
    FeatureTransform t;
    t.in_dim = static_cast<int>(d);
    t.out_dim = out_dim;
    t.l2_normalized = opts.l2_normalize;
    t.pca_mean.assign(mean.data(), mean.data() + d);
    t.pca_basis.resize(static_cast<size_t>(out_dim) * d);
    t.whitening_scales.resize(out_dim);
    const double rank_floor = std::max(1e-10, 1e-12 * std::max(0.0, eig.eigenvalues().maxCoeff()));
    t.numerical_rank = 0;
    for (int i = 0; i < out_dim; ++i) {
        const int src = static_cast<int>(d) - 1 - i;
        double ev = eig.eigenvalues()(src);
        if (ev > rank_floor) ++t.numerical_rank;
        if (ev < 0.0) ev = 0.0;
        t.whitening_scales[i] = 1.0 / std::sqrt(ev + opts.eps);
        // Sign convention: largest-magnitude basis entry positive, so the
        // transform is unique and reproducible across eigensolver builds.
        Eigen::VectorXd v = eig.eigenvectors().col(src);
        int arg = 0;
        for (int j = 1; j < d; ++j)
            if (std::fabs(v(j)) > std::fabs(v(arg))) arg = j;
        if (v(arg) < 0.0) v = -v;
        for (int64_t c = 0; c < d; ++c) t.pca_basis[static_cast<size_t>(i) * d + c] = v(c);
    }

    EmbeddingSet out = apply_transform(t, embeddings, opts.l2_normalize);
    out.transform = t;
    return out;
}

EmbeddingSet apply_transform(const FeatureTransform& t, const EmbeddingSet& embeddings,
                             bool l2_normalize) {
    if (embeddings.dim != t.in_dim)
        throw std::invalid_argument("apply_transform: dimension mismatch");
    EmbeddingSet out;
    out.n_patches = embeddings.n_patches;
    out.dim = t.out_dim;
    out.patch_ids = embeddings.patch_ids;
    out.values.resize(static_cast<size_t>(out.n_patches) * t.out_dim);
    std::vector<double> centered(t.in_dim), projected(t.out_dim);
    for (int64_t r = 0; r < embeddings.n_patches; ++r) {
        const float* src = embeddings.row(r);
        for (int c = 0; c < t.in_dim; ++c) centered[c] = src[c] - t.pca_mean[c];
        double norm2 = 0.0;
        for (int o = 0; o < t.out_dim; ++o) {
            const double* basis = &t.pca_basis[static_cast<size_t>(o) * t.in_dim];
            double acc = 0.0;
            for (int c = 0; c < t.in_dim; ++c) acc += basis[c] * centered[c];
            acc *= t.whitening_scales[o];
            projected[o] = acc;
            norm2 += acc * acc;
        }
        const double inv = l2_normalize && norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 1.0;
        float* dst = out.row(r);
        for (int o = 0; o < t.out_dim; ++o) dst[o] = static_cast<float>(projected[o] * inv);
    }
    FeatureTransform rec = t;
    rec.l2_normalized = l2_normalize;
    out.transform = rec;
    return out;
}

namespace {

double sqdist(const double* a, const double* b, int dim) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

std::vector<Triplet> sample_triplets(const MetricModel& model, const float* features, int64_t n,
                                     const std::vector<int>& assignments, int k,
                                     const TripletConfig& cfg, Rng& rng) {
    std::vector<std::vector<int>> members(k);
    for (size_t i = 0; i < assignments.size(); ++i) {
        const int a = assignments[i];
        if (a < 0 || a >= k) throw std::invalid_argument("sample_triplets: assignment out of range");
        members[a].push_back(static_cast<int>(i));
    }
    int usable = 0;
    for (const auto& m : members)
        if (m.size() >= 2) ++usable;
    if (usable < 2)
        throw std::runtime_error("sample_triplets: need at least 2 clusters with 2+ members");

    // Anchor/positive pass.
    struct Pair {
        int anchor, positive, cluster;
    };
    std::vector<Pair> pairs;
    for (int c = 0; c < k; ++c) {
        const auto& m = members[c];
        if (m.size() < 2) continue;
        for (int s = 0; s < cfg.per_cluster; ++s) {
            const int anchor = m[rng.uniform_int(m.size())];
            int positive = anchor;
            while (positive == anchor) positive = m[rng.uniform_int(m.size())];
            pairs.push_back({anchor, positive, c});
        }
    }

    // Project only the points that entered the batch.
    std::vector<int> batch_points;
    for (const auto& p : pairs) {
        batch_points.push_back(p.anchor);
        batch_points.push_back(p.positive);
    }
    std::sort(batch_points.begin(), batch_points.end());
    batch_points.erase(std::unique(batch_points.begin(), batch_points.end()), batch_points.end());
    std::unordered_map<int, std::vector<double>> embedded;
    embedded.reserve(batch_points.size());
    for (int i : batch_points) {
        std::vector<double> out(model.out_dim);
        model.apply_row(&features[static_cast<size_t>(i) * model.in_dim], out.data());
        embedded.emplace(i, std::move(out));
    }
    const auto row = [&](int i) -> const double* { return embedded.at(i).data(); };

    std::vector<Triplet> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        const double d_ap = sqdist(row(p.anchor), row(p.positive), model.out_dim);
        int best = -1;
        double best_d = 0.0;
        for (int cand : batch_points) {
            if (assignments[cand] == p.cluster) continue;
            const double d_an = sqdist(row(p.anchor), row(cand), model.out_dim);
            if (d_an > d_ap && d_an < d_ap + cfg.margin) {
                // Hardest semi-hard candidate: smallest qualifying distance.
                if (best < 0 || d_an < best_d || (d_an == best_d && cand < best)) {
                    best = cand;
                    best_d = d_an;
                }
            }
        }
        if (best < 0) {
            // Uniform from a different cluster.
            int cluster = p.cluster;
            while (cluster == p.cluster || members[cluster].empty())
                cluster = static_cast<int>(rng.uniform_int(k));
            best = members[cluster][rng.uniform_int(members[cluster].size())];
        }
        out.push_back({p.anchor, p.positive, best});
    }
    return out;
}

namespace {

struct Projection {
    std::vector<double> out;      // out_dim
    std::vector<double> hidden;   // hidden_dim (post-tanh), empty for affine
};

Projection project(const MetricModel& m, const float* x) {
    Projection p;
    p.out.resize(m.out_dim);
    if (m.hidden_dim == 0) {
        m.apply_row(x, p.out.data());
        return p;
    }
    p.hidden.resize(m.hidden_dim);
    for (int j = 0; j < m.hidden_dim; ++j) {
        const double* w = &m.hidden_weights[static_cast<size_t>(j) * m.in_dim];
        double acc = m.hidden_bias[j];
        for (int i = 0; i < m.in_dim; ++i) acc += w[i] * x[i];
        p.hidden[j] = std::tanh(acc);
    }
    for (int o = 0; o < m.out_dim; ++o) {
        const double* w = &m.weights[static_cast<size_t>(o) * m.hidden_dim];
        double acc = m.bias[o];
        for (int j = 0; j < m.hidden_dim; ++j) acc += w[j] * p.hidden[j];
        p.out[o] = acc;
    }
    return p;
}

// Accumulates dL/d f(x) back into the parameter gradients for input x.
void backprop_point(const MetricModel& m, const float* x, const Projection& proj,
                    const std::vector<double>& d_out, TripletGradients& g) {
    if (m.hidden_dim == 0) {
        for (int o = 0; o < m.out_dim; ++o) {
            const double go = d_out[o];
            if (go == 0.0) continue;
            double* wrow = &g.d_weights[static_cast<size_t>(o) * m.in_dim];
            for (int i = 0; i < m.in_dim; ++i) wrow[i] += go * x[i];
            g.d_bias[o] += go;
        }
        return;
    }
    std::vector<double> d_hidden(m.hidden_dim, 0.0);
    for (int o = 0; o < m.out_dim; ++o) {
        const double go = d_out[o];
        if (go == 0.0) continue;
        double* wrow = &g.d_weights[static_cast<size_t>(o) * m.hidden_dim];
        const double* w = &m.weights[static_cast<size_t>(o) * m.hidden_dim];
        for (int j = 0; j < m.hidden_dim; ++j) {
            wrow[j] += go * proj.hidden[j];
            d_hidden[j] += go * w[j];
        }
        g.d_bias[o] += go;
    }
    for (int j = 0; j < m.hidden_dim; ++j) {
        const double gj = d_hidden[j] * (1.0 - proj.hidden[j] * proj.hidden[j]);
        if (gj == 0.0) continue;
        double* wrow = &g.d_hidden_weights[static_cast<size_t>(j) * m.in_dim];
        for (int i = 0; i < m.in_dim; ++i) wrow[i] += gj * x[i];
        g.d_hidden_bias[j] += gj;
    }
}

}  // namespace

double triplet_loss(const MetricModel& model, const std::vector<Triplet>& batch,
                    const float* features, int64_t n) {
    if (batch.empty()) throw std::invalid_argument("triplet_loss: empty batch");
    double total = 0.0;
    for (const auto& t : batch) {
        if (t.anchor >= n || t.positive >= n || t.negative >= n)
            throw std::invalid_argument("triplet_loss: index out of range");
        const Projection a = project(model, &features[static_cast<size_t>(t.anchor) * model.in_dim]);
        const Projection p = project(model, &features[static_cast<size_t>(t.positive) * model.in_dim]);
        const Projection g = project(model, &features[static_cast<size_t>(t.negative) * model.in_dim]);
        const double d_ap = sqdist(a.out.data(), p.out.data(), model.out_dim);
        const double d_an = sqdist(a.out.data(), g.out.data(), model.out_dim);
        total += std::max(0.0, d_ap - d_an + model.margin);
    }
    return total / static_cast<double>(batch.size());
}

double triplet_loss_and_grad(const MetricModel& model, const std::vector<Triplet>& batch,
                             const float* features, int64_t n, TripletGradients& grads) {
    if (batch.empty()) throw std::invalid_argument("triplet_loss_and_grad: empty batch");
    grads.d_weights.assign(model.weights.size(), 0.0);
    grads.d_bias.assign(model.bias.size(), 0.0);
    grads.d_hidden_weights.assign(model.hidden_weights.size(), 0.0);
    grads.d_hidden_bias.assign(model.hidden_bias.size(), 0.0);

    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    std::vector<double> d_a(model.out_dim), d_p(model.out_dim), d_n(model.out_dim);
    for (const auto& t : batch) {
        if (t.anchor >= n || t.positive >= n || t.negative >= n)
            throw std::invalid_argument("triplet_loss_and_grad: index out of range");
        const float* xa = &features[static_cast<size_t>(t.anchor) * model.in_dim];
        const float* xp = &features[static_cast<size_t>(t.positive) * model.in_dim];
        const float* xn = &features[static_cast<size_t>(t.negative) * model.in_dim];
        for (int i = 0; i < model.in_dim; ++i)
            if (!std::isfinite(xa[i]) || !std::isfinite(xp[i]) || !std::isfinite(xn[i]))
                throw std::runtime_error("triplet_loss_and_grad: non-finite feature");

        const Projection a = project(model, xa);
        const Projection p = project(model, xp);
        const Projection g = project(model, xn);
        const double d_ap = sqdist(a.out.data(), p.out.data(), model.out_dim);
        const double d_an = sqdist(a.out.data(), g.out.data(), model.out_dim);
        const double hinge = d_ap - d_an + model.margin;
        if (hinge <= 0.0) continue;  // inactive: zero gradient
        total += hinge;

        // dL/df(a) = 2 (f(n) - f(p)), dL/df(p) = 2 (f(p) - f(a)),
        // dL/df(n) = 2 (f(a) - f(n)); scaled by 1/batch.
        for (int o = 0; o < model.out_dim; ++o) {
            d_a[o] = 2.0 * (g.out[o] - p.out[o]) * inv_batch;
            d_p[o] = 2.0 * (p.out[o] - a.out[o]) * inv_batch;
            d_n[o] = 2.0 * (a.out[o] - g.out[o]) * inv_batch;
        }
        backprop_point(model, xa, a, d_a, grads);
        backprop_point(model, xp, p, d_p, grads);
        backprop_point(model, xn, g, d_n, grads);
    }

    // Weight decay applies to weight matrices only, never the biases.
    for (size_t i = 0; i < model.weights.size(); ++i)
        grads.d_weights[i] += model.weight_decay * model.weights[i];
    for (size_t i = 0; i < model.hidden_weights.size(); ++i)
        grads.d_hidden_weights[i] += model.weight_decay * model.hidden_weights[i];

    return total * inv_batch;
}

EpochStats train_epoch(MetricModel& model, const float* features, int64_t n,
                       const std::vector<int>& assignments, int k, const TrainConfig& cfg,
                       Rng& rng) {
    model.learning_rate = cfg.learning_rate;
    model.weight_decay = cfg.weight_decay;
    model.margin = cfg.triplets.margin;

    const int batch_size = std::max(1, cfg.triplets.per_cluster * k);
    const int n_batches = static_cast<int>((n + batch_size - 1) / batch_size);

    EpochStats stats;
    TripletGradients grads;
    for (int b = 0; b < n_batches; ++b) {
        std::vector<Triplet> batch =
            sample_triplets(model, features, n, assignments, k, cfg.triplets, rng);
        if (batch.empty()) continue;
        const double loss = triplet_loss_and_grad(model, batch, features, n, grads);
        const double lr = cfg.learning_rate;
        for (size_t i = 0; i < model.weights.size(); ++i) model.weights[i] -= lr * grads.d_weights[i];
        for (size_t i = 0; i < model.bias.size(); ++i) model.bias[i] -= lr * grads.d_bias[i];
        for (size_t i = 0; i < model.hidden_weights.size(); ++i)
            model.hidden_weights[i] -= lr * grads.d_hidden_weights[i];
        for (size_t i = 0; i < model.hidden_bias.size(); ++i)
            model.hidden_bias[i] -= lr * grads.d_hidden_bias[i];
        stats.mean_loss += loss;
        stats.triplets += static_cast<int>(batch.size());
        ++stats.batches;
    }
    if (stats.batches > 0) stats.mean_loss /= stats.batches;
    return stats;
}

}  // namespace terraclust
