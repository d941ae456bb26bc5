#pragma once

#include <cstdint>
#include <vector>

#include "terraclust/rng.hpp"
#include "terraclust/types.hpp"

namespace terraclust {

/// Centers the data, projects onto the top out_dim principal directions,
/// rescales each component by 1/sqrt(eigenvalue + eps), and l2-normalizes
/// the rows. When the data's numerical rank is below out_dim the retained
/// components are capped at the rank (reported via
/// transform->numerical_rank). The fitted transform is recorded on the
/// returned set for reuse on held-out data.
struct PcaOptions {
    int out_dim = 0;        // 0 = auto: 256 if dim > 256, else min(dim, n-1)
    double eps = 1e-8;      // whitening floor
    bool l2_normalize = true;
};

EmbeddingSet fit_pca_whiten(const EmbeddingSet& embeddings, const PcaOptions& opts = {});

/// Applies a previously fitted transform to new data of matching input dim.
EmbeddingSet apply_transform(const FeatureTransform& t, const EmbeddingSet& embeddings,
                             bool l2_normalize = true);

struct Triplet {
    int anchor;
    int positive;
    int negative;
};

struct TripletConfig {
    int per_cluster = 4;
    double margin = 0.2;
};

/// Samples per_cluster anchors from every cluster with >= 2 members
/// (singleton clusters are skipped as anchors), a positive uniformly from
/// the anchor's cluster, and a negative that is semi-hard within the
/// sampled batch when one exists (farther than the positive but within the
/// margin), else uniform from a different cluster. Distances are squared
/// Euclidean in the model's output space; only batch points are projected.
/// Throws when fewer than two clusters have >= 2 members (no triplets can
/// be formed).
std::vector<Triplet> sample_triplets(const MetricModel& model, const float* features, int64_t n,
                                     const std::vector<int>& assignments, int k,
                                     const TripletConfig& cfg, Rng& rng);

struct TripletGradients {
    std::vector<double> d_weights;
    std::vector<double> d_bias;
    std::vector<double> d_hidden_weights;
    std::vector<double> d_hidden_bias;
};

/// Mean hinge loss max(0, ||f(a)-f(p)||^2 - ||f(a)-f(n)||^2 + margin) over
/// the batch with f given by the model, plus analytic gradients (weight
/// decay added to the weight gradients; inactive triplets contribute
/// nothing). Throws on non-finite features.
double triplet_loss_and_grad(const MetricModel& model, const std::vector<Triplet>& batch,
                             const float* features, int64_t n, TripletGradients& grads);

/// Loss only (used by the finite-difference oracle in tests).
double triplet_loss(const MetricModel& model, const std::vector<Triplet>& batch,
                    const float* features, int64_t n);

struct EpochStats {
    double mean_loss = 0.0;
    int batches = 0;
    int triplets = 0;
};

struct TrainConfig {
    TripletConfig triplets;
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;
};

/// One epoch of minibatch SGD: ceil(n / batch_size) batches, each freshly
/// sampled (batch size = per_cluster x k). Update rule
/// W <- W - lr (dW + wd W); bias carries no decay.
EpochStats train_epoch(MetricModel& model, const float* features, int64_t n,
                       const std::vector<int>& assignments, int k, const TrainConfig& cfg,
                       Rng& rng);

}  // namespace terraclust
