#pragma once

#include <cstdint>
#include <vector>

#include "terraclust/rng.hpp"
#include "terraclust/types.hpp"

namespace terraclust {

/// Union-find transitive closure of hard must-links over n points.
/// Chunklets are returned ordered by smallest member, members ascending;
/// singletons are their own chunklets.
std::vector<std::vector<int>> build_chunklets(int n,
                                              const std::vector<std::pair<int, int>>& hard_links);

struct PccConfig {
    double lambda = 1.0;   // soft-penalty weight
    int max_iters = 100;
    uint64_t seed = 7;
};

/// k-means++ seeding over weighted points (mass-weighted D^2 sampling).
/// Returns k centroids, row-major k x dim.
std::vector<double> kmeanspp_init(const std::vector<double>& points, int m, int dim,
                                  const std::vector<double>& masses, int k, Rng& rng);

/// Pairwise-confidence-constrained k-means. Minimizes
///   J = sum_i ||x_i - c_{a_i}||^2
///       + lambda * sum over violated soft links of their confidence
///       + lambda * sum over violated cannot-links of their weight
/// subject to hard-linked points sharing a cluster (enforced by moving
/// whole chunklets). Procedure: k-means++ over chunklet centroids, then
/// ICM sweeps over chunklets in seeded-random order with strict-improvement
/// moves, centroid recomputation, and empty-cluster reseeding at the point
/// farthest from its centroid, until no assignment changes or max_iters.
///
/// Constraints reference patch ids, resolved through embeddings.patch_ids;
/// unknown ids raise an argument error. Requires k >= 2 and at least k
/// chunklets (else an infeasibility error); NaN embeddings raise a numeric
/// error. Deterministic for a fixed seed.
ClusterModel pcc_kmeans(const EmbeddingSet& embeddings, int k, const ConstraintSet& constraints,
                        const PccConfig& cfg);

/// Nearest-centroid assignment for held-out data; no constraints applied;
/// ties go to the lowest centroid index.
std::vector<int> assign_holdout(const EmbeddingSet& embeddings, const ClusterModel& model);

/// Exact penalized objective of an assignment under given centroids
/// (shared by the engine, its tests, and the exhaustive oracle).
double penalized_objective(const EmbeddingSet& embeddings, const std::vector<int>& assignments,
                           const std::vector<double>& centroids, int k,
                           const ConstraintSet& constraints, double lambda);

}  // namespace terraclust
