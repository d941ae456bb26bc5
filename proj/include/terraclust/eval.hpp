#pragma once

#include <cstdint>
#include <vector>

#include "terraclust/types.hpp"

namespace terraclust {

/// Davies-Bouldin index: mean over non-empty clusters of the worst
/// (sigma_i + sigma_j) / d(c_i, c_j) ratio, where sigma is the mean
/// Euclidean distance of members to their centroid and d the Euclidean
/// centroid distance. Coincident centroids make the ratio +inf, which
/// propagates (degenerate clustering). Requires >= 2 non-empty clusters.
double db_index(const EmbeddingSet& embeddings, const std::vector<int>& assignments);

struct RetrievalQuery {
    int64_t index;  // row in the gallery embedding set
};

struct PrecisionResult {
    double precision = 0.0;
    int retrieved = 0;      // may be < k when eligible gallery is short
    bool short_gallery = false;
};

/// Precision@K for one query against a gallery: gallery patches sharing the
/// query's (site, drive) are excluded, the k nearest by Euclidean distance
/// (ties by ascending patch_id) are retrieved, and the fraction whose label
/// matches the query's is returned. A gallery with fewer than k eligible
/// members is evaluated over what is available and flagged.
PrecisionResult precision_at_k(const EmbeddingSet& gallery_embeddings,
                               const std::vector<PatchRecord>& gallery,
                               const float* query_embedding, const PatchRecord& query,
                               int k = 10);

/// Mean Precision@K over all labeled queries drawn from the gallery itself
/// (each query excluded from its own retrieval list).
struct RetrievalSummary {
    double mean_precision = 0.0;
    int n_queries = 0;
    int short_galleries = 0;
};
RetrievalSummary mean_precision_at_k(const EmbeddingSet& embeddings,
                                     const std::vector<PatchRecord>& patches, int k = 10);

/// Normalized mutual information 2 I(A;B) / (H(A) + H(B)) with natural-log
/// entropies; 1.0 when both partitions are single-cluster.
double nmi(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

/// Train/test split by image column: a patch is Train when its window lies
/// entirely left of boundary_fraction * width, Test when entirely right of
/// it, Excluded when straddling.
void split_train_test(std::vector<PatchRecord>& patches, const std::vector<ImageDims>& images,
                      double boundary_fraction = 0.6);

struct HomogeneityReport {
    int homogeneous_clusters = 0;
    int nonempty_clusters = 0;
    std::vector<double> majority_fraction;  // per cluster; -1 for empty
    std::vector<int> majority_label;        // per cluster; -1 for empty
};

/// A cluster is homogeneous when its majority-label fraction strictly
/// exceeds the threshold. Unlabeled patches (label < 0) are ignored.
HomogeneityReport homogeneity_report(const std::vector<int>& assignments,
                                     const std::vector<int>& truth_labels, int k,
                                     double threshold = 0.8);

}  // namespace terraclust
