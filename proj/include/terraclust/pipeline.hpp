#pragma once

#include <set>
#include <string>
#include <vector>

#include "terraclust/cluster.hpp"
#include "terraclust/constraints.hpp"
#include "terraclust/embed.hpp"
#include "terraclust/ingest.hpp"
#include "terraclust/types.hpp"

namespace terraclust {

struct MetricConfig {
    double margin = 0.2;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    int per_cluster = 4;
    int epochs_per_round = 5;
    int out_dim = 0;     // 0 = input dim (identity start)
    int hidden_dim = 0;  // 0 = affine model
};

struct PipelineConfig {
    int k = 150;
    int max_rounds = 20;
    double nmi_convergence = 0.95;
    double lambda = 1.0;
    SimilarityConfig similarity;
    LrConfig lr_constraints;
    RsmConfig rsm_constraints;
    MetricConfig metric;
    uint64_t seed = 7;
    std::set<ConstraintSource> sources = {ConstraintSource::Neighbor, ConstraintSource::LR,
                                          ConstraintSource::RSM};
    int pca_dim = 0;  // 0 = auto (256 when input dim > 256)
    int kmeans_max_iters = 100;
    std::vector<int> patch_sizes = {128, 256};
    double stride = 0.5;

    void validate() const;
};

PipelineConfig config_from_json_file(const std::string& path);
std::string config_to_json(const PipelineConfig& cfg);

struct RoundStats {
    int round = 0;
    double objective = 0.0;
    double db = 0.0;
    double nmi_prev = -1.0;  // -1 for the first round
    double mean_triplet_loss = -1.0;  // -1 when no training ran
    int kmeans_iterations = 0;
};

struct DccmlResult {
    ClusterModel model;          // clustering of the selected round
    MetricModel metric;          // metric after the last completed training
    EmbeddingSet round_features; // whitened features of the selected round
    std::vector<RoundStats> history;
    bool converged = false;
    int selected_round = 0;  // 1-based; best-DB round when unconverged
};

/// The iterative loop: project raw features with the current metric model,
/// PCA-whiten, cluster with the active constraints, stop once consecutive
/// assignments agree (NMI >= nmi_convergence), otherwise train the metric
/// on the round's pseudo-labels and repeat. Reaching max_rounds without
/// convergence returns the best-DB round flagged unconverged. Per-round
/// clustering reseeds k-means++ from seed + round. When out_dir is
/// non-empty, per-round features and assignments are persisted there.
DccmlResult run_dccml(const EmbeddingSet& raw_features, const ConstraintSet& constraints,
                      const PipelineConfig& cfg, const std::string& out_dir = "");

/// Filters a constraint set down to the given sources (soft links are
/// Neighbor-sourced by definition).
ConstraintSet select_sources(const ConstraintSet& cs, const std::set<ConstraintSource>& sources);

struct AblationRow {
    std::string variant;  // e.g. "neighbor+lr", "none"
    std::set<ConstraintSource> sources;
    double db = 0.0;
    int homogeneous_clusters = 0;
    double mean_precision_at_10 = 0.0;
    double nmi_vs_truth = -1.0;
    bool converged = false;
    bool failed = false;
    std::string error;
};

/// Runs the loop once per constraint-source subset with a shared seed and
/// tabulates DB index, homogeneous-cluster count (0.8 rule), and mean
/// Precision@10 on the test split. Per-variant failures are recorded and
/// the table is still produced.
std::vector<AblationRow> run_ablation(const EmbeddingSet& raw_features,
                                      const ConstraintSet& constraints,
                                      const std::vector<PatchRecord>& patches,
                                      const PipelineConfig& cfg,
                                      const std::vector<std::set<ConstraintSource>>& variants);

/// Tiles up to n_samples seeded-random members of a cluster (no repeats)
/// into a square grid image for visual inspection.
RawImage emit_cluster_montage(const Dataset& ds, const std::vector<PatchRecord>& patches,
                              const std::vector<int>& assignments, int cluster_id,
                              int n_samples = 300, uint64_t seed = 7, int tile = 64);

std::string variant_name(const std::set<ConstraintSource>& sources);

}  // namespace terraclust
