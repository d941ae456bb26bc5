#pragma once

#include <string>
#include <vector>

#include "terraclust/types.hpp"

namespace terraclust {

// Patch table CSV. Column order is fixed; depth_pixels are not persisted
// (they are re-derived from the depth map at ingestion).
void write_patch_csv(const std::string& path, const std::vector<PatchRecord>& patches);
std::vector<PatchRecord> read_patch_csv(const std::string& path);

// Embeddings: magic "TCEMB001", u64 n_patches, u64 dim, n*dim f32 row-major,
// n u64 patch_ids. All little-endian.
void write_embeddings(const std::string& path, const EmbeddingSet& e);
EmbeddingSet read_embeddings(const std::string& path);

// Constraints CSV: lines `hard,<a>,<b>,<source>` / `soft,<a>,<b>,<confidence>`
// (plus `cannot,<a>,<b>,<weight>` when present).
void write_constraints_csv(const std::string& path, const ConstraintSet& cs);
ConstraintSet read_constraints_csv(const std::string& path);

// Metric checkpoint: magic "TCMET001", u64 in_dim, u64 hidden_dim (0 =
// affine), u64 out_dim, then [hidden W, hidden b,] W, b as f32 little-endian.
void write_metric_model(const std::string& path, const MetricModel& m);
MetricModel read_metric_model(const std::string& path);

// Assignments CSV: header `patch_id,cluster`, one row per patch.
void write_assignments_csv(const std::string& path, const std::vector<int64_t>& patch_ids,
                           const std::vector<int>& assignments);
std::vector<std::pair<int64_t, int>> read_assignments_csv(const std::string& path);

// Cluster model: centroids + objective, binary, magic "TCCLU001".
void write_cluster_model(const std::string& path, const ClusterModel& m);
ClusterModel read_cluster_model(const std::string& path);

/// Formats a double with round-trip precision, stable across runs.
std::string format_double(double v);
std::string format_float(float v);

}  // namespace terraclust
