#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace terraclust {

enum class Eye : uint8_t { Left = 0, Right = 1, Mono = 2 };

enum class FilterClass : uint8_t {
    Rock = 0,
    Soil = 1,
    Pebbly = 2,
    Mixed = 3,
    Distant = 4,
    Unfiltered = 5,
};

enum class Split : uint8_t { Train = 0, Test = 1, Excluded = 2 };

enum class ConstraintSource : uint8_t { LR = 0, RSM = 1, Neighbor = 2 };

const char* to_string(Eye e);
const char* to_string(FilterClass f);
const char* to_string(Split s);
const char* to_string(ConstraintSource s);
Eye eye_from_string(const std::string& s);
FilterClass filter_class_from_string(const std::string& s);
Split split_from_string(const std::string& s);
ConstraintSource source_from_string(const std::string& s);

/// One extracted image patch with its provenance and derived statistics.
struct PatchRecord {
    int64_t patch_id = -1;
    int64_t image_id = -1;
    int center_row = 0;
    int center_col = 0;
    int patch_size = 0;
    std::vector<float> depth_pixels;  // optional; patch_size^2 entries when present
    float depth_mean = 0.0f;
    int site = 0;
    int drive = 0;
    int pose = 0;
    int rsm_count = 0;
    Eye eye = Eye::Mono;
    FilterClass filter_class = FilterClass::Unfiltered;
    Split split = Split::Train;
    int label = -1;  // caller-supplied category; -1 = unlabeled

    int top_row() const { return center_row - patch_size / 2; }
    int left_col() const { return center_col - patch_size / 2; }
};

/// PCA -> whitening -> l2 chain fitted on one embedding set, reusable on
/// held-out data.
struct FeatureTransform {
    std::vector<double> pca_mean;        // in_dim
    std::vector<double> pca_basis;       // out_dim x in_dim, row-major
    std::vector<double> whitening_scales;  // out_dim
    bool l2_normalized = false;
    int in_dim = 0;
    int out_dim = 0;
    int numerical_rank = 0;  // components with eigenvalue above floor
};

/// Dense per-patch feature matrix, rows aligned with patch_ids.
struct EmbeddingSet {
    int64_t n_patches = 0;
    int64_t dim = 0;
    std::vector<float> values;  // row-major n_patches x dim
    std::vector<int64_t> patch_ids;
    std::optional<FeatureTransform> transform;

    const float* row(int64_t i) const { return &values[static_cast<size_t>(i) * dim]; }
    float* row(int64_t i) { return &values[static_cast<size_t>(i) * dim]; }
};

struct HardLink {
    int64_t a = 0;
    int64_t b = 0;  // stored with a < b
    ConstraintSource source = ConstraintSource::LR;
};

struct SoftLink {
    int64_t a = 0;
    int64_t b = 0;  // stored with a < b
    double confidence = 0.0;  // in (0, 1]
};

struct CannotLink {
    int64_t a = 0;
    int64_t b = 0;
    double weight = 1.0;
};

/// Pairwise constraints over patch ids. Hard links are enforced absolutely;
/// soft links are confidence-weighted penalties. Cannot-links are accepted
/// for generality but produced by no pipeline stage.
struct ConstraintSet {
    std::vector<HardLink> hard_links;
    std::vector<SoftLink> soft_links;
    std::vector<CannotLink> cannot_links;

    size_t size() const { return hard_links.size() + soft_links.size() + cannot_links.size(); }
};

/// Normalizes a ConstraintSet in place: orders each pair a < b, drops self
/// links, deduplicates (hard beats soft; duplicate softs keep the highest
/// confidence). Idempotent.
void dedup_constraints(ConstraintSet& cs);

/// Keeps only links whose endpoints both appear in `ids`; returns the number
/// of dropped links.
size_t restrict_constraints(ConstraintSet& cs, const std::vector<int64_t>& ids);

/// Result of constrained clustering.
struct ClusterModel {
    int k = 0;
    int64_t dim = 0;
    std::vector<double> centroids;   // k x dim row-major
    std::vector<int> assignments;    // per patch row
    std::vector<std::vector<int>> chunklets;  // partition induced by hard links
    double objective = 0.0;
    int iterations_run = 0;
    std::vector<double> objective_history;  // J after each sweep+update

    const double* centroid(int c) const { return &centroids[static_cast<size_t>(c) * dim]; }
};

/// Affine metric model f(x) = W x + b, optionally with one tanh hidden
/// layer; trained with triplet loss and applied before each clustering
/// round.
struct MetricModel {
    int in_dim = 0;
    int out_dim = 0;
    int hidden_dim = 0;               // 0 = plain affine map
    std::vector<double> weights;      // out x in (affine) or out x hidden
    std::vector<double> bias;         // out
    std::vector<double> hidden_weights;  // hidden x in, empty when affine
    std::vector<double> hidden_bias;     // hidden
    double margin = 0.2;
    double learning_rate = 1e-4;
    double weight_decay = 1e-5;

    /// Identity-like initialization: f(x) = x truncated/padded to out_dim,
    /// so the first pipeline round clusters the untouched features.
    static MetricModel identity(int in_dim, int out_dim);
    static MetricModel random_hidden(int in_dim, int hidden_dim, int out_dim, uint64_t seed);

    /// Projects a row-major matrix (n x in_dim) to (n x out_dim).
    std::vector<double> apply(const float* x, int64_t n) const;
    void apply_row(const float* x, double* out) const;
};

struct ValidationIssue {
    std::string code;     // e.g. "duplicate-patch-id"
    std::string message;  // human-readable, names the offending record
};

struct ValidationReport {
    std::vector<ValidationIssue> violations;
    bool ok() const { return violations.empty(); }
};

/// Checks every core-model invariant over a dataset; violations are reported
/// as data, never thrown. image_dims maps image_id -> (width, height); pass
/// an empty map to skip bounds checks for images of unknown size.
struct ImageDims {
    int64_t image_id;
    int width;
    int height;
};

ValidationReport validate_dataset(const std::vector<PatchRecord>& patches,
                                  const EmbeddingSet& embeddings,
                                  const std::vector<ImageDims>& image_dims = {});

/// Validates constraint references and value ranges against a patch table.
ValidationReport validate_constraints(const ConstraintSet& cs,
                                      const std::vector<PatchRecord>& patches,
                                      double threshold);

}  // namespace terraclust
