#pragma once

#include <optional>
#include <span>
#include <vector>

#include "terraclust/image.hpp"
#include "terraclust/match.hpp"
#include "terraclust/types.hpp"

namespace terraclust {

struct Dataset;  // ingest.hpp

/// Hyperparameters of the spatial+depth similarity measure behind soft
/// must-link constraints.
struct SimilarityConfig {
    double alpha = 0.5;
    double beta = 0.5;
    double sigma_spatial = 512.0;  // pixels
    double sigma_depth = 6.0;      // depth units
    double threshold = 0.7;
    // Neighbor-candidate cutoff in pixels; <= 0 derives it from
    // sigma_spatial (pairs beyond 3*sigma cannot reach the threshold).
    double candidate_radius = 0.0;

    double effective_radius() const;
};

/// Squared Euclidean distance between patch centers, in pixels^2. The
/// patches must come from the same image.
double spatial_distance(const PatchRecord& p1, const PatchRecord& p2);

/// Mean squared difference of co-registered per-pixel depths. Both patches
/// must carry depth_pixels of equal length.
double depth_distance(const PatchRecord& p1, const PatchRecord& p2);
double depth_distance(std::span<const float> d1, std::span<const float> d2);

/// alpha * exp(-d_spatial / 2 sigma_s^2) + beta * exp(-d_depth / 2 sigma_d^2).
/// When depth is unavailable (nullopt) the measure degenerates to
/// spatial-only with renormalized weights (alpha'=1, beta'=0) so that
/// sim(p, p) stays 1.
double soft_similarity(double d_spatial, std::optional<double> d_depth,
                       const SimilarityConfig& cfg);
double soft_similarity(const PatchRecord& p1, const PatchRecord& p2,
                       const SimilarityConfig& cfg);

/// Soft must-links for all same-image patch pairs within the candidate
/// radius whose similarity reaches the threshold; confidence = similarity.
/// Depth distances are streamed from `depth` when provided (the patches
/// need not carry depth_pixels).
std::vector<SoftLink> generate_neighbor_constraints(const std::vector<PatchRecord>& patches,
                                                    const SimilarityConfig& cfg,
                                                    const DepthMap* depth = nullptr);

struct LrConfig {
    double focal_ratio = 34.0 / 100.0;  // left/right focal length ratio
    double min_score = 0.6;             // NCC localization floor
    double overlap_threshold = 0.5;     // footprint-overlap fraction
    int left_patch_size = 128;
    int right_patch_size = 256;
};

struct LrResult {
    std::vector<HardLink> links;
    MatchResult localization;
    bool skipped = false;  // localization below min_score
};

/// Stereo hard links: localizes the right (narrow) image inside the left
/// via NCC at the focal ratio, maps each right patch's footprint into left
/// coordinates, and links it to the left patches covering at least
/// `overlap_threshold` of the footprint (intersection over the smaller
/// area). Images must share (site, drive, pose, rsm) with Left/Right eyes.
LrResult generate_lr_constraints(const GrayImage& left_img,
                                 const std::vector<PatchRecord>& left_patches,
                                 const GrayImage& right_img,
                                 const std::vector<PatchRecord>& right_patches,
                                 const LrConfig& cfg = {});

struct RsmConfig {
    double search_frac = 0.25;  // half-window as a fraction of image size
    double min_score = 0.8;
};

/// Temporal hard links between same-(site, drive, pose, eye) images whose
/// RSM counts differ by exactly two: each img_a patch is located in img_b
/// within a +-search_frac window around its own position and linked to the
/// img_b patch (same size class) whose window contains the best-match
/// center. At most one link per source patch.
std::vector<HardLink> generate_rsm_constraints(const GrayImage& img_a,
                                               const std::vector<PatchRecord>& patches_a,
                                               const GrayImage& img_b,
                                               const std::vector<PatchRecord>& patches_b,
                                               const RsmConfig& cfg = {});

// Metadata preconditions, exposed for the pipeline driver.
void check_lr_pair(const PatchRecord& left_sample, const PatchRecord& right_sample);
void check_rsm_pair(const PatchRecord& a_sample, const PatchRecord& b_sample);

/// Generates the full ConstraintSet for a dataset from the enabled sources,
/// pairing images by metadata. Deterministic output ordered by (a, b).
struct ConstraintGenConfig {
    SimilarityConfig similarity;
    LrConfig lr;
    RsmConfig rsm;
    bool enable_neighbor = true;
    bool enable_lr = true;
    bool enable_rsm = true;
};

struct ConstraintGenStats {
    size_t neighbor_links = 0;
    size_t lr_links = 0;
    size_t rsm_links = 0;
    size_t lr_pairs = 0, lr_skipped = 0;
    size_t rsm_pairs = 0;
};

ConstraintGenStats generate_constraints(const Dataset& ds,
                                        const std::vector<PatchRecord>& patches,
                                        const ConstraintGenConfig& cfg, ConstraintSet& out);

}  // namespace terraclust
