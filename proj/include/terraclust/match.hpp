#pragma once

#include "terraclust/image.hpp"

namespace terraclust {

struct MatchResult {
    int row = 0;
    int col = 0;
    double score = 0.0;  // zero-normalized cross-correlation in [-1, 1]
};

/// Exhaustive zero-normalized cross-correlation match. Scales the template
/// by `scale` (area averaging) first, slides it over every position of the
/// scene, and returns the argmax with ties broken by smallest (row, col).
/// A zero-variance template scores 0 everywhere (so the result is (0,0,0));
/// zero-variance scene windows also score 0. Throws if the scaled template
/// does not fit inside the scene.
MatchResult ncc_match(const GrayImage& templ, const GrayImage& scene, double scale = 1.0);

/// Same, restricted to placements with top-left corner in
/// [row0, row1) x [col0, col1) (clamped to valid placements).
MatchResult ncc_match_in(const GrayImage& templ, const GrayImage& scene, int row0, int col0,
                         int row1, int col1);

struct LocateOptions {
    // Search window for the template's top-left corner; row1/col1 < 0 means
    // the full scene.
    int row0 = 0, col0 = 0, row1 = -1, col1 = -1;
    // Direct search is used below this many score evaluations x template
    // area; larger problems go through a pyramid prescan whose candidate
    // peaks are re-scored exactly at full resolution.
    long long direct_budget = 1LL << 26;
    int coarse_min_side = 16;  // smallest template side at coarse scale
    int top_candidates = 2;    // coarse peaks refined at full resolution
};

/// Production search helper: exact ncc_match_in when the problem is small,
/// otherwise a deterministic coarse-to-fine search (box-filter pyramid,
/// top-N peak refinement). The returned placement and score always come
/// from a full-resolution zero-normalized cross-correlation evaluation.
MatchResult locate_template(const GrayImage& templ, const GrayImage& scene, double scale = 1.0,
                            const LocateOptions& opts = {});

}  // namespace terraclust
