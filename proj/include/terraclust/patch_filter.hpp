#pragma once

#include <vector>

#include "terraclust/image.hpp"
#include "terraclust/types.hpp"

namespace terraclust {

struct Component {
    int pixel_count = 0;
    int min_row = 0, min_col = 0, max_row = 0, max_col = 0;  // inclusive bbox
};

/// Connected components of pixels equal to class_code inside the crop
/// window of the mask, sorted by descending pixel count (ties by discovery
/// order, top-left first). 4-connectivity by default.
std::vector<Component> connected_components(const SegMask& mask, int row, int col, int h, int w,
                                            uint8_t class_code, int connectivity = 4);

struct FilterConfig {
    double class_fraction = 0.70;  // mixed / soil threshold
    int max_rock_components = 10;  // pebbly threshold (strictly more)
    int min_component_size = 1;    // blobs below this size are not counted
    double depth_cutoff = 10.0;
    bool use_depth_cutoff = false;  // enable the distant rule (absolute depth supplied)
    int connectivity = 4;
};

/// Terrain class decision for one patch window. Order: distant, mixed,
/// soil, pebbly, rock. Unknown mask pixels (255) are excluded from fraction
/// denominators; a window with no labeled pixels (or a null mask) stays
/// Unfiltered. Thresholds are read literally: exactly 70% of one class is
/// NOT mixed, exactly 70% soil is NOT soil, exactly 10 components is NOT
/// pebbly.
FilterClass classify_patch(const SegMask* mask, const DepthMap* depth, int row, int col,
                           int patch_size, const FilterConfig& cfg = {});

/// Classifies every patch in place from its image's mask/depth.
struct FilterStats {
    size_t rock = 0, soil = 0, pebbly = 0, mixed = 0, distant = 0, unfiltered = 0;
};
struct Dataset;  // from ingest.hpp
FilterStats classify_dataset(const Dataset& ds, std::vector<PatchRecord>& patches,
                             const FilterConfig& cfg = {});

}  // namespace terraclust
