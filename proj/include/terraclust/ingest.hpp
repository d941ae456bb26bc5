#pragma once

#include <optional>
#include <string>
#include <vector>

#include "terraclust/image.hpp"
#include "terraclust/types.hpp"

namespace terraclust {

/// One manifest entry. Pixel data is loaded on demand via load_image /
/// load_depth / load_mask so large datasets stream image-by-image.
struct ImageEntry {
    int64_t image_id = -1;
    std::string path;        // relative to the manifest directory
    int width = 0;
    int height = 0;
    int site = 0;
    int drive = 0;
    int pose = 0;
    int rsm_count = 0;
    Eye eye = Eye::Mono;
    std::string depth_path;   // empty = absent
    std::string mask_path;    // empty = absent
    std::string labels_path;  // optional ground-truth class map (PGM)
    bool depth_absolute = false;
    bool distant = false;     // source-image distance flag (>15 m), skipped at extraction
};

struct Dataset {
    std::string root;  // directory of the manifest file
    std::vector<ImageEntry> images;

    const ImageEntry* find_image(int64_t image_id) const;
};

/// Parses the JSON manifest. Image files must exist and, when depth/mask
/// files are present, their dimensions must match the image; violations
/// raise a load error naming the offending entry.
Dataset load_manifest(const std::string& path);
void write_manifest(const std::string& path, const Dataset& ds);

RawImage load_image(const Dataset& ds, const ImageEntry& e);
std::optional<DepthMap> load_depth(const Dataset& ds, const ImageEntry& e);
std::optional<SegMask> load_mask(const Dataset& ds, const ImageEntry& e);
std::optional<SegMask> load_labels(const Dataset& ds, const ImageEntry& e);

/// Sliding-window patch extraction. Windows start at multiples of
/// floor(patch_size * stride_fraction) and must lie fully inside the image;
/// patches are emitted in (row, col) order. Depth statistics are filled from
/// `depth` when present; labels from `labels` at the patch center. An image
/// smaller than the patch yields an empty list.
std::vector<PatchRecord> extract_patches(const ImageEntry& entry, int patch_size,
                                         double stride_fraction,
                                         const DepthMap* depth = nullptr,
                                         const SegMask* labels = nullptr);

/// Closed-form window count along one axis.
inline int window_count(int extent, int patch, int stride) {
    return extent >= patch ? (extent - patch) / stride + 1 : 0;
}

constexpr int kBaselineFeatureDim = 80;

/// Deterministic hand-crafted features for a square crop: grayscale ->
/// 64x64 area resize -> 8x8 block-mean grid (64 values in [0,1]) plus a
/// 16-bin edge-orientation histogram over [0, pi) (central differences,
/// magnitude-weighted votes, L1-normalized). Stands in for a learned
/// backbone; any external embedding provider can replace it via the
/// embeddings file format.
std::vector<float> baseline_featurize(const RawImage& patch_pixels);
std::vector<float> baseline_featurize(const GrayImage& patch_pixels);

/// Extracts and featurizes every patch of every non-distant image in the
/// dataset. Deterministic ordering by (image_id, patch_size, row, col);
/// patch ids are dense in that order. Parallel over images.
struct ExtractionResult {
    std::vector<PatchRecord> patches;
    EmbeddingSet features;
};
ExtractionResult extract_dataset(const Dataset& ds, const std::vector<int>& patch_sizes,
                                 double stride_fraction);

}  // namespace terraclust
