#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "terraclust/image.hpp"
#include "terraclust/ingest.hpp"

namespace terraclust {

struct SceneConfig {
    int n_classes = 8;
    int image_size = 1024;
    int region_grid = 4;        // regions per axis
    double depth_ramp = 20.0;   // top-to-bottom depth increase
    // Region depth offsets are a shuffled ladder i * spacing; the spacing
    // keeps distinct regions farther apart in depth than sigma_depth so
    // depth gating separates terrain transitions.
    double depth_offset_spacing = 9.0;
    double brightness_sigma = 0.0;    // per-region multiplicative nuisance
    double brightness_gradient = 0.0; // max relative ramp across one region
    double noise_sigma = 0.0;         // per-pixel additive noise (unit scale)
    uint64_t seed = 7;
};

/// One procedural terrain scene: each region of a region_grid x region_grid
/// layout renders an oriented sinusoidal grating whose frequency and
/// orientation identify its class (classes assigned round-robin, then
/// shuffled by seed, so same-class regions exist in every scene). The depth
/// map is a top-to-bottom ramp plus a per-region offset; the mask labels
/// rock/soil by class parity; the label map carries the class id per pixel.
struct Scene {
    RawImage image;
    DepthMap depth;
    SegMask mask;
    SegMask labels;  // class id per pixel (255 = invalid / fill)
    SceneConfig config;
};

Scene generate_scene(const SceneConfig& cfg);

/// Class of the region covering a pixel.
int scene_class_at(const Scene& scene, int row, int col);

struct StereoTruth {
    int crop_row = 0;   // crop origin in the left image
    int crop_col = 0;
    int crop_side = 0;  // side of the square crop
    // right-image coordinates map to left as left = origin + scale * right
    double scale_r = 0.0;
    double scale_c = 0.0;
};

struct StereoPair {
    RawImage left;    // the full scene
    RawImage right;   // central crop upsampled to full resolution
    SegMask right_labels;  // label map seen through the crop transform
    DepthMap right_depth;
    SegMask right_mask;
    StereoTruth truth;
};

/// Simulates the wide/narrow stereo eyes: left is the full scene, right is
/// the central crop of side focal_ratio * min(W, H) upsampled back to full
/// resolution. The exact crop transform is returned as ground truth.
StereoPair generate_stereo_pair(const Scene& scene, double focal_ratio = 34.0 / 100.0);

struct RsmTruth {
    int shift_row = 0;
    int shift_col = 0;
    double brightness_delta = 0.0;
};

struct RsmPair {
    RawImage image_b;      // scene translated by (shift_row, shift_col)
    SegMask labels_b;      // 255 where the fill texture shows
    DepthMap depth_b;
    SegMask mask_b;
    RsmTruth truth;
};

/// Translates the scene by `shift` with a global brightness offset; exposed
/// border regions are filled with seeded high-variance noise (and marked
/// invalid in the label map) so no spurious correlations survive there.
/// |shift| must stay below 25% of the image size.
RsmPair generate_rsm_pair(const Scene& scene, int shift_row, int shift_col,
                          double brightness_delta);

/// Writes `n_scenes` scenes (left + stereo right + RSM partner each) with
/// manifest, images, depth maps, masks, and label maps under out_dir, in
/// the ingest formats. Scene i gets site = i so retrieval exclusion keeps
/// same-scene patches out of each other's galleries.
struct SynthDatasetConfig {
    SceneConfig scene;
    int n_scenes = 4;
    bool stereo = true;
    bool rsm = true;
    int rsm_shift_row = 10;
    int rsm_shift_col = -6;
    double rsm_brightness_delta = 20.0;
};

Dataset generate_synth_dataset(const SynthDatasetConfig& cfg, const std::string& out_dir);

}  // namespace terraclust
