#include "terraclust/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "terraclust/rng.hpp"

namespace fs = std::filesystem;

namespace terraclust {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kGratingAmplitude = 0.35;
constexpr double kReferencePatch = 128.0;  // frequencies are cycles per this many pixels

struct ClassParams {
    double frequency;  // cycles per reference patch
    double orientation;
};

// Frequencies and orientations spread jointly across the class range so the
// block grid and the orientation histogram both separate classes.
ClassParams class_params(int cls, int n_classes) {
    ClassParams p;
    const double t = n_classes > 1 ? static_cast<double>(cls) / (n_classes - 1) : 0.0;
    // The top frequency keeps a 256-pixel window below Nyquist after the
    // featurizer's 64x64 resize (2 * 10 cycles over 64 samples).
    p.frequency = 3.0 + 7.0 * t;
    p.orientation = kPi * cls / n_classes;
    return p;
}

double grating_value(const ClassParams& p, int row, int col) {
    const double phase =
        2.0 * kPi * p.frequency * (col * std::cos(p.orientation) + row * std::sin(p.orientation)) /
        kReferencePatch;
    return 0.5 + kGratingAmplitude * std::sin(phase);
}

uint8_t quantize(double v01) {
    const double v = std::lround(std::clamp(v01, 0.0, 1.0) * 255.0);
    return static_cast<uint8_t>(v);
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg) {
    if (cfg.n_classes < 2) throw std::invalid_argument("generate_scene: need n_classes >= 2");
    if (cfg.region_grid < 1) throw std::invalid_argument("generate_scene: bad region grid");

    const int size = cfg.image_size;
    const int grid = cfg.region_grid;
    const int n_regions = grid * grid;

    Rng rng(cfg.seed);

    // Round-robin class assignment, then a seeded shuffle: every class gets
    // floor/ceil(n_regions / n_classes) regions.
    std::vector<int> region_class(n_regions);
    for (int i = 0; i < n_regions; ++i) region_class[i] = i % cfg.n_classes;
    rng.shuffle(region_class);

    std::vector<double> region_brightness(n_regions, 1.0);
    std::vector<double> region_grad_r(n_regions, 0.0), region_grad_c(n_regions, 0.0);
    std::vector<double> region_depth_offset(n_regions);
    for (int i = 0; i < n_regions; ++i) region_depth_offset[i] = i * cfg.depth_offset_spacing;
    rng.shuffle(region_depth_offset);
    for (int i = 0; i < n_regions; ++i) {
        if (cfg.brightness_sigma > 0.0)
            region_brightness[i] = std::max(0.1, rng.normal(1.0, cfg.brightness_sigma));
        if (cfg.brightness_gradient > 0.0) {
            // Smooth illumination drift across the region along a seeded
            // direction; nuisance the soft constraints are meant to bridge.
            const double mag = rng.uniform(-cfg.brightness_gradient, cfg.brightness_gradient);
            const double dir = rng.uniform(0.0, 2.0 * kPi);
            region_grad_r[i] = mag * std::sin(dir);
            region_grad_c[i] = mag * std::cos(dir);
        }
    }

    Scene scene;
    scene.config = cfg;
    scene.image.width = scene.image.height = size;
    scene.image.channels = 1;
    scene.image.pixels.resize(static_cast<size_t>(size) * size);
    scene.depth.width = scene.depth.height = size;
    scene.depth.values.resize(static_cast<size_t>(size) * size);
    scene.mask.width = scene.mask.height = size;
    scene.mask.values.resize(static_cast<size_t>(size) * size);
    scene.labels.width = scene.labels.height = size;
    scene.labels.values.resize(static_cast<size_t>(size) * size);

    const double region_side = static_cast<double>(size) / grid;
    for (int r = 0; r < size; ++r) {
        const int gr = std::min(grid - 1, static_cast<int>(r / region_side));
        for (int c = 0; c < size; ++c) {
            const int gc = std::min(grid - 1, static_cast<int>(c / region_side));
            const int region = gr * grid + gc;
            const int cls = region_class[region];
            const ClassParams params = class_params(cls, cfg.n_classes);

            const double pr = r / region_side - gr - 0.5;  // [-0.5, 0.5) within region
            const double pc = c / region_side - gc - 0.5;
            const double local = 1.0 + region_grad_r[region] * pr + region_grad_c[region] * pc;
            double v = grating_value(params, r, c) * region_brightness[region] * local;
            if (cfg.noise_sigma > 0.0) v += rng.normal(0.0, cfg.noise_sigma);
            scene.image.at(r, c) = quantize(v);

            scene.depth.at(r, c) = static_cast<float>(
                cfg.depth_ramp * r / std::max(1, size - 1) + region_depth_offset[region]);
            scene.mask.at(r, c) = cls % 2 == 1 ? kMaskRock : kMaskSoil;
            scene.labels.at(r, c) = static_cast<uint8_t>(cls);
        }
    }
    return scene;
}

int scene_class_at(const Scene& scene, int row, int col) {
    return scene.labels.at(row, col);
}

namespace {

// Nearest-neighbor resize for categorical maps.
SegMask resize_nearest(const SegMask& m, int out_w, int out_h) {
    SegMask out;
    out.width = out_w;
    out.height = out_h;
    out.values.resize(static_cast<size_t>(out_w) * out_h);
    for (int r = 0; r < out_h; ++r) {
        const int sr = std::min(m.height - 1, static_cast<int>((r + 0.5) * m.height / out_h));
        for (int c = 0; c < out_w; ++c) {
            const int sc = std::min(m.width - 1, static_cast<int>((c + 0.5) * m.width / out_w));
            out.at(r, c) = m.at(sr, sc);
        }
    }
    return out;
}

DepthMap resize_nearest(const DepthMap& m, int out_w, int out_h) {
    DepthMap out;
    out.width = out_w;
    out.height = out_h;
    out.values.resize(static_cast<size_t>(out_w) * out_h);
    for (int r = 0; r < out_h; ++r) {
        const int sr = std::min(m.height - 1, static_cast<int>((r + 0.5) * m.height / out_h));
        for (int c = 0; c < out_w; ++c) {
            const int sc = std::min(m.width - 1, static_cast<int>((c + 0.5) * m.width / out_w));
            out.at(r, c) = m.at(sr, sc);
        }
    }
    return out;
}

template <typename T>
T crop_map(const T& m, int row, int col, int side) {
    T out;
    out.width = side;
    out.height = side;
    out.values.resize(static_cast<size_t>(side) * side);
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) out.at(r, c) = m.at(row + r, col + c);
    return out;
}

}  // namespace

StereoPair generate_stereo_pair(const Scene& scene, double focal_ratio) {
    const int W = scene.image.width, H = scene.image.height;
    const int side = std::max(1, static_cast<int>(std::llround(focal_ratio * std::min(W, H))));
    if (side > std::min(W, H)) throw std::invalid_argument("generate_stereo_pair: ratio > 1");

    StereoPair pair;
    pair.left = scene.image;
    pair.truth.crop_row = (H - side) / 2;
    pair.truth.crop_col = (W - side) / 2;
    pair.truth.crop_side = side;
    pair.truth.scale_r = static_cast<double>(side) / H;
    pair.truth.scale_c = static_cast<double>(side) / W;

    RawImage cropped = crop(scene.image, pair.truth.crop_row, pair.truth.crop_col, side, side);
    pair.right = side == std::min(W, H) && W == H ? cropped : resize_area_u8(cropped, W, H);

    pair.right_labels = resize_nearest(crop_map(scene.labels, pair.truth.crop_row,
                                                pair.truth.crop_col, side),
                                       W, H);
    pair.right_mask = resize_nearest(crop_map(scene.mask, pair.truth.crop_row,
                                              pair.truth.crop_col, side),
                                     W, H);
    pair.right_depth = resize_nearest(crop_map(scene.depth, pair.truth.crop_row,
                                               pair.truth.crop_col, side),
                                      W, H);
    return pair;
}

RsmPair generate_rsm_pair(const Scene& scene, int shift_row, int shift_col,
                          double brightness_delta) {
    const int W = scene.image.width, H = scene.image.height;
    if (std::abs(shift_row) >= H / 4 || std::abs(shift_col) >= W / 4)
        throw std::invalid_argument("generate_rsm_pair: shift must stay below 25% of size");

    RsmPair pair;
    pair.truth = {shift_row, shift_col, brightness_delta};
    pair.image_b.width = W;
    pair.image_b.height = H;
    pair.image_b.channels = 1;
    pair.image_b.pixels.resize(static_cast<size_t>(W) * H);
    pair.labels_b.width = W;
    pair.labels_b.height = H;
    pair.labels_b.values.assign(static_cast<size_t>(W) * H, 255);
    pair.mask_b.width = W;
    pair.mask_b.height = H;
    pair.mask_b.values.assign(static_cast<size_t>(W) * H, kMaskUnknown);
    pair.depth_b.width = W;
    pair.depth_b.height = H;
    // Fill depth is far from any terrain value so border patches never pass
    // the depth-similarity gate against real terrain.
    pair.depth_b.values.assign(static_cast<size_t>(W) * H, -50.0f);

    // Fill: seeded wide-band noise, so exposed borders cannot correlate with
    // any terrain texture (border matches are rejected by score).
    Rng fill_rng(scene.config.seed ^ 0x5eedf111ULL);
    for (auto& px : pair.image_b.pixels)
        px = quantize(0.5 + 0.45 * (2.0 * fill_rng.uniform() - 1.0));

    for (int r = 0; r < H; ++r) {
        const int sr = r - shift_row;
        if (sr < 0 || sr >= H) continue;
        for (int c = 0; c < W; ++c) {
            const int sc = c - shift_col;
            if (sc < 0 || sc >= W) continue;
            const double v = scene.image.at(sr, sc) + brightness_delta;
            pair.image_b.at(r, c) = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
            pair.labels_b.at(r, c) = scene.labels.at(sr, sc);
            pair.mask_b.at(r, c) = scene.mask.at(sr, sc);
            pair.depth_b.at(r, c) = scene.depth.at(sr, sc);
        }
    }
    return pair;
}

Dataset generate_synth_dataset(const SynthDatasetConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    Dataset ds;
    ds.root = out_dir;
    int64_t next_id = 0;

    auto add_entry = [&](const std::string& stem, const RawImage& img, const DepthMap& depth,
                         const SegMask& mask, const SegMask& labels, int site, Eye eye, int rsm) {
        write_pnm(out_dir + "/" + stem + ".pgm", img);
        write_depth_raw(out_dir + "/" + stem + "_depth.f32", depth);
        write_mask(out_dir + "/" + stem + "_mask.pgm", mask);
        write_mask(out_dir + "/" + stem + "_labels.pgm", labels);
        ImageEntry e;
        e.image_id = next_id++;
        e.path = stem + ".pgm";
        e.width = img.width;
        e.height = img.height;
        e.site = site;
        e.drive = 0;
        e.pose = 0;
        e.rsm_count = rsm;
        e.eye = eye;
        e.depth_path = stem + "_depth.f32";
        e.mask_path = stem + "_mask.pgm";
        e.labels_path = stem + "_labels.pgm";
        ds.images.push_back(std::move(e));
    };

    for (int s = 0; s < cfg.n_scenes; ++s) {
        SceneConfig sc = cfg.scene;
        sc.seed = cfg.scene.seed + static_cast<uint64_t>(s) * 1000003ULL;
        Scene scene = generate_scene(sc);
        const std::string stem = "scene" + std::to_string(s);
        add_entry(stem + "_left", scene.image, scene.depth, scene.mask, scene.labels, s,
                  Eye::Left, 0);
        if (cfg.stereo) {
            StereoPair sp = generate_stereo_pair(scene);
            add_entry(stem + "_right", sp.right, sp.right_depth, sp.right_mask, sp.right_labels,
                      s, Eye::Right, 0);
        }
        if (cfg.rsm) {
            RsmPair rp = generate_rsm_pair(scene, cfg.rsm_shift_row, cfg.rsm_shift_col,
                                           cfg.rsm_brightness_delta);
            add_entry(stem + "_rsm", rp.image_b, rp.depth_b, rp.mask_b, rp.labels_b, s,
                      Eye::Left, 2);
        }
    }
    write_manifest(out_dir + "/manifest.json", ds);
    return ds;
}

}  // namespace terraclust
