#include "terraclust/ingest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "terraclust/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace terraclust {

const ImageEntry* Dataset::find_image(int64_t image_id) const {
    for (const auto& e : images)
        if (e.image_id == image_id) return &e;
    return nullptr;
}

namespace {

std::string resolve(const std::string& root, const std::string& rel) {
    fs::path p(rel);
    if (p.is_absolute()) return rel;
    return (fs::path(root) / p).string();
}

void check_dims(const ImageEntry& e, int w, int h, const char* what) {
    if (w != e.width || h != e.height)
        throw std::runtime_error("manifest entry '" + e.path + "': " + what + " is " +
                                 std::to_string(w) + "x" + std::to_string(h) +
                                 " but image is " + std::to_string(e.width) + "x" +
                                 std::to_string(e.height));
}

}  // namespace

Dataset load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& err) {
        throw std::runtime_error("manifest " + path + ": malformed JSON: " + err.what());
    }
    Dataset ds;
    ds.root = fs::path(path).parent_path().string();
    if (ds.root.empty()) ds.root = ".";
    if (!doc.contains("images") || !doc["images"].is_array())
        throw std::runtime_error("manifest " + path + ": missing 'images' array");
    int64_t next_id = 0;
    for (const auto& j : doc["images"]) {
        ImageEntry e;
        e.image_id = j.value("image_id", next_id);
        next_id = std::max(next_id, e.image_id + 1);
        e.path = j.at("path").get<std::string>();
        e.width = j.at("width").get<int>();
        e.height = j.at("height").get<int>();
        e.site = j.value("site", 0);
        e.drive = j.value("drive", 0);
        e.pose = j.value("pose", 0);
        e.rsm_count = j.value("rsm_count", 0);
        e.eye = eye_from_string(j.value("eye", "mono"));
        e.depth_path = j.value("depth", "");
        e.mask_path = j.value("mask", "");
        e.labels_path = j.value("labels", "");
        e.depth_absolute = j.value("depth_absolute", false);
        e.distant = j.value("distant", false);

        const std::string img_path = resolve(ds.root, e.path);
        if (!fs::exists(img_path))
            throw std::runtime_error("manifest entry '" + e.path + "': image file missing");
        // Dimension checks happen eagerly so a bad manifest fails the load,
        // not a worker mid-pipeline.
        if (!e.depth_path.empty()) {
            DepthMap d = read_depth_raw(resolve(ds.root, e.depth_path));
            check_dims(e, d.width, d.height, "depth map");
        }
        if (!e.mask_path.empty()) {
            SegMask m = read_mask(resolve(ds.root, e.mask_path));
            check_dims(e, m.width, m.height, "segmentation mask");
        }
        if (!e.labels_path.empty()) {
            SegMask m = read_mask(resolve(ds.root, e.labels_path));
            check_dims(e, m.width, m.height, "label map");
        }
        ds.images.push_back(std::move(e));
    }
    return ds;
}

void write_manifest(const std::string& path, const Dataset& ds) {
    json doc;
    doc["images"] = json::array();
    for (const auto& e : ds.images) {
        json j;
        j["image_id"] = e.image_id;
        j["path"] = e.path;
        j["width"] = e.width;
        j["height"] = e.height;
        j["site"] = e.site;
        j["drive"] = e.drive;
        j["pose"] = e.pose;
        j["rsm_count"] = e.rsm_count;
        j["eye"] = to_string(e.eye);
        if (!e.depth_path.empty()) j["depth"] = e.depth_path;
        if (!e.mask_path.empty()) j["mask"] = e.mask_path;
        if (!e.labels_path.empty()) j["labels"] = e.labels_path;
        if (e.depth_absolute) j["depth_absolute"] = true;
        if (e.distant) j["distant"] = true;
        doc["images"].push_back(std::move(j));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << doc.dump(2) << "\n";
}

RawImage load_image(const Dataset& ds, const ImageEntry& e) {
    RawImage img = read_pnm(resolve(ds.root, e.path));
    check_dims(e, img.width, img.height, "image file");
    return img;
}

std::optional<DepthMap> load_depth(const Dataset& ds, const ImageEntry& e) {
    if (e.depth_path.empty()) return std::nullopt;
    return read_depth_raw(resolve(ds.root, e.depth_path));
}

std::optional<SegMask> load_mask(const Dataset& ds, const ImageEntry& e) {
    if (e.mask_path.empty()) return std::nullopt;
    return read_mask(resolve(ds.root, e.mask_path));
}

std::optional<SegMask> load_labels(const Dataset& ds, const ImageEntry& e) {
    if (e.labels_path.empty()) return std::nullopt;
    return read_mask(resolve(ds.root, e.labels_path));
}

std::vector<PatchRecord> extract_patches(const ImageEntry& entry, int patch_size,
                                         double stride_fraction, const DepthMap* depth,
                                         const SegMask* labels) {
    if (patch_size <= 0) throw std::invalid_argument("extract_patches: patch_size must be > 0");
    if (stride_fraction <= 0.0 || stride_fraction > 1.0)
        throw std::invalid_argument("extract_patches: stride_fraction must be in (0,1]");
    std::vector<PatchRecord> out;
    if (patch_size > entry.width || patch_size > entry.height) return out;  // nothing to extract

    const int stride = std::max(1, static_cast<int>(patch_size * stride_fraction));
    const int rows = window_count(entry.height, patch_size, stride);
    const int cols = window_count(entry.width, patch_size, stride);
    out.reserve(static_cast<size_t>(rows) * cols);
    for (int ri = 0; ri < rows; ++ri) {
        for (int ci = 0; ci < cols; ++ci) {
            const int r = ri * stride;
            const int c = ci * stride;
            PatchRecord p;
            p.image_id = entry.image_id;
            p.center_row = r + patch_size / 2;
            p.center_col = c + patch_size / 2;
            p.patch_size = patch_size;
            p.site = entry.site;
            p.drive = entry.drive;
            p.pose = entry.pose;
            p.rsm_count = entry.rsm_count;
            p.eye = entry.eye;
            if (depth && !depth->empty()) {
                double sum = 0.0;
                for (int dr = 0; dr < patch_size; ++dr)
                    for (int dc = 0; dc < patch_size; ++dc) sum += depth->at(r + dr, c + dc);
                p.depth_mean = static_cast<float>(sum / (static_cast<double>(patch_size) * patch_size));
            }
            if (labels && !labels->empty()) {
                const uint8_t cls = labels->at(p.center_row, p.center_col);
                p.label = cls == 255 ? -1 : cls;  // 255 marks invalid / fill pixels
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

namespace {

constexpr int kResize = 64;
constexpr int kGrid = 8;
constexpr int kBins = 16;

std::vector<float> featurize_gray64(const GrayImage& g) {
    std::vector<float> feat(kBaselineFeatureDim, 0.0f);
    // 8x8 block means, scaled to [0,1].
    const int block = kResize / kGrid;
    for (int br = 0; br < kGrid; ++br) {
        for (int bc = 0; bc < kGrid; ++bc) {
            double sum = 0.0;
            for (int r = 0; r < block; ++r)
                for (int c = 0; c < block; ++c) sum += g.at(br * block + r, bc * block + c);
            feat[br * kGrid + bc] =
                static_cast<float>(sum / (block * block) / 255.0);
        }
    }
    // Edge-orientation histogram: orientation of the level set (gradient
    // angle + pi/2), folded into [0, pi), votes weighted by magnitude.
    const double pi = 3.14159265358979323846;
    std::array<double, kBins> hist{};
    for (int r = 1; r < kResize - 1; ++r) {
        for (int c = 1; c < kResize - 1; ++c) {
            const double gx = (g.at(r, c + 1) - g.at(r, c - 1)) * 0.5;
            const double gy = (g.at(r + 1, c) - g.at(r - 1, c)) * 0.5;
            const double mag = std::hypot(gx, gy);
            if (mag <= 0.0) continue;
            double ang = std::atan2(gy, gx) + pi / 2.0;
            while (ang < 0.0) ang += pi;
            while (ang >= pi) ang -= pi;
            int bin = static_cast<int>(ang / pi * kBins);
            if (bin >= kBins) bin = kBins - 1;
            hist[bin] += mag;
        }
    }
    double total = 0.0;
    for (double h : hist) total += h;
    if (total > 0.0)
        for (int b = 0; b < kBins; ++b)
            feat[kGrid * kGrid + b] = static_cast<float>(hist[b] / total);
    return feat;
}

}  // namespace

std::vector<float> baseline_featurize(const GrayImage& patch_pixels) {
    if (patch_pixels.empty() || patch_pixels.width != patch_pixels.height ||
        patch_pixels.width < 8)
        throw std::invalid_argument("baseline_featurize: need a square crop of side >= 8");
    const GrayImage g = patch_pixels.width == kResize
                            ? patch_pixels
                            : resize_area(patch_pixels, kResize, kResize);
    return featurize_gray64(g);
}

std::vector<float> baseline_featurize(const RawImage& patch_pixels) {
    if (patch_pixels.empty()) throw std::invalid_argument("baseline_featurize: empty crop");
    return baseline_featurize(to_gray(patch_pixels));
}

ExtractionResult extract_dataset(const Dataset& ds, const std::vector<int>& patch_sizes,
                                 double stride_fraction) {
    std::vector<int> sizes = patch_sizes;
    std::sort(sizes.begin(), sizes.end());

    std::vector<const ImageEntry*> entries;
    for (const auto& e : ds.images)
        if (!e.distant) entries.push_back(&e);
    std::sort(entries.begin(), entries.end(),
              [](const ImageEntry* a, const ImageEntry* b) { return a->image_id < b->image_id; });

    // Per-image extraction is independent; each worker fills its own slot.
    struct PerImage {
        std::vector<PatchRecord> patches;
        std::vector<std::vector<float>> feats;
    };
    std::vector<PerImage> slots(entries.size());
    parallel_for(entries.size(), [&](size_t idx) {
        const ImageEntry& e = *entries[idx];
        RawImage img = load_image(ds, e);
        GrayImage gray = to_gray(img);
        auto depth = load_depth(ds, e);
        auto labels = load_labels(ds, e);
        PerImage& slot = slots[idx];
        for (int size : sizes) {
            auto patches = extract_patches(e, size, stride_fraction,
                                           depth ? &*depth : nullptr,
                                           labels ? &*labels : nullptr);
            for (auto& p : patches) {
                GrayImage cropped = crop(gray, p.top_row(), p.left_col(), size, size);
                slot.feats.push_back(baseline_featurize(cropped));
                slot.patches.push_back(std::move(p));
            }
        }
    });

    ExtractionResult result;
    result.features.dim = kBaselineFeatureDim;
    int64_t next_id = 0;
    for (auto& slot : slots) {
        for (size_t i = 0; i < slot.patches.size(); ++i) {
            slot.patches[i].patch_id = next_id++;
            result.patches.push_back(std::move(slot.patches[i]));
            result.features.values.insert(result.features.values.end(), slot.feats[i].begin(),
                                          slot.feats[i].end());
            result.features.patch_ids.push_back(result.patches.back().patch_id);
        }
    }
    result.features.n_patches = static_cast<int64_t>(result.patches.size());
    return result;
}

}  // namespace terraclust
