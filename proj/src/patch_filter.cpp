#include "terraclust/patch_filter.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "terraclust/ingest.hpp"
#include "terraclust/parallel.hpp"

namespace terraclust {

std::vector<Component> connected_components(const SegMask& mask, int row, int col, int h, int w,
                                            uint8_t class_code, int connectivity) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("connected_components: empty crop");
    if (row < 0 || col < 0 || row + h > mask.height || col + w > mask.width)
        throw std::invalid_argument("connected_components: crop outside mask");
    if (connectivity != 4 && connectivity != 8)
        throw std::invalid_argument("connected_components: connectivity must be 4 or 8");

    std::vector<uint8_t> visited(static_cast<size_t>(h) * w, 0);
    auto idx = [w](int r, int c) { return static_cast<size_t>(r) * w + c; };
    std::vector<Component> comps;
    std::vector<std::pair<int, int>> stack;

    static constexpr int d4[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    static constexpr int d8[8][2] = {{-1, 0}, {1, 0},  {0, -1}, {0, 1},
                                     {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
    const auto* dirs = connectivity == 4 ? d4 : d8;
    const int ndirs = connectivity;

    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (visited[idx(r, c)] || mask.at(row + r, col + c) != class_code) continue;
            Component comp;
            comp.min_row = comp.max_row = r;
            comp.min_col = comp.max_col = c;
            stack.clear();
            stack.emplace_back(r, c);
            visited[idx(r, c)] = 1;
            while (!stack.empty()) {
                auto [cr, cc] = stack.back();
                stack.pop_back();
                ++comp.pixel_count;
                comp.min_row = std::min(comp.min_row, cr);
                comp.max_row = std::max(comp.max_row, cr);
                comp.min_col = std::min(comp.min_col, cc);
                comp.max_col = std::max(comp.max_col, cc);
                for (int d = 0; d < ndirs; ++d) {
                    const int nr = cr + dirs[d][0];
                    const int nc = cc + dirs[d][1];
                    if (nr < 0 || nc < 0 || nr >= h || nc >= w) continue;
                    if (visited[idx(nr, nc)] || mask.at(row + nr, col + nc) != class_code)
                        continue;
                    visited[idx(nr, nc)] = 1;
                    stack.emplace_back(nr, nc);
                }
            }
            comps.push_back(comp);
        }
    }
    std::stable_sort(comps.begin(), comps.end(),
                     [](const Component& a, const Component& b) {
                         return a.pixel_count > b.pixel_count;
                     });
    return comps;
}

FilterClass classify_patch(const SegMask* mask, const DepthMap* depth, int row, int col,
                           int patch_size, const FilterConfig& cfg) {
    if (!mask || mask->empty()) return FilterClass::Unfiltered;

    if (cfg.use_depth_cutoff && depth && !depth->empty()) {
        double sum = 0.0;
        for (int r = 0; r < patch_size; ++r)
            for (int c = 0; c < patch_size; ++c) sum += depth->at(row + r, col + c);
        if (sum / (static_cast<double>(patch_size) * patch_size) > cfg.depth_cutoff)
            return FilterClass::Distant;
    }

    size_t soil = 0, rock = 0;
    for (int r = 0; r < patch_size; ++r) {
        for (int c = 0; c < patch_size; ++c) {
            const uint8_t v = mask->at(row + r, col + c);
            if (v == kMaskSoil) ++soil;
            else if (v == kMaskRock) ++rock;
            // Unknown pixels stay out of the denominator.
        }
    }
    const size_t labeled = soil + rock;
    if (labeled == 0) return FilterClass::Unfiltered;

    const double soil_frac = static_cast<double>(soil) / labeled;
    const double rock_frac = static_cast<double>(rock) / labeled;
    if (std::max(soil_frac, rock_frac) < cfg.class_fraction) return FilterClass::Mixed;
    if (soil_frac > cfg.class_fraction) return FilterClass::Soil;

    auto comps = connected_components(*mask, row, col, patch_size, patch_size, kMaskRock,
                                      cfg.connectivity);
    int counted = 0;
    for (const auto& comp : comps)
        if (comp.pixel_count >= cfg.min_component_size) ++counted;
    if (counted > cfg.max_rock_components) return FilterClass::Pebbly;
    return FilterClass::Rock;
}

FilterStats classify_dataset(const Dataset& ds, std::vector<PatchRecord>& patches,
                             const FilterConfig& cfg) {
    // Group patch indices per image so each mask/depth loads once.
    std::map<int64_t, std::vector<size_t>> by_image;
    for (size_t i = 0; i < patches.size(); ++i) by_image[patches[i].image_id].push_back(i);

    std::vector<std::pair<int64_t, std::vector<size_t>>> groups(by_image.begin(), by_image.end());
    parallel_for(groups.size(), [&](size_t gi) {
        const auto& [image_id, idxs] = groups[gi];
        const ImageEntry* entry = ds.find_image(image_id);
        if (!entry) return;  // leaves patches Unfiltered
        auto mask = load_mask(ds, *entry);
        auto depth = load_depth(ds, *entry);
        FilterConfig local = cfg;
        if (entry->depth_absolute) local.use_depth_cutoff = true;
        for (size_t i : idxs) {
            PatchRecord& p = patches[i];
            p.filter_class = classify_patch(mask ? &*mask : nullptr, depth ? &*depth : nullptr,
                                            p.top_row(), p.left_col(), p.patch_size, local);
        }
    });

    FilterStats stats;
    for (const auto& p : patches) {
        switch (p.filter_class) {
            case FilterClass::Rock: ++stats.rock; break;
            case FilterClass::Soil: ++stats.soil; break;
            case FilterClass::Pebbly: ++stats.pebbly; break;
            case FilterClass::Mixed: ++stats.mixed; break;
            case FilterClass::Distant: ++stats.distant; break;
            case FilterClass::Unfiltered: ++stats.unfiltered; break;
        }
    }
    return stats;
}

}  // namespace terraclust
