#include "terraclust/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include "terraclust/ingest.hpp"
#include "terraclust/match.hpp"
#include "terraclust/parallel.hpp"

namespace terraclust {

double SimilarityConfig::effective_radius() const {
    // Beyond 3*sigma the spatial term is below e^-4.5 ~ 0.011, so the
    // similarity cannot reach any threshold > alpha*0.011 + beta.
    return candidate_radius > 0.0 ? candidate_radius : 3.0 * sigma_spatial;
}

double spatial_distance(const PatchRecord& p1, const PatchRecord& p2) {
    if (p1.image_id != p2.image_id)
        throw std::invalid_argument("spatial_distance: patches from different images");
    const double dr = static_cast<double>(p1.center_row) - p2.center_row;
    const double dc = static_cast<double>(p1.center_col) - p2.center_col;
    return dr * dr + dc * dc;
}

double depth_distance(std::span<const float> d1, std::span<const float> d2) {
    if (d1.empty() || d1.size() != d2.size())
        throw std::invalid_argument("depth_distance: depth unavailable or length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < d1.size(); ++i) {
        const double d = static_cast<double>(d1[i]) - d2[i];
        acc += d * d;
    }
    return acc / static_cast<double>(d1.size());
}

double depth_distance(const PatchRecord& p1, const PatchRecord& p2) {
    return depth_distance(std::span<const float>(p1.depth_pixels),
                          std::span<const float>(p2.depth_pixels));
}

double soft_similarity(double d_spatial, std::optional<double> d_depth,
                       const SimilarityConfig& cfg) {
    const double spatial_term = std::exp(-d_spatial / (2.0 * cfg.sigma_spatial * cfg.sigma_spatial));
    if (!d_depth) return spatial_term;  // renormalized: alpha' = 1, beta' = 0
    const double depth_term = std::exp(-*d_depth / (2.0 * cfg.sigma_depth * cfg.sigma_depth));
    return cfg.alpha * spatial_term + cfg.beta * depth_term;
}

double soft_similarity(const PatchRecord& p1, const PatchRecord& p2,
                       const SimilarityConfig& cfg) {
    const double ds = spatial_distance(p1, p2);
    std::optional<double> dd;
    if (!p1.depth_pixels.empty() && p1.depth_pixels.size() == p2.depth_pixels.size())
        dd = depth_distance(p1, p2);
    return soft_similarity(ds, dd, cfg);
}

namespace {

// Streams a patch window out of the full-image depth map.
std::vector<float> depth_window(const DepthMap& d, const PatchRecord& p) {
    std::vector<float> out;
    out.reserve(static_cast<size_t>(p.patch_size) * p.patch_size);
    const int r0 = p.top_row(), c0 = p.left_col();
    for (int r = 0; r < p.patch_size; ++r)
        for (int c = 0; c < p.patch_size; ++c) out.push_back(d.at(r0 + r, c0 + c));
    return out;
}

}  // namespace

std::vector<SoftLink> generate_neighbor_constraints(const std::vector<PatchRecord>& patches,
                                                    const SimilarityConfig& cfg,
                                                    const DepthMap* depth) {
    for (size_t i = 1; i < patches.size(); ++i)
        if (patches[i].image_id != patches[0].image_id)
            throw std::invalid_argument("generate_neighbor_constraints: mixed images");

    const double radius2 = cfg.effective_radius() * cfg.effective_radius();

    // Depth windows on demand, cached per patch.
    std::vector<std::vector<float>> cached(depth ? patches.size() : 0);
    auto window = [&](size_t i) -> std::span<const float> {
        if (!patches[i].depth_pixels.empty()) return patches[i].depth_pixels;
        if (!depth) return {};
        if (cached[i].empty()) cached[i] = depth_window(*depth, patches[i]);
        return cached[i];
    };

    std::vector<SoftLink> links;
    for (size_t i = 0; i < patches.size(); ++i) {
        for (size_t j = i + 1; j < patches.size(); ++j) {
            const double ds = spatial_distance(patches[i], patches[j]);
            if (ds > radius2) continue;
            std::optional<double> dd;
            auto wi = window(i), wj = window(j);
            if (!wi.empty() && wi.size() == wj.size()) dd = depth_distance(wi, wj);
            const double sim = soft_similarity(ds, dd, cfg);
            if (sim >= cfg.threshold) {
                const int64_t a = std::min(patches[i].patch_id, patches[j].patch_id);
                const int64_t b = std::max(patches[i].patch_id, patches[j].patch_id);
                links.push_back({a, b, sim});
            }
        }
    }
    return links;
}

void check_lr_pair(const PatchRecord& left_sample, const PatchRecord& right_sample) {
    if (left_sample.site != right_sample.site || left_sample.drive != right_sample.drive ||
        left_sample.pose != right_sample.pose || left_sample.rsm_count != right_sample.rsm_count)
        throw std::invalid_argument("LR pair: images do not share (site, drive, pose, rsm)");
    if (left_sample.eye != Eye::Left || right_sample.eye != Eye::Right)
        throw std::invalid_argument("LR pair: eyes must be Left and Right");
}

void check_rsm_pair(const PatchRecord& a_sample, const PatchRecord& b_sample) {
    if (a_sample.site != b_sample.site || a_sample.drive != b_sample.drive ||
        a_sample.pose != b_sample.pose)
        throw std::invalid_argument("RSM pair: images do not share (site, drive, pose)");
    if (std::abs(a_sample.rsm_count - b_sample.rsm_count) != 2)
        throw std::invalid_argument("RSM pair: rsm counts must differ by exactly 2");
}

namespace {

struct Rect {
    double top, left, height, width;
    double area() const { return height * width; }
};

double intersection_area(const Rect& a, const Rect& b) {
    const double h = std::min(a.top + a.height, b.top + b.height) - std::max(a.top, b.top);
    const double w = std::min(a.left + a.width, b.left + b.width) - std::max(a.left, b.left);
    return h > 0.0 && w > 0.0 ? h * w : 0.0;
}

}  // namespace

LrResult generate_lr_constraints(const GrayImage& left_img,
                                 const std::vector<PatchRecord>& left_patches,
                                 const GrayImage& right_img,
                                 const std::vector<PatchRecord>& right_patches,
                                 const LrConfig& cfg) {
    if (!left_patches.empty() && !right_patches.empty())
        check_lr_pair(left_patches.front(), right_patches.front());

    LrResult result;
    result.localization = locate_template(right_img, left_img, cfg.focal_ratio);
    if (result.localization.score < cfg.min_score) {
        result.skipped = true;
        return result;
    }

    // Per-axis scale of right-image coordinates into left-image coordinates,
    // matching the rounding used when the template was scaled.
    const int sw = std::max(1, static_cast<int>(std::llround(right_img.width * cfg.focal_ratio)));
    const int sh = std::max(1, static_cast<int>(std::llround(right_img.height * cfg.focal_ratio)));
    const double scale_c = static_cast<double>(sw) / right_img.width;
    const double scale_r = static_cast<double>(sh) / right_img.height;

    for (const auto& rp : right_patches) {
        if (rp.patch_size != cfg.right_patch_size) continue;
        const Rect foot{result.localization.row + scale_r * rp.top_row(),
                        result.localization.col + scale_c * rp.left_col(),
                        scale_r * rp.patch_size, scale_c * rp.patch_size};
        for (const auto& lp : left_patches) {
            if (lp.patch_size != cfg.left_patch_size) continue;
            const Rect patch{static_cast<double>(lp.top_row()), static_cast<double>(lp.left_col()),
                             static_cast<double>(lp.patch_size), static_cast<double>(lp.patch_size)};
            const double inter = intersection_area(foot, patch);
            const double overlap = inter / std::min(foot.area(), patch.area());
            if (overlap >= cfg.overlap_threshold) {
                const int64_t a = std::min(lp.patch_id, rp.patch_id);
                const int64_t b = std::max(lp.patch_id, rp.patch_id);
                result.links.push_back({a, b, ConstraintSource::LR});
            }
        }
    }
    std::sort(result.links.begin(), result.links.end(), [](const HardLink& x, const HardLink& y) {
        return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    return result;
}

std::vector<HardLink> generate_rsm_constraints(const GrayImage& img_a,
                                               const std::vector<PatchRecord>& patches_a,
                                               const GrayImage& img_b,
                                               const std::vector<PatchRecord>& patches_b,
                                               const RsmConfig& cfg) {
    if (!patches_a.empty() && !patches_b.empty())
        check_rsm_pair(patches_a.front(), patches_b.front());

    // Index img_b patches by size class for nearest-center lookup.
    std::map<int, std::vector<const PatchRecord*>> by_size;
    for (const auto& p : patches_b) by_size[p.patch_size].push_back(&p);

    const int half_window = static_cast<int>(cfg.search_frac * std::min(img_b.width, img_b.height));

    // RSM partners are near-rigid views, so one probe around the image
    // center estimates the global shift; each patch is then verified in a
    // small window at its predicted location, falling back to its full
    // +-search_frac window when the local score misses the floor.
    bool have_shift = false;
    int shift_r = 0, shift_c = 0;
    {
        const int probe = std::min({img_a.width / 4, img_a.height / 4, 256});
        if (probe >= 32 && img_b.width > probe && img_b.height > probe) {
            const int pr = (img_a.height - probe) / 2;
            const int pc = (img_a.width - probe) / 2;
            GrayImage probe_img = crop(img_a, pr, pc, probe, probe);
            LocateOptions opts;
            opts.row0 = pr - half_window;
            opts.col0 = pc - half_window;
            opts.row1 = pr + half_window + 1;
            opts.col1 = pc + half_window + 1;
            try {
                MatchResult pm = locate_template(probe_img, img_b, 1.0, opts);
                if (pm.score >= cfg.min_score) {
                    have_shift = true;
                    shift_r = pm.row - pr;
                    shift_c = pm.col - pc;
                }
            } catch (const std::invalid_argument&) {
            }
        }
    }

    std::vector<HardLink> links(patches_a.size(), HardLink{-1, -1, ConstraintSource::RSM});
    parallel_for(patches_a.size(), [&](size_t i) {
        const PatchRecord& pa = patches_a[i];
        auto it = by_size.find(pa.patch_size);
        if (it == by_size.end()) return;
        const int P = pa.patch_size;
        const int r0 = pa.top_row(), c0 = pa.left_col();
        if (P > img_a.height || P > img_a.width) return;

        GrayImage templ = crop(img_a, r0, c0, P, P);
        auto search = [&](int wr0, int wc0, int wr1, int wc1) {
            LocateOptions opts;
            opts.row0 = wr0;
            opts.col0 = wc0;
            opts.row1 = wr1;
            opts.col1 = wc1;
            return locate_template(templ, img_b, 1.0, opts);
        };
        MatchResult m{0, 0, -2.0};
        if (have_shift) {
            const int rr = r0 + shift_r, cc = c0 + shift_c;
            try {
                m = search(rr - 8, cc - 8, rr + 9, cc + 9);
            } catch (const std::invalid_argument&) {
            }
        }
        if (m.score < cfg.min_score) {
            try {
                m = search(r0 - half_window, c0 - half_window, r0 + half_window + 1,
                           c0 + half_window + 1);
            } catch (const std::invalid_argument&) {
                return;  // window degenerate near the border
            }
        }
        if (m.score < cfg.min_score) return;

        // Target: the same-size img_b patch whose window contains the match
        // center, nearest center first (windows overlap at 50% stride).
        const double mr = m.row + P / 2.0;
        const double mc = m.col + P / 2.0;
        const PatchRecord* best = nullptr;
        double best_d = 0.0;
        for (const PatchRecord* pb : it->second) {
            if (std::fabs(pb->center_row - mr) > P / 2.0 ||
                std::fabs(pb->center_col - mc) > P / 2.0)
                continue;
            const double dr = pb->center_row - mr, dc = pb->center_col - mc;
            const double d = dr * dr + dc * dc;
            if (!best || d < best_d || (d == best_d && pb->patch_id < best->patch_id)) {
                best = pb;
                best_d = d;
            }
        }
        if (best)
            links[i] = {std::min(pa.patch_id, best->patch_id),
                        std::max(pa.patch_id, best->patch_id), ConstraintSource::RSM};
    });

    std::erase_if(links, [](const HardLink& l) { return l.a < 0; });
    std::sort(links.begin(), links.end(), [](const HardLink& x, const HardLink& y) {
        return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    return links;
}

ConstraintGenStats generate_constraints(const Dataset& ds,
                                        const std::vector<PatchRecord>& patches,
                                        const ConstraintGenConfig& cfg, ConstraintSet& out) {
    ConstraintGenStats stats;

    std::map<int64_t, std::vector<PatchRecord>> by_image;
    for (const auto& p : patches) by_image[p.image_id].push_back(p);

    if (cfg.enable_neighbor) {
        std::vector<int64_t> image_ids;
        for (const auto& [id, _] : by_image) image_ids.push_back(id);
        std::vector<std::vector<SoftLink>> slots(image_ids.size());
        parallel_for(image_ids.size(), [&](size_t i) {
            const ImageEntry* entry = ds.find_image(image_ids[i]);
            if (!entry) return;
            auto depth = load_depth(ds, *entry);
            slots[i] = generate_neighbor_constraints(by_image[image_ids[i]], cfg.similarity,
                                                     depth ? &*depth : nullptr);
        });
        for (const auto& s : slots) {
            stats.neighbor_links += s.size();
            out.soft_links.insert(out.soft_links.end(), s.begin(), s.end());
        }
    }

    if (cfg.enable_lr) {
        // Pair each Left with the Right sharing (site, drive, pose, rsm).
        std::map<std::tuple<int, int, int, int>, std::pair<const ImageEntry*, const ImageEntry*>>
            pairs;
        for (const auto& e : ds.images) {
            if (e.eye == Eye::Mono) continue;
            auto key = std::make_tuple(e.site, e.drive, e.pose, e.rsm_count);
            auto& slot = pairs[key];
            if (e.eye == Eye::Left && !slot.first) slot.first = &e;
            if (e.eye == Eye::Right && !slot.second) slot.second = &e;
        }
        for (const auto& [key, pr] : pairs) {
            if (!pr.first || !pr.second) continue;
            auto li = by_image.find(pr.first->image_id);
            auto ri = by_image.find(pr.second->image_id);
            if (li == by_image.end() || ri == by_image.end()) continue;
            ++stats.lr_pairs;
            GrayImage left = to_gray(load_image(ds, *pr.first));
            GrayImage right = to_gray(load_image(ds, *pr.second));
            LrResult res = generate_lr_constraints(left, li->second, right, ri->second, cfg.lr);
            if (res.skipped) {
                ++stats.lr_skipped;
            } else {
                stats.lr_links += res.links.size();
                out.hard_links.insert(out.hard_links.end(), res.links.begin(), res.links.end());
            }
        }
    }

    if (cfg.enable_rsm) {
        // Pair images sharing (site, drive, pose, eye) with |delta rsm| = 2,
        // lower rsm as the source side.
        std::vector<const ImageEntry*> entries;
        for (const auto& e : ds.images) entries.push_back(&e);
        for (const auto* a : entries) {
            for (const auto* b : entries) {
                if (a->site != b->site || a->drive != b->drive || a->pose != b->pose) continue;
                if (a->eye != b->eye) continue;
                if (b->rsm_count - a->rsm_count != 2) continue;
                auto ai = by_image.find(a->image_id);
                auto bi = by_image.find(b->image_id);
                if (ai == by_image.end() || bi == by_image.end()) continue;
                ++stats.rsm_pairs;
                GrayImage ga = to_gray(load_image(ds, *a));
                GrayImage gb = to_gray(load_image(ds, *b));
                auto links = generate_rsm_constraints(ga, ai->second, gb, bi->second, cfg.rsm);
                stats.rsm_links += links.size();
                out.hard_links.insert(out.hard_links.end(), links.begin(), links.end());
            }
        }
    }

    dedup_constraints(out);
    return stats;
}

}  // namespace terraclust
