#include "terraclust/match.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "terraclust/parallel.hpp"

namespace terraclust {

namespace {

constexpr double kVarianceEps = 1e-12;

GrayImage scale_template(const GrayImage& templ, double scale) {
    if (scale == 1.0) return templ;
    if (scale <= 0.0) throw std::invalid_argument("ncc_match: scale must be positive");
    const int w = std::max(1, static_cast<int>(std::llround(templ.width * scale)));
    const int h = std::max(1, static_cast<int>(std::llround(templ.height * scale)));
    return resize_area(templ, w, h);
}

// Summed-area tables over the scene for O(1) window sums.
struct Integrals {
    int width = 0, height = 0;
    std::vector<double> s1, s2;  // (h+1) x (w+1)

    explicit Integrals(const GrayImage& img) : width(img.width), height(img.height) {
        const size_t stride = width + 1;
        s1.assign(stride * (height + 1), 0.0);
        s2.assign(stride * (height + 1), 0.0);
        for (int r = 0; r < height; ++r) {
            double row1 = 0.0, row2 = 0.0;
            for (int c = 0; c < width; ++c) {
                const double v = img.at(r, c);
                row1 += v;
                row2 += v * v;
                s1[(r + 1) * stride + c + 1] = s1[r * stride + c + 1] + row1;
                s2[(r + 1) * stride + c + 1] = s2[r * stride + c + 1] + row2;
            }
        }
    }

    double sum(int r, int c, int h, int w) const {
        const size_t stride = width + 1;
        return s1[(r + h) * stride + c + w] - s1[r * stride + c + w] -
               s1[(r + h) * stride + c] + s1[r * stride + c];
    }
    double sum_sq(int r, int c, int h, int w) const {
        const size_t stride = width + 1;
        return s2[(r + h) * stride + c + w] - s2[r * stride + c + w] -
               s2[(r + h) * stride + c] + s2[r * stride + c];
    }
};

struct Candidate {
    double score;
    int row, col;
};

// Exact ZNCC over the placement window; optionally keeps the best
// `n_best` local candidates (for the pyramid prescan).
MatchResult ncc_search(const GrayImage& templ, const GrayImage& scene, int row0, int col0,
                       int row1, int col1, std::vector<Candidate>* peaks = nullptr,
                       int n_peaks = 0, int peak_sep = 0) {
    const int th = templ.height, tw = templ.width;
    row0 = std::max(0, row0);
    col0 = std::max(0, col0);
    row1 = std::min(row1, scene.height - th + 1);
    col1 = std::min(col1, scene.width - tw + 1);
    if (row0 >= row1 || col0 >= col1)
        throw std::invalid_argument("ncc: empty placement window");

    const double n = static_cast<double>(th) * tw;
    double tmean = 0.0;
    for (double v : templ.values) tmean += v;
    tmean /= n;
    std::vector<double> tz(templ.values.size());
    double tvar = 0.0;
    for (size_t i = 0; i < tz.size(); ++i) {
        tz[i] = templ.values[i] - tmean;
        tvar += tz[i] * tz[i];
    }
    if (tvar <= kVarianceEps) {
        // Score is 0 everywhere; smallest placement wins the tie.
        return {row0, col0, 0.0};
    }
    const double tnorm = std::sqrt(tvar);
    const Integrals integrals(scene);

    const int nrows = row1 - row0;
    std::vector<MatchResult> row_best(nrows, {0, 0, -2.0});
    std::vector<std::vector<Candidate>> row_peaks(peaks ? nrows : 0);

    // Small searches (and searches nested inside an already-parallel caller)
    // run serially; the work split never changes the result either way.
    const long long work = static_cast<long long>(nrows) * (col1 - col0) *
                           static_cast<long long>(th) * tw;
    auto scan_row = [&](size_t ri) {
        const int r = row0 + static_cast<int>(ri);
        MatchResult best{0, 0, -2.0};
        for (int c = col0; c < col1; ++c) {
            // Numerator sum((T - Tmean) * S) equals sum((T - Tmean)(S - Smean))
            // because the zero-meaned template sums to zero.
            double num = 0.0;
            for (int tr = 0; tr < th; ++tr) {
                const double* srow = &scene.values[static_cast<size_t>(r + tr) * scene.width + c];
                const double* trow = &tz[static_cast<size_t>(tr) * tw];
                double acc = 0.0;
                for (int tc = 0; tc < tw; ++tc) acc += trow[tc] * srow[tc];
                num += acc;
            }
            const double ssum = integrals.sum(r, c, th, tw);
            const double svar = integrals.sum_sq(r, c, th, tw) - ssum * ssum / n;
            double score = 0.0;
            if (svar > kVarianceEps) score = num / (tnorm * std::sqrt(svar));
            if (score > best.score) best = {r, c, score};
            if (peaks) {
                auto& rp = row_peaks[ri];
                if (static_cast<int>(rp.size()) < n_peaks ||
                    score > rp.back().score)
                {
                    rp.push_back({score, r, c});
                    std::sort(rp.begin(), rp.end(), [](const Candidate& a, const Candidate& b) {
                        return a.score > b.score;
                    });
                    if (static_cast<int>(rp.size()) > n_peaks) rp.pop_back();
                }
            }
        }
        row_best[ri] = best;
    };
    if (work <= (1LL << 25)) {
        for (size_t ri = 0; ri < static_cast<size_t>(nrows); ++ri) scan_row(ri);
    } else {
        parallel_for(static_cast<size_t>(nrows), scan_row);
    }

    MatchResult best{row0, col0, -2.0};
    for (const auto& rb : row_best)
        if (rb.score > best.score) best = rb;  // rows scanned in order: smallest (r,c) keeps ties
    if (best.score <= -2.0) best = {row0, col0, 0.0};

    if (peaks) {
        std::vector<Candidate> all;
        for (const auto& rp : row_peaks) all.insert(all.end(), rp.begin(), rp.end());
        std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
            if (a.score != b.score) return a.score > b.score;
            return std::tie(a.row, a.col) < std::tie(b.row, b.col);
        });
        // Non-maximum suppression so the refined windows are distinct.
        for (const auto& cand : all) {
            bool close = false;
            for (const auto& kept : *peaks)
                if (std::abs(kept.row - cand.row) <= peak_sep &&
                    std::abs(kept.col - cand.col) <= peak_sep) {
                    close = true;
                    break;
                }
            if (!close) peaks->push_back(cand);
            if (static_cast<int>(peaks->size()) >= n_peaks) break;
        }
    }
    return best;
}

GrayImage downsample_by(const GrayImage& img, int factor) {
    return resize_area(img, std::max(1, img.width / factor), std::max(1, img.height / factor));
}

}  // namespace

MatchResult ncc_match_in(const GrayImage& templ, const GrayImage& scene, int row0, int col0,
                         int row1, int col1) {
    if (templ.empty() || scene.empty())
        throw std::invalid_argument("ncc_match: empty template or scene");
    if (templ.width > scene.width || templ.height > scene.height)
        throw std::invalid_argument("ncc_match: template larger than scene");
    return ncc_search(templ, scene, row0, col0, row1, col1);
}

MatchResult ncc_match(const GrayImage& templ, const GrayImage& scene, double scale) {
    const GrayImage scaled = scale_template(templ, scale);
    if (scaled.width > scene.width || scaled.height > scene.height)
        throw std::invalid_argument("ncc_match: scaled template larger than scene");
    return ncc_match_in(scaled, scene, 0, 0, scene.height, scene.width);
}

MatchResult locate_template(const GrayImage& templ, const GrayImage& scene, double scale,
                            const LocateOptions& opts) {
    const GrayImage scaled = scale_template(templ, scale);
    if (scaled.width > scene.width || scaled.height > scene.height)
        throw std::invalid_argument("locate_template: scaled template larger than scene");

    int row0 = std::max(0, opts.row0);
    int col0 = std::max(0, opts.col0);
    int row1 = opts.row1 < 0 ? scene.height - scaled.height + 1
                             : std::min(opts.row1, scene.height - scaled.height + 1);
    int col1 = opts.col1 < 0 ? scene.width - scaled.width + 1
                             : std::min(opts.col1, scene.width - scaled.width + 1);
    if (row0 >= row1 || col0 >= col1)
        throw std::invalid_argument("locate_template: empty search window");

    const long long positions =
        static_cast<long long>(row1 - row0) * (col1 - col0);
    const long long area = static_cast<long long>(scaled.width) * scaled.height;
    if (positions * area <= opts.direct_budget)
        return ncc_match_in(scaled, scene, row0, col0, row1, col1);

    // Coarse prescan on a box-filter pyramid. The factor keeps the template
    // at least coarse_min_side wide so texture survives the downsampling.
    int factor = 1;
    while (factor * 2 <= std::min(scaled.width, scaled.height) / opts.coarse_min_side)
        factor *= 2;
    if (factor <= 1)
        return ncc_match_in(scaled, scene, row0, col0, row1, col1);

    const GrayImage ct = downsample_by(scaled, factor);
    const GrayImage cs = downsample_by(scene, factor);
    std::vector<Candidate> peaks;
    ncc_search(ct, cs, row0 / factor, col0 / factor,
               std::min(row1 / factor + 1, cs.height - ct.height + 1),
               std::min(col1 / factor + 1, cs.width - ct.width + 1), &peaks,
               opts.top_candidates, std::max(1, opts.coarse_min_side / 2));

    // Re-score each candidate exactly at full resolution. The box pyramid
    // localizes within about one coarse pixel, so factor + 4 covers it.
    MatchResult best{row0, col0, -2.0};
    const int margin = factor + 4;
    for (const auto& cand : peaks) {
        const int cr = cand.row * factor;
        const int cc = cand.col * factor;
        const int r0 = std::max(row0, cr - margin);
        const int c0 = std::max(col0, cc - margin);
        const int r1 = std::min(row1, cr + margin + 1);
        const int c1 = std::min(col1, cc + margin + 1);
        if (r0 >= r1 || c0 >= c1) continue;
        MatchResult m = ncc_match_in(scaled, scene, r0, c0, r1, c1);
        if (m.score > best.score ||
            (m.score == best.score && std::tie(m.row, m.col) < std::tie(best.row, best.col)))
            best = m;
    }
    if (best.score <= -2.0) return ncc_match_in(scaled, scene, row0, col0, row1, col1);
    return best;
}

}  // namespace terraclust
