#include "terraclust/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "terraclust/parallel.hpp"

namespace terraclust {

double db_index(const EmbeddingSet& embeddings, const std::vector<int>& assignments) {
    const int64_t n = embeddings.n_patches;
    const int64_t dim = embeddings.dim;
    if (assignments.size() != static_cast<size_t>(n))
        throw std::invalid_argument("db_index: assignment length mismatch");

    int k = 0;
    for (int a : assignments) k = std::max(k, a + 1);
    std::vector<double> centroid(static_cast<size_t>(k) * dim, 0.0);
    std::vector<int64_t> count(k, 0);
    for (int64_t i = 0; i < n; ++i) {
        const float* x = embeddings.row(i);
        double* c = &centroid[static_cast<size_t>(assignments[i]) * dim];
        for (int64_t d = 0; d < dim; ++d) c[d] += x[d];
        ++count[assignments[i]];
    }
    std::vector<int> live;
    for (int c = 0; c < k; ++c) {
        if (count[c] == 0) continue;
        for (int64_t d = 0; d < dim; ++d) centroid[static_cast<size_t>(c) * dim + d] /= count[c];
        live.push_back(c);
    }
    if (live.size() < 2) throw std::invalid_argument("db_index: need >= 2 non-empty clusters");

    // sigma_i: mean member distance to the centroid.
    std::vector<double> sigma(k, 0.0);
    for (int64_t i = 0; i < n; ++i) {
        const float* x = embeddings.row(i);
        const double* c = &centroid[static_cast<size_t>(assignments[i]) * dim];
        double d2 = 0.0;
        for (int64_t d = 0; d < dim; ++d) {
            const double diff = x[d] - c[d];
            d2 += diff * diff;
        }
        sigma[assignments[i]] += std::sqrt(d2);
    }
    for (int c : live) sigma[c] /= static_cast<double>(count[c]);

    double total = 0.0;
    for (size_t ii = 0; ii < live.size(); ++ii) {
        const int i = live[ii];
        double worst = 0.0;
        for (size_t jj = 0; jj < live.size(); ++jj) {
            if (ii == jj) continue;
            const int j = live[jj];
            double d2 = 0.0;
            for (int64_t d = 0; d < dim; ++d) {
                const double diff = centroid[static_cast<size_t>(i) * dim + d] -
                                    centroid[static_cast<size_t>(j) * dim + d];
                d2 += diff * diff;
            }
            const double dist = std::sqrt(d2);
            const double ratio = dist > 0.0 ? (sigma[i] + sigma[j]) / dist
                                            : std::numeric_limits<double>::infinity();
            worst = std::max(worst, ratio);
        }
        total += worst;
    }
    return total / static_cast<double>(live.size());
}

PrecisionResult precision_at_k(const EmbeddingSet& gallery_embeddings,
                               const std::vector<PatchRecord>& gallery,
                               const float* query_embedding, const PatchRecord& query, int k) {
    if (query.label < 0) throw std::invalid_argument("precision_at_k: query must carry a label");
    if (gallery.size() != static_cast<size_t>(gallery_embeddings.n_patches))
        throw std::invalid_argument("precision_at_k: gallery size mismatch");
    const int64_t dim = gallery_embeddings.dim;

    struct Hit {
        double d2;
        int64_t patch_id;
        int label;
    };
    std::vector<Hit> hits;
    for (size_t g = 0; g < gallery.size(); ++g) {
        const PatchRecord& p = gallery[g];
        if (p.site == query.site && p.drive == query.drive) continue;  // leakage exclusion
        if (p.patch_id == query.patch_id) continue;
        const float* x = gallery_embeddings.row(static_cast<int64_t>(g));
        double d2 = 0.0;
        for (int64_t d = 0; d < dim; ++d) {
            const double diff = x[d] - query_embedding[d];
            d2 += diff * diff;
        }
        hits.push_back({d2, p.patch_id, p.label});
    }
    const int take = std::min<int>(k, static_cast<int>(hits.size()));
    std::partial_sort(hits.begin(), hits.begin() + take, hits.end(),
                      [](const Hit& a, const Hit& b) {
                          if (a.d2 != b.d2) return a.d2 < b.d2;
                          return a.patch_id < b.patch_id;
                      });
    PrecisionResult res;
    res.retrieved = take;
    res.short_gallery = take < k;
    if (take == 0) return res;
    int match = 0;
    for (int i = 0; i < take; ++i)
        if (hits[i].label == query.label) ++match;
    res.precision = static_cast<double>(match) / take;
    return res;
}

RetrievalSummary mean_precision_at_k(const EmbeddingSet& embeddings,
                                     const std::vector<PatchRecord>& patches, int k) {
    std::vector<int64_t> queries;
    for (size_t i = 0; i < patches.size(); ++i)
        if (patches[i].label >= 0) queries.push_back(static_cast<int64_t>(i));

    std::vector<PrecisionResult> results(queries.size());
    parallel_for(queries.size(), [&](size_t qi) {
        const int64_t i = queries[qi];
        results[qi] = precision_at_k(embeddings, patches, embeddings.row(i), patches[i], k);
    });

    RetrievalSummary summary;
    for (const auto& r : results) {
        if (r.retrieved == 0) continue;
        summary.mean_precision += r.precision;
        ++summary.n_queries;
        if (r.short_gallery) ++summary.short_galleries;
    }
    if (summary.n_queries > 0) summary.mean_precision /= summary.n_queries;
    return summary;
}

double nmi(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
    if (labels_a.size() != labels_b.size())
        throw std::invalid_argument("nmi: length mismatch");
    if (labels_a.empty()) throw std::invalid_argument("nmi: empty input");
    const double n = static_cast<double>(labels_a.size());

    std::map<int, double> pa, pb;
    std::map<std::pair<int, int>, double> pab;
    for (size_t i = 0; i < labels_a.size(); ++i) {
        pa[labels_a[i]] += 1.0;
        pb[labels_b[i]] += 1.0;
        pab[{labels_a[i], labels_b[i]}] += 1.0;
    }
    double ha = 0.0, hb = 0.0, mi = 0.0;
    for (auto& [l, c] : pa) {
        const double p = c / n;
        ha -= p * std::log(p);
    }
    for (auto& [l, c] : pb) {
        const double p = c / n;
        hb -= p * std::log(p);
    }
    for (auto& [lp, c] : pab) {
        const double p = c / n;
        const double pxa = pa[lp.first] / n;
        const double pxb = pb[lp.second] / n;
        mi += p * std::log(p / (pxa * pxb));
    }
    if (ha + hb == 0.0) return 1.0;  // both single-cluster
    const double value = 2.0 * mi / (ha + hb);
    return std::clamp(value, 0.0, 1.0);
}

void split_train_test(std::vector<PatchRecord>& patches, const std::vector<ImageDims>& images,
                      double boundary_fraction) {
    std::unordered_map<int64_t, double> boundary;
    for (const auto& img : images) boundary[img.image_id] = boundary_fraction * img.width;
    for (auto& p : patches) {
        auto it = boundary.find(p.image_id);
        if (it == boundary.end()) {
            p.split = Split::Excluded;
            continue;
        }
        const double b = it->second;
        const double lo = p.left_col();
        const double hi = lo + p.patch_size;  // window is [lo, hi)
        if (hi <= b)
            p.split = Split::Train;
        else if (lo >= b)
            p.split = Split::Test;
        else
            p.split = Split::Excluded;
    }
}

HomogeneityReport homogeneity_report(const std::vector<int>& assignments,
                                     const std::vector<int>& truth_labels, int k,
                                     double threshold) {
    if (assignments.size() != truth_labels.size())
        throw std::invalid_argument("homogeneity_report: length mismatch");
    HomogeneityReport rep;
    rep.majority_fraction.assign(k, -1.0);
    rep.majority_label.assign(k, -1);
    std::vector<std::map<int, int>> counts(k);
    std::vector<int> totals(k, 0);
    for (size_t i = 0; i < assignments.size(); ++i) {
        if (truth_labels[i] < 0) continue;
        const int c = assignments[i];
        if (c < 0 || c >= k) throw std::invalid_argument("homogeneity_report: bad assignment");
        ++counts[c][truth_labels[i]];
        ++totals[c];
    }
    for (int c = 0; c < k; ++c) {
        if (totals[c] == 0) continue;
        ++rep.nonempty_clusters;
        int best_label = -1, best_count = 0;
        for (const auto& [label, cnt] : counts[c]) {
            if (cnt > best_count) {
                best_count = cnt;
                best_label = label;
            }
        }
        rep.majority_fraction[c] = static_cast<double>(best_count) / totals[c];
        rep.majority_label[c] = best_label;
        if (rep.majority_fraction[c] > threshold) ++rep.homogeneous_clusters;
    }
    return rep;
}

}  // namespace terraclust
